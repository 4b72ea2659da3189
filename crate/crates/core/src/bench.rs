//! Wall-clock comparison of hologram generators.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hologram::{design_octahedral, ib_baseline_hologram, make_focus_hologram, octahedron_vertexes_oriented};
use crate::model::{MediumConfig, TimingConfig, TransducerArray, Vec3};
use crate::hologram::HologramConfig;

/// Median wall time of `reps` calls, in milliseconds.
pub fn median_ms<T>(reps: usize, mut f: impl FnMut() -> Result<T>) -> Result<f64> {
    let mut times = Vec::with_capacity(reps.max(1));
    for _ in 0..reps.max(1) {
        let start = Instant::now();
        std::hint::black_box(f()?);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    Ok(crate::control::median(&times))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub elements: usize,
    pub reps: usize,
    pub focus_ms: f64,
    pub sm_octahedral_ms: f64,
    pub ib_ms: f64,
    pub ib_iterations: usize,
    /// `ib_ms / sm_octahedral_ms`.
    pub ib_over_sm: f64,
    /// SM fits inside `t_trans`.
    pub sm_fits_dispatch: bool,
    /// SM fits inside one hologram refresh period.
    pub sm_fits_refresh: bool,
}

/// Times the focus, SM octahedral and IB generators at `center`.
pub fn run_bench(
    array: &TransducerArray,
    medium: &MediumConfig,
    hologram: &HologramConfig,
    timing: &TimingConfig,
    center: Vec3,
    reps: usize,
    ib_reps: usize,
) -> Result<BenchReport> {
    let rot = hologram.rotation();
    let d = hologram.octahedron_diameter;
    let focus_ms = median_ms(reps, || make_focus_hologram(array, center, medium))?;
    let sm_ms = median_ms(reps, || design_octahedral(array, center, d, medium, hologram.sm_phasing, &rot))?;
    let targets = octahedron_vertexes_oriented(center, d, &rot)?;
    let ib_ms = median_ms(ib_reps, || ib_baseline_hologram(array, &targets, medium, hologram.ib_iterations))?;
    Ok(BenchReport {
        elements: array.len(),
        reps,
        focus_ms,
        sm_octahedral_ms: sm_ms,
        ib_ms,
        ib_iterations: hologram.ib_iterations,
        ib_over_sm: ib_ms / sm_ms,
        sm_fits_dispatch: sm_ms < timing.t_trans * 1e3,
        sm_fits_refresh: sm_ms < 1e3 / timing.poh_update_fps,
    })
}
