//! Complex pressure from a driven array.
//!
//! Each element is a point source: `p(r) = Σ (A/d)·D(θ)·exp(j(φ − k·d))`,
//! where `D` is 1 for monopoles or a separable square-piston far-field factor
//! when enabled. There is no attenuation and no reflection from the tank.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hologram::{octahedron_vertexes_oriented, PhaseHologram, TrapSpec};
use crate::model::{wavenumber, MediumConfig, ParticleState, TankConfig, TransducerArray, Vec3};

pub type ComplexPressure = Complex64;

/// Closest a field point may come to an element center.
pub const SINGULARITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directivity {
    #[default]
    Monopole,
    SquarePiston,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub directivity: Directivity,
}

/// Array + medium + hologram, precomputed for repeated field evaluation.
#[derive(Debug, Clone)]
pub struct FieldEngine {
    elements: Vec<Vec3>,
    /// `A·exp(jφ)` per element; zero for inactive elements.
    drive: Vec<Complex64>,
    k: f64,
    half_width: f64,
    directivity: Directivity,
    wavelength: f64,
}

impl FieldEngine {
    pub fn new(array: &TransducerArray, hologram: &PhaseHologram, medium: &MediumConfig) -> Result<Self> {
        if !hologram.matches(array) {
            return Err(Error::config(
                "hologram",
                format!(
                    "hologram is {}x{} but the array is {}x{}",
                    hologram.rows(),
                    hologram.cols(),
                    array.rows,
                    array.cols
                ),
            ));
        }
        let k = wavenumber(medium, array)?;
        let amp = array.emission_amplitude;
        Ok(Self {
            elements: array.element_centers(),
            drive: hologram
                .phases()
                .iter()
                .map(|&phi| Complex64::from_polar(amp, phi))
                .collect(),
            k,
            half_width: array.pitch / 2.0,
            directivity: Directivity::Monopole,
            wavelength: std::f64::consts::TAU / k,
        })
    }

    pub fn with_directivity(mut self, directivity: Directivity) -> Self {
        self.directivity = directivity;
        self
    }

    /// Silences every element whose mask entry is false.
    pub fn with_active(mut self, active: &[bool]) -> Self {
        assert_eq!(active.len(), self.drive.len(), "mask length");
        for (d, on) in self.drive.iter_mut().zip(active) {
            if !on {
                *d = Complex64::new(0.0, 0.0);
            }
        }
        self
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn pressure(&self, point: Vec3) -> Result<ComplexPressure> {
        let mut sum = Complex64::new(0.0, 0.0);
        for (idx, (e, drive)) in self.elements.iter().zip(&self.drive).enumerate() {
            let r = point - *e;
            let d = r.norm();
            if d < SINGULARITY_TOLERANCE {
                return Err(Error::Singularity {
                    point: point.to_string(),
                    element: idx,
                    tolerance: SINGULARITY_TOLERANCE,
                });
            }
            let dir = match self.directivity {
                Directivity::Monopole => 1.0,
                Directivity::SquarePiston => {
                    sinc(self.k * self.half_width * r.x / d) * sinc(self.k * self.half_width * r.y / d)
                }
            };
            let (s, c) = (-self.k * d).sin_cos();
            sum += drive * Complex64::new(c, s) * (dir / d);
        }
        Ok(sum)
    }

    pub fn magnitude(&self, point: Vec3) -> Result<f64> {
        Ok(self.pressure(point)?.norm())
    }

    /// Pressure gradient by central differences with step `h` (mm).
    pub fn gradient(&self, point: Vec3, h: f64) -> Result<[ComplexPressure; 3]> {
        let mut g = [Complex64::new(0.0, 0.0); 3];
        for (axis, slot) in [Vec3::X, Vec3::Y, Vec3::Z].into_iter().zip(g.iter_mut()) {
            let plus = self.pressure(point + axis * h)?;
            let minus = self.pressure(point - axis * h)?;
            *slot = (plus - minus) / (2.0 * h);
        }
        Ok(g)
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Convenience wrapper for a one-off evaluation with monopole sources.
pub fn pressure_at(
    array: &TransducerArray,
    hologram: &PhaseHologram,
    point: Vec3,
    medium: &MediumConfig,
) -> Result<ComplexPressure> {
    FieldEngine::new(array, hologram, medium)?.pressure(point)
}

/// Sampling plane, fixed by the coordinate held constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "plane", rename_all = "lowercase")]
pub enum Plane {
    Xoy { z: f64 },
    Xoz { y: f64 },
    Yoz { x: f64 },
}

impl Plane {
    /// Maps in-plane coordinates `(a, b)` to a point.
    pub fn point(&self, a: f64, b: f64) -> Vec3 {
        match *self {
            Plane::Xoy { z } => Vec3::new(a, b, z),
            Plane::Xoz { y } => Vec3::new(a, y, b),
            Plane::Yoz { x } => Vec3::new(x, a, b),
        }
    }

    pub fn axis_names(&self) -> (&'static str, &'static str) {
        match self {
            Plane::Xoy { .. } => ("x", "y"),
            Plane::Xoz { .. } => ("x", "z"),
            Plane::Yoz { .. } => ("y", "z"),
        }
    }
}

/// Rectangle in plane coordinates, mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceBounds {
    pub a_min: f64,
    pub a_max: f64,
    pub b_min: f64,
    pub b_max: f64,
}

impl SliceBounds {
    pub fn centered(a: f64, b: f64, half_a: f64, half_b: f64) -> Self {
        Self {
            a_min: a - half_a,
            a_max: a + half_a,
            b_min: b - half_b,
            b_max: b + half_b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSlice {
    pub plane: Plane,
    /// In-plane coordinates of sample (0, 0).
    pub origin: (f64, f64),
    pub spacing: f64,
    /// Samples along `a`.
    pub width: usize,
    /// Samples along `b`.
    pub height: usize,
    /// Row-major over `b`, then `a`.
    pub values: Vec<ComplexPressure>,
}

impl FieldSlice {
    pub fn coords(&self, ia: usize, ib: usize) -> (f64, f64) {
        (
            self.origin.0 + ia as f64 * self.spacing,
            self.origin.1 + ib as f64 * self.spacing,
        )
    }

    pub fn point(&self, ia: usize, ib: usize) -> Vec3 {
        let (a, b) = self.coords(ia, ib);
        self.plane.point(a, b)
    }

    pub fn value(&self, ia: usize, ib: usize) -> ComplexPressure {
        self.values[ib * self.width + ia]
    }

    /// Grid indexes of the largest magnitude (first on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, v) in self.values.iter().enumerate() {
            let m = v.norm();
            if m > best.1 {
                best = (i, m);
            }
        }
        (best.0 % self.width, best.0 / self.width)
    }

    pub fn max_magnitude(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Extent along each in-plane axis of the connected region around the
    /// peak where `|p|` is at least `ratio` of the peak, measured through the
    /// peak along the two grid axes.
    pub fn extent_through_peak(&self, ratio: f64) -> (f64, f64) {
        let (pa, pb) = self.argmax();
        let thr = self.value(pa, pb).norm() * ratio;
        let run = |len: usize, pos: usize, get: &dyn Fn(usize) -> f64| {
            let mut lo = pos;
            while lo > 0 && get(lo - 1) >= thr {
                lo -= 1;
            }
            let mut hi = pos;
            while hi + 1 < len && get(hi + 1) >= thr {
                hi += 1;
            }
            (hi - lo + 1) as f64 * self.spacing
        };
        (
            run(self.width, pa, &|i| self.value(i, pb).norm()),
            run(self.height, pb, &|j| self.value(pa, j).norm()),
        )
    }

    /// Columns: `a, b, re, im, magnitude`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let (na, nb) = self.plane.axis_names();
        writeln!(w, "{na},{nb},re,im,magnitude")?;
        for ib in 0..self.height {
            for ia in 0..self.width {
                let (a, b) = self.coords(ia, ib);
                let v = self.value(ia, ib);
                writeln!(w, "{a:.6},{b:.6},{:.9e},{:.9e},{:.9e}", v.re, v.im, v.norm())?;
            }
        }
        Ok(())
    }

    /// 16-bit binary PGM of `|p|`, min-max normalized. Row 0 is the
    /// largest `b` so the image reads with `b` pointing up.
    pub fn write_pgm16<W: Write>(&self, mut w: W) -> Result<()> {
        let mags: Vec<f64> = self.values.iter().map(|v| v.norm()).collect();
        let lo = mags.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = mags.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        write!(w, "P5\n{} {}\n65535\n", self.width, self.height)?;
        let mut bytes = Vec::with_capacity(mags.len() * 2);
        for ib in (0..self.height).rev() {
            for ia in 0..self.width {
                let m = mags[ib * self.width + ia];
                let level = if span > 0.0 {
                    ((m - lo) / span * 65535.0).round() as u16
                } else {
                    0
                };
                bytes.extend_from_slice(&level.to_be_bytes());
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }
}

/// Evaluates `|p|` on a regular grid. Rows are computed in parallel; each
/// cell sums elements in a fixed order, so output is deterministic.
pub fn field_slice(
    engine: &FieldEngine,
    tank: &TankConfig,
    plane: Plane,
    bounds: SliceBounds,
    resolution: f64,
) -> Result<FieldSlice> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::geometry(format!("slice resolution must be > 0 (got {resolution})")));
    }
    if !(bounds.a_max > bounds.a_min && bounds.b_max > bounds.b_min) {
        return Err(Error::geometry("degenerate slice bounds"));
    }
    let corners = [
        plane.point(bounds.a_min, bounds.b_min),
        plane.point(bounds.a_max, bounds.b_max),
    ];
    if corners.iter().any(|c| !tank.contains(*c)) {
        return Err(Error::geometry("slice extends outside the tank"));
    }
    if resolution > engine.wavelength() / 4.0 {
        log::warn!(
            "slice resolution {resolution} mm is coarser than λ/4 = {:.4} mm",
            engine.wavelength() / 4.0
        );
    }
    let width = ((bounds.a_max - bounds.a_min) / resolution + 1e-9).floor() as usize + 1;
    let height = ((bounds.b_max - bounds.b_min) / resolution + 1e-9).floor() as usize + 1;
    let rows: Vec<Vec<ComplexPressure>> = (0..height)
        .into_par_iter()
        .map(|ib| {
            let b = bounds.b_min + ib as f64 * resolution;
            (0..width)
                .map(|ia| engine.pressure(plane.point(bounds.a_min + ia as f64 * resolution, b)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(FieldSlice {
        plane,
        origin: (bounds.a_min, bounds.b_min),
        spacing: resolution,
        width,
        height,
        values: rows.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapQuality {
    pub center_magnitude: f64,
    /// Octahedral traps only.
    pub vertex_magnitudes: Option<[f64; 6]>,
    /// `center / mean(vertex)`, octahedral traps only.
    pub contrast_ratio: Option<f64>,
    /// Focus traps only.
    pub focal_peak: Option<f64>,
    pub lateral_fwhm: Option<f64>,
    pub axial_fwhm: Option<f64>,
}

/// Samples the trap: center and vertexes for an octahedron, peak and
/// half-amplitude widths (line scans at λ/20) for a focus.
pub fn trap_quality(
    engine: &FieldEngine,
    trap: &TrapSpec,
    rotation: &nalgebra::Rotation3<f64>,
) -> Result<TrapQuality> {
    match *trap {
        TrapSpec::Octahedral { center, diameter } => {
            let verts = octahedron_vertexes_oriented(center, diameter, rotation)?;
            let c = engine.magnitude(center)?;
            let mut vm = [0.0; 6];
            for (m, v) in vm.iter_mut().zip(&verts) {
                *m = engine.magnitude(*v)?;
            }
            let mean = vm.iter().sum::<f64>() / 6.0;
            Ok(TrapQuality {
                center_magnitude: c,
                vertex_magnitudes: Some(vm),
                contrast_ratio: Some(if mean > 0.0 { c / mean } else { 0.0 }),
                focal_peak: None,
                lateral_fwhm: None,
                axial_fwhm: None,
            })
        }
        TrapSpec::Focus { point } => {
            let peak = engine.magnitude(point)?;
            let step = engine.wavelength() / 20.0;
            Ok(TrapQuality {
                center_magnitude: peak,
                vertex_magnitudes: None,
                contrast_ratio: None,
                focal_peak: Some(peak),
                lateral_fwhm: Some(half_max_width(engine, point, Vec3::X, peak, step)?),
                axial_fwhm: Some(half_max_width(engine, point, Vec3::Z, peak, step)?),
            })
        }
    }
}

/// Full width at half amplitude through `center` along `dir`.
fn half_max_width(engine: &FieldEngine, center: Vec3, dir: Vec3, peak: f64, step: f64) -> Result<f64> {
    const MAX_STEPS: usize = 4000;
    let half = peak / 2.0;
    let mut width = 0.0;
    for sign in [1.0, -1.0] {
        let mut prev = peak;
        let mut found = None;
        for n in 1..=MAX_STEPS {
            let s = n as f64 * step;
            let m = engine.magnitude(center + dir * (sign * s))?;
            if m < half {
                // linear interpolation of the crossing
                let frac = (prev - half) / (prev - m);
                found = Some(s - step + frac * step);
                break;
            }
            prev = m;
        }
        width += found.ok_or_else(|| Error::geometry("no half-amplitude crossing within scan range"))?;
    }
    Ok(width)
}

/// Small-sphere time-averaged potential in arbitrary units,
/// `U ∝ f1·|p|² − (3/2)·f2·|∇p|²/k²`, with monopole/dipole scattering
/// coefficients taken from the particle material. Positive-contrast
/// particles (f1 > 0) sink into pressure minima and negative-contrast ones
/// (f1 < 0) into maxima.
pub fn gorkov_potential(
    engine: &FieldEngine,
    tank: &TankConfig,
    medium: &MediumConfig,
    point: Vec3,
    particle: &ParticleState,
) -> Result<f64> {
    let lambda = engine.wavelength();
    let h = lambda / 50.0;
    for axis in [Vec3::X, Vec3::Y, Vec3::Z] {
        if !tank.contains(point + axis * h) || !tank.contains(point - axis * h) {
            return Err(Error::geometry(format!(
                "gradient stencil around {point} leaves the tank"
            )));
        }
    }
    if particle.diameter_mm() > lambda / 2.0 {
        log::warn!(
            "particle diameter {} mm exceeds λ/2; small-sphere potential is approximate",
            particle.diameter_mm()
        );
    }
    let (f1, f2) = scattering_coefficients(medium, particle);
    let k = engine.k;
    let p = engine.pressure(point)?;
    let grad = engine.gradient(point, h)?;
    let grad_sq: f64 = grad.iter().map(|g| g.norm_sqr()).sum();
    let r = particle.diameter_mm() / 2.0;
    let volume = 4.0 / 3.0 * std::f64::consts::PI * r * r * r;
    let stiffness = medium.density * medium.sound_speed * medium.sound_speed;
    Ok(volume / (4.0 * stiffness) * (f1 * p.norm_sqr() - 1.5 * f2 * grad_sq / (k * k)))
}

/// Monopole and dipole coefficients `(f1, f2)` for the particle material.
pub fn scattering_coefficients(medium: &MediumConfig, particle: &ParticleState) -> (f64, f64) {
    let (rho_p, c_p) = particle.contrast.material();
    let rho_0 = medium.density;
    let c_0 = medium.sound_speed;
    let f1 = 1.0 - (rho_0 * c_0 * c_0) / (rho_p * c_p * c_p);
    let f2 = 2.0 * (rho_p - rho_0) / (2.0 * rho_p + rho_0);
    (f1, f2)
}
