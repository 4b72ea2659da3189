//! Phase-only holograms for the array.
//!
//! A single focus uses the half-wave-band alignment rule: each element is
//! driven with the phase that cancels its propagation delay to the focus,
//! `φ = 2π − mod(−k·d, 2π)`, folded into `[0, 2π)`.
//!
//! An octahedral trap is built by spatial multiplexing: the array is tiled
//! with 2×3 blocks and the six elements of each block focus on the six
//! octahedron vertexes. Vertex order is always `+x, −x, +y, −y, +z, −z`
//! (before any orientation rotation).
//!
//! Iterative backpropagation is provided only as a slow comparator.

use std::f64::consts::{PI, TAU};
use std::io::{BufRead, Write};

use nalgebra::Rotation3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{wavenumber, MediumConfig, TransducerArray, Vec3};

/// Folds any angle into `[0, 2π)`.
#[inline]
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Folds any angle into `(−π, π]`.
#[inline]
pub fn wrap_signed(phi: f64) -> f64 {
    let w = wrap_phase(phi);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseHologram {
    rows: usize,
    cols: usize,
    /// Row-major, radians in `[0, 2π)`.
    phases: Vec<f64>,
}

impl PhaseHologram {
    /// Builds a hologram, folding every phase into `[0, 2π)`.
    pub fn new(rows: usize, cols: usize, phases: Vec<f64>) -> Result<Self> {
        if phases.len() != rows * cols {
            return Err(Error::Format(format!(
                "hologram has {} phases, expected {rows}x{cols}",
                phases.len()
            )));
        }
        if let Some(bad) = phases.iter().find(|p| !p.is_finite()) {
            return Err(Error::Format(format!("non-finite phase {bad}")));
        }
        Ok(Self {
            rows,
            cols,
            phases: phases.into_iter().map(wrap_phase).collect(),
        })
    }

    pub fn zeros(array: &TransducerArray) -> Self {
        Self {
            rows: array.rows,
            cols: array.cols,
            phases: vec![0.0; array.len()],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.phases[row * self.cols + col]
    }

    pub fn matches(&self, array: &TransducerArray) -> bool {
        self.rows == array.rows && self.cols == array.cols
    }

    /// Adds a constant to every phase.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            phases: self.phases.iter().map(|p| wrap_phase(p + delta)).collect(),
        }
    }

    pub fn normalized(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            phases: self.phases.iter().copied().map(wrap_phase).collect(),
        }
    }

    /// Writes `rows` lines of `cols` comma-separated phases, 9 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for row in self.phases.chunks(self.cols) {
            let line: Vec<String> = row.iter().map(|&p| format_sig(p, 9)).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut phases = Vec::new();
        let mut rows = 0;
        let mut cols = None;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        Error::Format(format!("line {}: bad phase `{}`", lineno + 1, s.trim()))
                    })
                })
                .collect::<Result<_>>()?;
            match cols {
                None => cols = Some(vals.len()),
                Some(c) if c != vals.len() => {
                    return Err(Error::Format(format!(
                        "line {}: {} columns, expected {c}",
                        lineno + 1,
                        vals.len()
                    )))
                }
                _ => {}
            }
            phases.extend(vals);
            rows += 1;
        }
        let cols = cols.ok_or_else(|| Error::Format("empty hologram file".into()))?;
        Self::new(rows, cols, phases)
    }
}

/// Formats `x` with `sig` significant digits in plain decimal notation.
pub fn format_sig(x: f64, sig: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (sig as i64 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// What the array is asked to produce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrapSpec {
    Focus { point: Vec3 },
    Octahedral { center: Vec3, diameter: f64 },
}

impl TrapSpec {
    /// The point a trapped particle should sit at.
    pub fn center(&self) -> Vec3 {
        match *self {
            TrapSpec::Focus { point } => point,
            TrapSpec::Octahedral { center, .. } => center,
        }
    }

    pub fn validate(&self, workspace: &crate::model::WorkspaceConfig) -> Result<()> {
        if !workspace.contains(self.center()) {
            return Err(Error::geometry(format!(
                "trap center {} is outside the workspace",
                self.center()
            )));
        }
        if let TrapSpec::Octahedral { diameter, .. } = *self {
            if !(diameter > 0.0 && diameter.is_finite()) {
                return Err(Error::geometry(format!("octahedron diameter must be > 0 (got {diameter})")));
            }
        }
        Ok(())
    }
}

/// How the six SM groups are phased relative to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmPhasing {
    /// Every group arrives with phase 0 at its own vertex.
    Aligned,
    /// Each group keeps its own focusing law, but the two groups whose
    /// vertexes are farthest apart along z receive constant offsets chosen so
    /// the six group fields cancel at the trap center.
    #[default]
    CenterNull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HologramConfig {
    /// Octahedron (circumscribed sphere) diameter, mm.
    pub octahedron_diameter: f64,
    pub sm_phasing: SmPhasing,
    /// Intrinsic z-y-x Euler angles (degrees) applied to the vertex set.
    pub octahedron_rotation_deg: [f64; 3],
    pub ib_iterations: usize,
}

impl Default for HologramConfig {
    fn default() -> Self {
        Self {
            octahedron_diameter: 2.4,
            sm_phasing: SmPhasing::CenterNull,
            octahedron_rotation_deg: [0.0; 3],
            ib_iterations: 200,
        }
    }
}

impl HologramConfig {
    pub fn validate(&self) -> Result<()> {
        crate::model::positive("hologram.octahedron_diameter", self.octahedron_diameter)?;
        if self.ib_iterations == 0 {
            return Err(Error::config("hologram.ib_iterations", "must be >= 1"));
        }
        if self.octahedron_rotation_deg.iter().any(|a| !a.is_finite()) {
            return Err(Error::config("hologram.octahedron_rotation_deg", "must be finite"));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        let [yaw, pitch, roll] = self.octahedron_rotation_deg.map(f64::to_radians);
        Rotation3::from_euler_angles(roll, pitch, yaw)
    }
}

/// Single-focus phase for one element.
pub fn focus_phase(element: Vec3, focal: Vec3, wavelength: f64) -> Result<f64> {
    if !(wavelength > 0.0) {
        return Err(Error::geometry(format!("wavelength must be > 0 (got {wavelength})")));
    }
    let d = element.distance(focal);
    if d <= 0.0 {
        return Err(Error::geometry(format!("focal point {focal} coincides with an element")));
    }
    Ok(focus_phase_at_distance(d, TAU / wavelength))
}

#[inline]
fn focus_phase_at_distance(d: f64, k: f64) -> f64 {
    wrap_phase(TAU - (-k * d).rem_euclid(TAU))
}

fn require_above(array: &TransducerArray, p: Vec3, what: &str) -> Result<()> {
    if !(p.is_finite() && p.z > array.origin.z) {
        return Err(Error::geometry(format!(
            "{what} {p} must lie strictly above the array plane z = {}",
            array.origin.z
        )));
    }
    Ok(())
}

pub fn make_focus_hologram(
    array: &TransducerArray,
    focal: Vec3,
    medium: &MediumConfig,
) -> Result<PhaseHologram> {
    require_above(array, focal, "focal point")?;
    let k = wavenumber(medium, array)?;
    let phases = array
        .element_centers()
        .into_iter()
        .map(|e| focus_phase_at_distance(e.distance(focal), k))
        .collect();
    Ok(PhaseHologram {
        rows: array.rows,
        cols: array.cols,
        phases,
    })
}

/// Axis-aligned octahedron vertexes in the order `+x, −x, +y, −y, +z, −z`.
pub fn octahedron_vertexes(center: Vec3, diameter: f64) -> Result<[Vec3; 6]> {
    octahedron_vertexes_oriented(center, diameter, &Rotation3::identity())
}

pub fn octahedron_vertexes_oriented(
    center: Vec3,
    diameter: f64,
    rotation: &Rotation3<f64>,
) -> Result<[Vec3; 6]> {
    if !(diameter > 0.0 && diameter.is_finite()) {
        return Err(Error::geometry(format!("octahedron diameter must be > 0 (got {diameter})")));
    }
    let r = diameter / 2.0;
    let axes = [Vec3::X, -Vec3::X, Vec3::Y, -Vec3::Y, Vec3::Z, -Vec3::Z];
    Ok(axes.map(|a| center + Vec3::from_na(&(rotation * a.to_na())) * r))
}

/// Vertex index for every element; 2×3 blocks anchored at element (0, 0).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmAssignment {
    rows: usize,
    cols: usize,
    group: Vec<u8>,
}

impl SmAssignment {
    pub fn get(&self, row: usize, col: usize) -> usize {
        self.group[row * self.cols + col] as usize
    }

    /// Row-major group indexes.
    pub fn groups(&self) -> &[u8] {
        &self.group
    }

    pub fn counts(&self) -> [usize; 6] {
        let mut c = [0; 6];
        for &g in &self.group {
            c[g as usize] += 1;
        }
        c
    }
}

pub fn sm_assignment(array: &TransducerArray) -> Result<SmAssignment> {
    if array.rows < 2 || array.cols < 3 {
        return Err(Error::config(
            "array",
            format!(
                "spatial multiplexing needs at least 2x3 elements (got {}x{})",
                array.rows, array.cols
            ),
        ));
    }
    let group = (0..array.rows)
        .flat_map(|i| (0..array.cols).map(move |j| ((i % 2) * 3 + j % 3) as u8))
        .collect();
    Ok(SmAssignment {
        rows: array.rows,
        cols: array.cols,
        group,
    })
}

/// Everything produced while designing an octahedral hologram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OctahedralDesign {
    pub hologram: PhaseHologram,
    pub vertexes: [Vec3; 6],
    pub assignment: SmAssignment,
    /// Arrival phase of each group at its own vertex.
    pub group_offsets: [f64; 6],
}

pub fn make_octahedral_hologram(
    array: &TransducerArray,
    center: Vec3,
    diameter: f64,
    medium: &MediumConfig,
    phasing: SmPhasing,
) -> Result<PhaseHologram> {
    Ok(design_octahedral(array, center, diameter, medium, phasing, &Rotation3::identity())?.hologram)
}

pub fn design_octahedral(
    array: &TransducerArray,
    center: Vec3,
    diameter: f64,
    medium: &MediumConfig,
    phasing: SmPhasing,
    rotation: &Rotation3<f64>,
) -> Result<OctahedralDesign> {
    let vertexes = octahedron_vertexes_oriented(center, diameter, rotation)?;
    for v in &vertexes {
        require_above(array, *v, "octahedron vertex")?;
    }
    let assignment = sm_assignment(array)?;
    let k = wavenumber(medium, array)?;
    let elements = array.element_centers();
    let base: Vec<f64> = elements
        .iter()
        .zip(&assignment.group)
        .map(|(e, &g)| focus_phase_at_distance(e.distance(vertexes[g as usize]), k))
        .collect();

    let group_offsets = match phasing {
        SmPhasing::Aligned => [0.0; 6],
        SmPhasing::CenterNull => {
            center_null_offsets(&elements, &base, &assignment.group, center, k, &vertexes)?
        }
    };
    let phases = base
        .iter()
        .zip(&assignment.group)
        .map(|(p, &g)| wrap_phase(p + group_offsets[g as usize]))
        .collect();
    Ok(OctahedralDesign {
        hologram: PhaseHologram {
            rows: array.rows,
            cols: array.cols,
            phases,
        },
        vertexes,
        assignment,
        group_offsets: group_offsets.map(wrap_phase),
    })
}

/// Offsets for the antipodal pair most aligned with z that make the sum of
/// the six group fields vanish at `center` (or come as close as the pair
/// magnitudes allow). The other four groups keep offset 0.
fn center_null_offsets(
    elements: &[Vec3],
    phases: &[f64],
    groups: &[u8],
    center: Vec3,
    k: f64,
    vertexes: &[Vec3; 6],
) -> Result<[f64; 6]> {
    let mut field = [Complex64::new(0.0, 0.0); 6];
    for ((e, &phi), &g) in elements.iter().zip(phases).zip(groups) {
        let d = e.distance(center);
        if d <= 0.0 {
            return Err(Error::geometry("trap center coincides with an element"));
        }
        field[g as usize] += Complex64::from_polar(1.0 / d, phi - k * d);
    }

    // Antipodal pairs are (0,1), (2,3), (4,5).
    let pair = (0..3)
        .max_by(|&a, &b| {
            let dz = |p: usize| (vertexes[2 * p].z - vertexes[2 * p + 1].z).abs();
            dz(a).total_cmp(&dz(b))
        })
        .expect("three pairs");
    let (ia, ib) = (2 * pair, 2 * pair + 1);

    let rest: Complex64 = (0..6).filter(|&g| g != ia && g != ib).map(|g| field[g]).sum();
    let target = -rest;
    let (a, b, r) = (field[ia].norm(), field[ib].norm(), target.norm());
    let theta = target.arg();

    let (arg_a, arg_b) = if r <= f64::EPSILON * (a + b) {
        // Cancel the pair against itself.
        (field[ia].arg(), field[ia].arg() + PI)
    } else if r >= a + b {
        (theta, theta)
    } else if r <= (a - b).abs() {
        if a >= b {
            (theta, theta + PI)
        } else {
            (theta + PI, theta)
        }
    } else {
        let cos_alpha = ((a * a + r * r - b * b) / (2.0 * a * r)).clamp(-1.0, 1.0);
        let va = Complex64::from_polar(a, theta + cos_alpha.acos());
        (va.arg(), (target - va).arg())
    };

    let mut offsets = [0.0; 6];
    offsets[ia] = arg_a - field[ia].arg();
    offsets[ib] = arg_b - field[ib].arg();
    Ok(offsets)
}

/// Output of the iterative backpropagation comparator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbResult {
    pub hologram: PhaseHologram,
    /// `−Σ|p(target)|` after each iteration.
    pub cost: Vec<f64>,
}

/// Alternating projection between the phase-only source constraint and
/// unit target amplitudes, with point-source propagation both ways.
pub fn ib_baseline_hologram(
    array: &TransducerArray,
    targets: &[Vec3],
    medium: &MediumConfig,
    iterations: usize,
) -> Result<IbResult> {
    if targets.is_empty() {
        return Err(Error::geometry("iterative backpropagation needs at least one target"));
    }
    if iterations == 0 {
        return Err(Error::config("hologram.ib_iterations", "must be >= 1"));
    }
    for t in targets {
        require_above(array, *t, "target")?;
    }
    let k = wavenumber(medium, array)?;
    let amp = array.emission_amplitude;
    let elements = array.element_centers();
    let n = elements.len();

    // Row-major m x n forward propagator.
    let prop: Vec<Complex64> = targets
        .iter()
        .flat_map(|t| {
            elements.iter().map(move |e| {
                let d = e.distance(*t);
                Complex64::from_polar(amp / d, -k * d)
            })
        })
        .collect();

    let forward = |q: &[Complex64]| -> Vec<Complex64> {
        prop.chunks(n)
            .map(|row| row.iter().zip(q).map(|(g, s)| g * s).sum())
            .collect()
    };
    let unit = |z: Complex64| {
        let m = z.norm();
        if m > 0.0 {
            z / m
        } else {
            Complex64::new(1.0, 0.0)
        }
    };

    let mut source = vec![Complex64::new(1.0, 0.0); n];
    let mut cost = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let p = forward(&source);
        let p_unit: Vec<Complex64> = p.into_iter().map(unit).collect();
        let mut back = vec![Complex64::new(0.0, 0.0); n];
        for (row, pt) in prop.chunks(n).zip(&p_unit) {
            for (b, g) in back.iter_mut().zip(row) {
                *b += g.conj() * pt;
            }
        }
        source = back.into_iter().map(unit).collect();
        cost.push(-forward(&source).iter().map(|z| z.norm()).sum::<f64>());
    }

    // Fix the global phase so the first target is reached with phase 0.
    let reference = forward(&source)[0].arg();
    let phases = source.iter().map(|s| wrap_phase(s.arg() - reference)).collect();
    Ok(IbResult {
        hologram: PhaseHologram {
            rows: array.rows,
            cols: array.cols,
            phases,
        },
        cost,
    })
}

/// Arrival phase `φ_i − k·d_i` of every element at `point`, wrapped to `(−π, π]`.
pub fn arrival_phases(
    array: &TransducerArray,
    hologram: &PhaseHologram,
    point: Vec3,
    medium: &MediumConfig,
) -> Result<Vec<f64>> {
    let k = wavenumber(medium, array)?;
    Ok(array
        .element_centers()
        .iter()
        .zip(hologram.phases())
        .map(|(e, phi)| wrap_signed(phi - k * e.distance(point)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lam() -> f64 {
        crate::model::wavelength(&MediumConfig::default(), &TransducerArray::default()).unwrap()
    }

    fn small(rows: usize, cols: usize) -> TransducerArray {
        TransducerArray {
            rows,
            cols,
            ..Default::default()
        }
    }

    #[test]
    fn focus_phase_examples() {
        let l = lam();
        let e = Vec3::ZERO;
        let at = |d: f64| focus_phase(e, Vec3::new(0.0, 0.0, d), l).unwrap();
        assert!((at(l / 2.0) - PI).abs() < 1e-12);
        let full = at(l);
        assert!(full < 1e-12 || (TAU - full) < 1e-12);
        assert!(full < TAU);
        assert!((at(l / 4.0) - PI / 2.0).abs() < 1e-12);
        assert!(matches!(focus_phase(e, e, l), Err(Error::Geometry(_))));
    }

    #[test]
    fn focus_hologram_aligns_every_arrival() {
        let a = TransducerArray::default();
        let m = MediumConfig::default();
        let f = Vec3::new(25.0, 25.0, 40.0);
        let h = make_focus_hologram(&a, f, &m).unwrap();
        let worst = arrival_phases(&a, &h, f, &m)
            .unwrap()
            .into_iter()
            .map(f64::abs)
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "worst residual {worst}");
    }

    #[test]
    fn on_axis_focus_has_mirror_symmetry() {
        let a = TransducerArray::default();
        let h = make_focus_hologram(&a, Vec3::new(25.0, 25.0, 40.0), &MediumConfig::default()).unwrap();
        for i in 0..50 {
            for j in 0..50 {
                let p = h.get(i, j);
                for q in [h.get(49 - i, j), h.get(i, 49 - j), h.get(49 - i, 49 - j)] {
                    assert!(wrap_signed(p - q).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn focus_in_array_plane_is_rejected() {
        let r = make_focus_hologram(
            &TransducerArray::default(),
            Vec3::new(25.0, 25.0, 0.0),
            &MediumConfig::default(),
        );
        assert!(matches!(r, Err(Error::Geometry(_))));
    }

    #[test]
    fn holograms_differ_for_different_depths() {
        let a = TransducerArray::default();
        let m = MediumConfig::default();
        let h1 = make_focus_hologram(&a, Vec3::new(25.0, 25.0, 40.0), &m).unwrap();
        let h2 = make_focus_hologram(&a, Vec3::new(25.0, 25.0, 41.0), &m).unwrap();
        assert_ne!(h1, h2);
    }

    #[test]
    fn octahedron_vertex_layout() {
        let c = Vec3::new(25.0, 25.0, 40.0);
        let v = octahedron_vertexes(c, 2.4).unwrap();
        assert!((v[0] - Vec3::new(26.2, 25.0, 40.0)).norm() < 1e-12);
        assert!((v[4] - Vec3::new(25.0, 25.0, 41.2)).norm() < 1e-12);
        let centroid = v.iter().fold(Vec3::ZERO, |s, p| s + *p) / 6.0;
        assert!((centroid - c).norm() < 1e-12);
        for p in 0..3 {
            assert!((v[2 * p].distance(v[2 * p + 1]) - 2.4).abs() < 1e-12);
        }
        assert!(octahedron_vertexes(c, 0.0).is_err());
    }

    #[test]
    fn rotated_octahedron_keeps_radius() {
        let rot = Rotation3::from_euler_angles(0.3, -0.2, 1.1);
        let c = Vec3::new(10.0, 5.0, 30.0);
        for v in octahedron_vertexes_oriented(c, 3.0, &rot).unwrap() {
            assert!((v.distance(c) - 1.5).abs() < 1e-12);
        }
    }

    /// Independent tiling oracle: walk the blocks explicitly.
    fn tiled_counts(rows: usize, cols: usize) -> [usize; 6] {
        let mut grid = vec![usize::MAX; rows * cols];
        for bi in (0..rows).step_by(2) {
            for bj in (0..cols).step_by(3) {
                for di in 0..2 {
                    for dj in 0..3 {
                        let (i, j) = (bi + di, bj + dj);
                        if i < rows && j < cols {
                            grid[i * cols + j] = di * 3 + dj;
                        }
                    }
                }
            }
        }
        let mut c = [0; 6];
        for g in grid {
            c[g] += 1;
        }
        c
    }

    #[test]
    fn sm_counts_match_tiling_oracle() {
        let oracle = tiled_counts(50, 50);
        let got = sm_assignment(&TransducerArray::default()).unwrap().counts();
        assert_eq!(got, oracle);
        assert_eq!(got, [425, 425, 400, 425, 425, 400]);
        let spread = got.iter().max().unwrap() - got.iter().min().unwrap();
        assert!(spread <= 34);

        assert_eq!(sm_assignment(&small(2, 3)).unwrap().counts(), [1; 6]);
        assert_eq!(sm_assignment(&small(4, 6)).unwrap().counts(), [4; 6]);
        assert!(sm_assignment(&small(1, 6)).is_err());
        assert!(sm_assignment(&small(2, 2)).is_err());
    }

    #[test]
    fn complete_blocks_are_bijections() {
        let a = sm_assignment(&TransducerArray::default()).unwrap();
        for bi in (0..50 - 1).step_by(2) {
            for bj in (0..48).step_by(3) {
                let mut seen = [false; 6];
                for di in 0..2 {
                    for dj in 0..3 {
                        seen[a.get(bi + di, bj + dj)] = true;
                    }
                }
                assert!(seen.iter().all(|s| *s));
            }
        }
    }

    #[test]
    fn aligned_octahedral_groups_arrive_in_phase_at_their_vertex() {
        let a = TransducerArray::default();
        let m = MediumConfig::default();
        let c = Vec3::new(25.0, 25.0, 40.0);
        let d = design_octahedral(&a, c, 2.4, &m, SmPhasing::Aligned, &Rotation3::identity()).unwrap();
        let k = wavenumber(&m, &a).unwrap();
        for ((e, phi), g) in a
            .element_centers()
            .iter()
            .zip(d.hologram.phases())
            .zip(d.assignment.groups())
        {
            let res = wrap_signed(phi - k * e.distance(d.vertexes[*g as usize]));
            assert!(res.abs() < 1e-9);
        }
    }

    #[test]
    fn center_null_groups_arrive_with_their_offset() {
        let a = TransducerArray::default();
        let m = MediumConfig::default();
        let c = Vec3::new(25.0, 25.0, 40.0);
        let d = design_octahedral(&a, c, 2.4, &m, SmPhasing::CenterNull, &Rotation3::identity()).unwrap();
        let k = wavenumber(&m, &a).unwrap();
        assert_eq!(&d.group_offsets[..4], &[0.0; 4]);
        for ((e, phi), g) in a
            .element_centers()
            .iter()
            .zip(d.hologram.phases())
            .zip(d.assignment.groups())
        {
            let g = *g as usize;
            let res = wrap_signed(phi - k * e.distance(d.vertexes[g]) - d.group_offsets[g]);
            assert!(res.abs() < 1e-9);
        }
        // direct sum at the center vanishes
        let p: Complex64 = a
            .element_centers()
            .iter()
            .zip(d.hologram.phases())
            .map(|(e, phi)| {
                let dist = e.distance(c);
                Complex64::from_polar(1.0 / dist, phi - k * dist)
            })
            .sum();
        assert!(p.norm() < 1e-9, "{}", p.norm());
    }

    #[test]
    fn vanishing_diameter_converges_to_focus() {
        let a = TransducerArray::default();
        let m = MediumConfig::default();
        let c = Vec3::new(25.0, 25.0, 40.0);
        let focus = make_focus_hologram(&a, c, &m).unwrap();
        let mut prev = f64::INFINITY;
        for diam in [1e-2, 1e-4, 1e-6] {
            let h = make_octahedral_hologram(&a, c, diam, &m, SmPhasing::Aligned).unwrap();
            let worst = h
                .phases()
                .iter()
                .zip(focus.phases())
                .map(|(p, q)| wrap_signed(p - q).abs())
                .fold(0.0, f64::max);
            assert!(worst < prev);
            prev = worst;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn on_axis_octahedral_is_group_permuted_mirror_symmetric() {
        // Mirroring the array through the aperture center permutes the SM
        // groups; the mirrored element must carry the phase of the original
        // element focusing on the mirrored vertex of its new group.
        let a = TransducerArray::default();
        let m = MediumConfig::default();
        let c = Vec3::new(25.0, 25.0, 40.0);
        let d = design_octahedral(&a, c, 2.4, &m, SmPhasing::Aligned, &Rotation3::identity()).unwrap();
        let k = wavenumber(&m, &a).unwrap();
        let mirror_x = |v: Vec3| Vec3::new(2.0 * c.x - v.x, v.y, v.z);
        let mirror_y = |v: Vec3| Vec3::new(v.x, 2.0 * c.y - v.y, v.z);
        for i in 0..50 {
            for j in 0..50 {
                let e = a.element_center(i, j).unwrap();
                let gx = d.assignment.get(49 - i, j);
                let want = focus_phase_at_distance(e.distance(mirror_x(d.vertexes[gx])), k);
                assert!(wrap_signed(d.hologram.get(49 - i, j) - want).abs() < 1e-9);
                let gy = d.assignment.get(i, 49 - j);
                let want = focus_phase_at_distance(e.distance(mirror_y(d.vertexes[gy])), k);
                assert!(wrap_signed(d.hologram.get(i, 49 - j) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn octahedral_rejects_vertex_below_array() {
        let r = make_octahedral_hologram(
            &TransducerArray::default(),
            Vec3::new(25.0, 25.0, 1.0),
            2.4,
            &MediumConfig::default(),
            SmPhasing::Aligned,
        );
        assert!(matches!(r, Err(Error::Geometry(_))));
    }

    #[test]
    fn ib_single_target_reduces_to_focus() {
        let a = TransducerArray::default();
        let m = MediumConfig::default();
        let t = Vec3::new(25.0, 25.0, 40.0);
        let focus = make_focus_hologram(&a, t, &m).unwrap();
        for iters in [1, 3] {
            let ib = ib_baseline_hologram(&a, &[t], &m, iters).unwrap();
            let worst = ib
                .hologram
                .phases()
                .iter()
                .zip(focus.phases())
                .map(|(p, q)| wrap_signed(p - q).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-6, "{worst}");
        }
    }

    #[test]
    fn ib_cost_never_increases() {
        let a = TransducerArray::default();
        let m = MediumConfig::default();
        let targets = octahedron_vertexes(Vec3::new(25.0, 25.0, 40.0), 2.4).unwrap();
        let ib = ib_baseline_hologram(&a, &targets, &m, 200).unwrap();
        assert_eq!(ib.cost.len(), 200);
        for w in ib.cost.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
        }
        assert!(ib_baseline_hologram(&a, &[], &m, 5).is_err());
    }

    #[test]
    fn csv_round_trip_and_format() {
        let a = small(4, 6);
        let h = make_focus_hologram(&a, Vec3::new(2.0, 3.0, 10.0), &MediumConfig::default()).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 6);
        let back = PhaseHologram::read_csv(&buf[..]).unwrap();
        for (p, q) in back.phases().iter().zip(h.phases()) {
            assert!(wrap_signed(p - q).abs() < 1e-8);
        }
        assert!(PhaseHologram::read_csv("1,2\n3\n".as_bytes()).is_err());
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(PI, 9), "3.14159265");
        assert_eq!(format_sig(0.0123456789123, 9), "0.0123456789");
        assert_eq!(format_sig(0.0, 9), "0");
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(ph in proptest::collection::vec(-100.0f64..100.0, 6)) {
            let h = PhaseHologram::new(2, 3, ph).unwrap();
            prop_assert_eq!(h.normalized(), h.clone());
            prop_assert!(h.phases().iter().all(|p| (0.0..TAU).contains(p)));
        }

        #[test]
        fn focus_hologram_is_shift_covariant(dx in -20.0f64..20.0, dy in -20.0f64..20.0, dz in -5.0f64..5.0,
                                              fx in 5.0f64..45.0, fy in 5.0f64..45.0, fz in 10.0f64..50.0) {
            let m = MediumConfig::default();
            let a = TransducerArray::default();
            let shift = Vec3::new(dx, dy, dz);
            let moved = TransducerArray { origin: a.origin + shift, ..a };
            let f = Vec3::new(fx, fy, fz);
            let h1 = make_focus_hologram(&a, f, &m).unwrap();
            let h2 = make_focus_hologram(&moved, f + shift, &m).unwrap();
            for (p, q) in h1.phases().iter().zip(h2.phases()) {
                prop_assert!(wrap_signed(p - q).abs() < 1e-8);
            }
        }

        #[test]
        fn focus_phase_in_range(d in 1e-3f64..200.0) {
            let p = focus_phase(Vec3::ZERO, Vec3::new(0.0, 0.0, d), lam()).unwrap();
            prop_assert!((0.0..TAU).contains(&p));
        }
    }
}
