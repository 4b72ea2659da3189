//! Shared domain types: geometry, medium, array layout, timing and particles.
//!
//! All lengths are millimeters and all times are seconds. Micrometers only
//! appear where a quantity is explicitly suffixed `_um`.
//!
//! The array frame `{C_T}` has its origin at the array corner, x along the
//! row index, y along the column index and z pointing up into the tank.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point or displacement in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn component(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis {axis} out of range"),
        }
    }

    pub fn to_na(self) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_na(v: &nalgebra::Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    /// Parses `x,y,z`.
    pub fn parse_csv(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("expected x,y,z, got `{s}`")));
        }
        let mut v = [0.0; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::Parse(format!("not a number: `{p}`")))?;
        }
        let v = Self::from_array(v);
        if !v.is_finite() {
            return Err(Error::Parse(format!("non-finite coordinate in `{s}`")));
        }
        Ok(v)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Propagation medium. Defaults are room-temperature water.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediumConfig {
    /// m/s
    pub sound_speed: f64,
    /// kg/m³
    pub density: f64,
}

impl Default for MediumConfig {
    fn default() -> Self {
        Self {
            sound_speed: 1500.0,
            density: 1000.0,
        }
    }
}

impl MediumConfig {
    pub fn validate(&self) -> Result<()> {
        positive("medium.sound_speed", self.sound_speed)?;
        positive("medium.density", self.density)
    }
}

/// Square grid of transducers lying in the z = 0 plane of `{C_T}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransducerArray {
    pub rows: usize,
    pub cols: usize,
    /// Center-to-center spacing, mm.
    pub pitch: f64,
    /// Drive frequency, Hz.
    pub frequency: f64,
    /// Array corner.
    pub origin: Vec3,
    /// Uniform drive amplitude in pressure·mm units.
    pub emission_amplitude: f64,
}

impl Default for TransducerArray {
    fn default() -> Self {
        Self {
            rows: 50,
            cols: 50,
            pitch: 1.0,
            frequency: 2.3e6,
            origin: Vec3::ZERO,
            emission_amplitude: 1.0,
        }
    }
}

impl TransducerArray {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Side lengths of the aperture along x and y.
    pub fn aperture(&self) -> (f64, f64) {
        (self.rows as f64 * self.pitch, self.cols as f64 * self.pitch)
    }

    pub fn center(&self) -> Vec3 {
        let (ax, ay) = self.aperture();
        self.origin + Vec3::new(ax / 2.0, ay / 2.0, 0.0)
    }

    pub fn element_center(&self, row: usize, col: usize) -> Result<Vec3> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::Index {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(self.element_center_unchecked(row, col))
    }

    #[inline]
    pub(crate) fn element_center_unchecked(&self, row: usize, col: usize) -> Vec3 {
        self.origin
            + Vec3::new(
                (row as f64 + 0.5) * self.pitch,
                (col as f64 + 0.5) * self.pitch,
                0.0,
            )
    }

    /// All element centers in row-major order.
    pub fn element_centers(&self) -> Vec<Vec3> {
        (0..self.rows)
            .flat_map(|i| (0..self.cols).map(move |j| (i, j)))
            .map(|(i, j)| self.element_center_unchecked(i, j))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::config(
                "array.rows",
                format!("array must have at least one element (got {}x{})", self.rows, self.cols),
            ));
        }
        positive("array.pitch", self.pitch)?;
        positive("array.frequency", self.frequency)?;
        if !self.origin.is_finite() {
            return Err(Error::config("array.origin", "must be finite"));
        }
        if !(self.emission_amplitude.is_finite() && self.emission_amplitude >= 0.0) {
            return Err(Error::config(
                "array.emission_amplitude",
                format!("must be finite and >= 0 (got {})", self.emission_amplitude),
            ));
        }
        Ok(())
    }
}

/// Acoustic wavelength in millimeters.
pub fn wavelength(medium: &MediumConfig, array: &TransducerArray) -> Result<f64> {
    positive("array.frequency", array.frequency)?;
    positive("medium.sound_speed", medium.sound_speed)?;
    Ok(medium.sound_speed / array.frequency * 1e3)
}

/// Wavenumber 2π/λ in rad/mm.
pub fn wavenumber(medium: &MediumConfig, array: &TransducerArray) -> Result<f64> {
    Ok(std::f64::consts::TAU / wavelength(medium, array)?)
}

/// Loop latencies and frame rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    /// Image processing latency, s.
    pub t_dip: f64,
    /// Phase computation + transmission + field build-up, s.
    pub t_trans: f64,
    pub camera_fps: f64,
    pub poh_update_fps: f64,
    /// Phase link baud rate, bit/s.
    pub link_baud: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            t_dip: 0.060,
            t_trans: 0.090,
            camera_fps: 15.0,
            poh_update_fps: 11.0,
            link_baud: 500_000.0,
        }
    }
}

impl TimingConfig {
    pub fn frame_interval(&self) -> f64 {
        1.0 / self.camera_fps
    }

    /// Prediction horizon `t_dip + t_trans`.
    pub fn horizon(&self) -> f64 {
        self.t_dip + self.t_trans
    }

    pub fn validate(&self) -> Result<()> {
        positive("timing.t_dip", self.t_dip)?;
        positive("timing.t_trans", self.t_trans)?;
        positive("timing.camera_fps", self.camera_fps)?;
        positive("timing.poh_update_fps", self.poh_update_fps)?;
        positive("timing.link_baud", self.link_baud)
    }
}

/// Worst-case length of a standard CAN data frame carrying 8 bytes,
/// including stuff bits.
const CAN_FRAME_BITS: f64 = 135.0;

/// Highest whole hologram refresh rate a CAN link can sustain when every
/// element phase is sent as one byte.
pub fn poh_rate_cap(link_baud: f64, elements: usize) -> u32 {
    let frames = elements.div_ceil(8) as f64;
    (link_baud / (frames * CAN_FRAME_BITS)).floor() as u32
}

/// Sign of the acoustic contrast factor, which decides trap type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Contrast {
    /// Drawn to pressure minima (e.g. polystyrene).
    Positive,
    /// Drawn to pressure maxima (e.g. PDMS).
    Negative,
}

impl Contrast {
    /// Representative (density kg/m³, sound speed m/s) of the material.
    pub fn material(self) -> (f64, f64) {
        match self {
            Contrast::Positive => (1050.0, 2350.0),
            Contrast::Negative => (970.0, 1030.0),
        }
    }

    pub fn material_name(self) -> &'static str {
        match self {
            Contrast::Positive => "PS",
            Contrast::Negative => "PDMS",
        }
    }
}

impl std::str::FromStr for Contrast {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "positive" | "ps" => Ok(Contrast::Positive),
            "negative" | "pdms" => Ok(Contrast::Negative),
            _ => Err(Error::Parse(format!("unknown contrast `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub position: Vec3,
    /// mm/s
    pub velocity: Vec3,
    pub diameter_um: f64,
    pub contrast: Contrast,
}

impl ParticleState {
    pub fn diameter_mm(&self) -> f64 {
        self.diameter_um * 1e-3
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.diameter_um > 0.0 && self.diameter_um <= 1000.0) {
            return Err(Error::config(
                "particle.diameter_um",
                format!("must be in (0, 1000] (got {})", self.diameter_um),
            ));
        }
        if !self.position.is_finite() || !self.velocity.is_finite() {
            return Err(Error::config("particle", "position and velocity must be finite"));
        }
        Ok(())
    }
}

/// Axis-aligned box seen by both cameras.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkspaceConfig {
    pub center: Vec3,
    pub extent: Vec3,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        Self {
            center: Vec3::new(19.0, 23.5, 34.5),
            extent: Vec3::new(37.0, 30.0, 30.0),
        }
    }
}

impl WorkspaceConfig {
    pub fn min(&self) -> Vec3 {
        self.center - self.extent / 2.0
    }

    pub fn max(&self) -> Vec3 {
        self.center + self.extent / 2.0
    }

    pub fn contains(&self, p: Vec3) -> bool {
        let (lo, hi) = (self.min(), self.max());
        (lo.x..=hi.x).contains(&p.x) && (lo.y..=hi.y).contains(&p.y) && (lo.z..=hi.z).contains(&p.z)
    }

    pub fn validate(&self, tank: &TankConfig) -> Result<()> {
        let e = self.extent;
        if !(e.x > 0.0 && e.y > 0.0 && e.z > 0.0) || !e.is_finite() || !self.center.is_finite() {
            return Err(Error::config("workspace.extent", "extent must be positive and finite"));
        }
        if self.min().z <= 0.0 {
            return Err(Error::config(
                "workspace.center",
                format!("workspace must lie strictly above z = 0 (bottom at {})", self.min().z),
            ));
        }
        if !tank.contains(self.min()) || !tank.contains(self.max()) {
            return Err(Error::config("workspace", "workspace must lie inside the tank"));
        }
        Ok(())
    }
}

/// Water volume, as an axis-aligned box in `{C_T}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TankConfig {
    pub min: Vec3,
    pub max: Vec3,
}

impl Default for TankConfig {
    fn default() -> Self {
        // 110 x 110 x 60 mm, centered over the 50 mm aperture.
        Self {
            min: Vec3::new(-30.0, -30.0, 0.0),
            max: Vec3::new(80.0, 80.0, 60.0),
        }
    }
}

impl TankConfig {
    pub fn contains(&self, p: Vec3) -> bool {
        (self.min.x..=self.max.x).contains(&p.x)
            && (self.min.y..=self.max.y).contains(&p.y)
            && (self.min.z..=self.max.z).contains(&p.z)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.max - self.min;
        if !(d.x > 0.0 && d.y > 0.0 && d.z > 0.0) {
            return Err(Error::config("tank", "tank.max must exceed tank.min on every axis"));
        }
        Ok(())
    }
}

pub(crate) fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be > 0 (got {v})")))
    }
}
