//! Virtual stereo microscope: affine cameras, synthetic frames and the
//! particle feature extractor.

mod camera;
mod conic;
mod extract;
mod image;
mod render;

pub use camera::CameraModel;
pub use conic::{fit_conic_ransac, Conic, EllipseFit, RansacParams};
pub use extract::{extract_feature, ExtractParams, FeatureObservation};
pub use image::ImageFrame;
pub use render::{render_background, render_frame, RenderedFrame};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::positive;

/// Background gray level model, in gray levels per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Background {
    Flat { level: f64 },
    /// `level + du·u + dv·v`.
    Gradient { level: f64, du: f64, dv: f64 },
}

impl Background {
    pub fn at(&self, u: f64, v: f64) -> f64 {
        match *self {
            Background::Flat { level } => level,
            Background::Gradient { level, du, dv } => level + du * u + dv * v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisionConfig {
    /// Sensor size at full resolution, pixels.
    pub full_width: usize,
    pub full_height: usize,
    /// Resampling factor applied to the sensor and the Jacobian.
    pub image_scale: f64,
    /// Gray-level noise, standard deviation.
    pub noise_sigma: f64,
    pub background: Background,
    /// Gray level of the particle body. Below the background renders a
    /// dark particle, above it a bright one.
    pub particle_level: f64,
    /// Anti-aliasing subsamples per pixel side.
    pub supersample: usize,
    /// Added to the local mean during adaptive binarization, gray levels.
    pub threshold_offset: f64,
    /// Minimum foreground count of the best sliding window, as a fraction
    /// of the expected disc area.
    pub min_fill: f64,
    pub ransac_iterations: usize,
    /// Inlier band, pixels.
    pub ransac_inlier_px: f64,
    /// Stop once this fraction of contour points are inliers.
    pub ransac_early_exit: f64,
    pub min_contour_len: usize,
}

impl Default for VisionConfig {
    fn default() -> Self {
        Self {
            full_width: 2448,
            full_height: 2050,
            image_scale: 0.25,
            noise_sigma: 2.0,
            background: Background::Flat { level: 200.0 },
            particle_level: 40.0,
            supersample: 8,
            threshold_offset: 12.0,
            min_fill: 0.3,
            ransac_iterations: 200,
            ransac_inlier_px: 1.5,
            ransac_early_exit: 0.9,
            min_contour_len: 10,
        }
    }
}

impl VisionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.full_width == 0 || self.full_height == 0 {
            return Err(Error::config("vision.full_width", "sensor size must be non-zero"));
        }
        positive("vision.image_scale", self.image_scale)?;
        if self.image_scale > 1.0 {
            return Err(Error::config("vision.image_scale", "must be <= 1"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::config("vision.noise_sigma", "must be >= 0"));
        }
        if self.supersample == 0 {
            return Err(Error::config("vision.supersample", "must be >= 1"));
        }
        if self.ransac_iterations == 0 {
            return Err(Error::config("vision.ransac_iterations", "must be >= 1"));
        }
        positive("vision.ransac_inlier_px", self.ransac_inlier_px)?;
        if !(0.0..=1.0).contains(&self.ransac_early_exit) {
            return Err(Error::config("vision.ransac_early_exit", "must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.min_fill) {
            return Err(Error::config("vision.min_fill", "must be in [0, 1]"));
        }
        Ok(())
    }

    /// Image size after scaling.
    pub fn image_size(&self) -> (usize, usize) {
        (
            (self.full_width as f64 * self.image_scale).floor() as usize,
            (self.full_height as f64 * self.image_scale).floor() as usize,
        )
    }

    pub fn extract_params(&self) -> ExtractParams {
        ExtractParams {
            threshold_offset: self.threshold_offset,
            min_fill: self.min_fill,
            min_contour_len: self.min_contour_len,
            ransac: RansacParams {
                iterations: self.ransac_iterations,
                inlier_band: self.ransac_inlier_px,
                early_exit: self.ransac_early_exit,
            },
        }
    }
}
