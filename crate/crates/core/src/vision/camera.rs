use serde::{Deserialize, Serialize};

use super::{Background, VisionConfig};
use crate::calibration::{CalibrationFixture, CameraId};
use crate::model::Vec3;

/// Affine (orthographic) camera anchored at a reference point:
/// `pixel = J·(world − ref_world) + ref_pixel` with `J` in pixel/μm.
///
/// Pixel `(i, j)` covers `[i, i+1) × [j, j+1)` in continuous coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub id: CameraId,
    pub jacobian: [[f64; 3]; 2],
    pub ref_pixel: (f64, f64),
    pub ref_world: Vec3,
    pub width: usize,
    pub height: usize,
    pub noise_sigma: f64,
    pub background: Background,
    pub particle_level: f64,
    pub supersample: usize,
}

impl CameraModel {
    /// Camera built from the bundled calibration, resampled by
    /// `cfg.image_scale`.
    pub fn fixture(id: CameraId, cfg: &VisionConfig) -> Self {
        let f = CalibrationFixture::load();
        let s = cfg.image_scale;
        let block = f.jacobian().camera_block(id);
        let c = &f.reference_centroid;
        let px = match id {
            CameraId::H => c.pixel_h,
            CameraId::V => c.pixel_v,
        };
        let (width, height) = cfg.image_size();
        Self {
            id,
            jacobian: block.map(|row| row.map(|v| v * s)),
            ref_pixel: (px[0] * s, px[1] * s),
            ref_world: Vec3::from_array(c.world_mm),
            width,
            height,
            noise_sigma: cfg.noise_sigma,
            background: cfg.background,
            particle_level: cfg.particle_level,
            supersample: cfg.supersample,
        }
    }

    /// Same projection, re-anchored on a smaller sensor centered on `around`.
    pub fn cropped(&self, width: usize, height: usize, around: Vec3) -> Self {
        let (u, v) = self.project(around);
        let mut out = self.clone();
        out.ref_pixel = (
            self.ref_pixel.0 - u + width as f64 / 2.0,
            self.ref_pixel.1 - v + height as f64 / 2.0,
        );
        out.width = width;
        out.height = height;
        out
    }

    pub fn project(&self, world: Vec3) -> (f64, f64) {
        let d = (world - self.ref_world) * 1e3;
        let j = &self.jacobian;
        (
            self.ref_pixel.0 + j[0][0] * d.x + j[0][1] * d.y + j[0][2] * d.z,
            self.ref_pixel.1 + j[1][0] * d.x + j[1][1] * d.y + j[1][2] * d.z,
        )
    }

    pub fn contains(&self, (u, v): (f64, f64)) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    pub fn sees(&self, world: Vec3) -> bool {
        self.contains(self.project(world))
    }

    /// Mean row norm of the camera block, pixel/μm.
    pub fn pixel_scale(&self) -> f64 {
        let n = |r: &[f64; 3]| (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        (n(&self.jacobian[0]) + n(&self.jacobian[1])) / 2.0
    }

    pub fn expected_diameter_px(&self, diameter_um: f64) -> f64 {
        diameter_um * self.pixel_scale()
    }

    /// Shape matrix `S = r²·J·Jᵀ` of the projected sphere outline
    /// `{d : dᵀ·S⁻¹·d ≤ 1}`, pixels².
    pub fn disc_shape(&self, diameter_um: f64) -> [[f64; 2]; 2] {
        let r2 = (diameter_um / 2.0).powi(2);
        let j = &self.jacobian;
        let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        [
            [r2 * dot(&j[0], &j[0]), r2 * dot(&j[0], &j[1])],
            [r2 * dot(&j[1], &j[0]), r2 * dot(&j[1], &j[1])],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::JacobianMatrix;

    fn full() -> VisionConfig {
        VisionConfig { image_scale: 1.0, ..VisionConfig::default() }
    }

    #[test]
    fn reference_centroid_projects_to_published_pixels() {
        let v = CameraModel::fixture(CameraId::V, &full());
        let h = CameraModel::fixture(CameraId::H, &full());
        let c = Vec3::new(25.0, 25.0, 40.0);
        assert_eq!(v.project(c), (854.2, 951.4));
        assert_eq!(h.project(c), (1328.1, 716.4));
        assert_eq!((v.width, v.height), (2448, 2050));
    }

    #[test]
    fn projection_is_affine() {
        let h = CameraModel::fixture(CameraId::H, &full());
        let a = Vec3::new(20.0, 21.0, 35.0);
        let b = Vec3::new(27.0, 30.0, 42.0);
        let (ua, va) = h.project(a);
        let (ub, vb) = h.project(b);
        let d = (a - b) * 1e3;
        let j = JacobianMatrix::fixture().camera_block(CameraId::H);
        let du = j[0][0] * d.x + j[0][1] * d.y + j[0][2] * d.z;
        let dv = j[1][0] * d.x + j[1][1] * d.y + j[1][2] * d.z;
        assert!((ua - ub - du).abs() < 1e-9);
        assert!((va - vb - dv).abs() < 1e-9);
    }

    #[test]
    fn pixel_scale_matches_particle_size_ratio() {
        // a 400 μm particle spans 25 pixels at full resolution
        let ratio = 25.0 / 400.0;
        let j = JacobianMatrix::fixture();
        let dominant = [j.get(0, 1), j.get(1, 2), j.get(2, 0), j.get(3, 1)];
        let mean = dominant.iter().map(|v| v.abs()).sum::<f64>() / 4.0;
        assert!((mean - ratio).abs() / ratio < 0.01, "{mean}");
        for id in [CameraId::H, CameraId::V] {
            let c = CameraModel::fixture(id, &full());
            assert!((c.expected_diameter_px(400.0) - 25.0).abs() < 0.6);
            assert!((c.expected_diameter_px(700.0) - 45.0).abs() < 1.5);
        }
    }

    #[test]
    fn quarter_scale_shrinks_everything() {
        let q = CameraModel::fixture(CameraId::V, &VisionConfig::default());
        let f = CameraModel::fixture(CameraId::V, &full());
        let p = Vec3::new(22.0, 27.0, 38.0);
        let (uq, vq) = q.project(p);
        let (uf, vf) = f.project(p);
        assert!((uq * 4.0 - uf).abs() < 1e-9 && (vq * 4.0 - vf).abs() < 1e-9);
        assert_eq!((q.width, q.height), (612, 512));
    }

    #[test]
    fn cropped_camera_centers_target() {
        let c = CameraModel::fixture(CameraId::H, &full()).cropped(200, 100, Vec3::new(25.0, 25.0, 40.0));
        assert_eq!(c.project(Vec3::new(25.0, 25.0, 40.0)), (100.0, 50.0));
    }
}
