use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{CameraModel, ImageFrame};
use crate::model::ParticleState;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub frame: ImageFrame,
    /// Projected particle center, if one was drawn.
    pub center: Option<(f64, f64)>,
    /// The particle outline crosses the image border.
    pub clipped: bool,
}

/// Frame without a particle, with its own noise draw.
pub fn render_background(camera: &CameraModel, t: f64, seed: u64) -> ImageFrame {
    render(camera, None, t, seed).frame
}

/// Background plus an anti-aliased disc at the projected particle center.
/// The outline is the exact affine image of the sphere, which is a near
/// circle of diameter `diameter_um · pixel_scale` for the bundled cameras.
pub fn render_frame(camera: &CameraModel, particle: &ParticleState, t: f64, seed: u64) -> RenderedFrame {
    render(camera, Some(particle), t, seed)
}

fn render(camera: &CameraModel, particle: Option<&ParticleState>, t: f64, seed: u64) -> RenderedFrame {
    let (w, h) = (camera.width, camera.height);
    let mut level = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            level[y * w + x] = camera.background.at(x as f64 + 0.5, y as f64 + 0.5);
        }
    }

    let mut center = None;
    let mut clipped = false;
    if let Some(p) = particle {
        let (cu, cv) = camera.project(p.position);
        center = Some((cu, cv));
        let s = camera.disc_shape(p.diameter_um);
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        // inverse shape matrix
        let q = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
        let half_u = s[0][0].sqrt();
        let half_v = s[1][1].sqrt();
        clipped = cu - half_u < 0.0 || cv - half_v < 0.0 || cu + half_u > w as f64 || cv + half_v > h as f64;
        let x0 = (cu - half_u - 1.0).floor().max(0.0) as usize;
        let y0 = (cv - half_v - 1.0).floor().max(0.0) as usize;
        let x1 = ((cu + half_u + 1.0).ceil().max(0.0) as usize).min(w);
        let y1 = ((cv + half_v + 1.0).ceil().max(0.0) as usize).min(h);
        let n = camera.supersample.max(1);
        let step = 1.0 / n as f64;
        for y in y0..y1 {
            for x in x0..x1 {
                let mut hits = 0usize;
                for sy in 0..n {
                    let dv = y as f64 + (sy as f64 + 0.5) * step - cv;
                    for sx in 0..n {
                        let du = x as f64 + (sx as f64 + 0.5) * step - cu;
                        let r = q[0][0] * du * du + (q[0][1] + q[1][0]) * du * dv + q[1][1] * dv * dv;
                        if r <= 1.0 {
                            hits += 1;
                        }
                    }
                }
                if hits > 0 {
                    let cover = hits as f64 / (n * n) as f64;
                    let l = &mut level[y * w + x];
                    *l += (camera.particle_level - *l) * cover;
                }
            }
        }
    }

    if camera.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, camera.noise_sigma).expect("sigma checked >= 0");
        for l in &mut level {
            *l += normal.sample(&mut rng);
        }
    }

    RenderedFrame {
        frame: ImageFrame {
            width: w,
            height: h,
            pixels: level.iter().map(|l| l.round().clamp(0.0, 255.0) as u8).collect(),
            timestamp: t,
        },
        center,
        clipped,
    }
}
