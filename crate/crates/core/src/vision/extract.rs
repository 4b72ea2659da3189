//! Particle center extraction.
//!
//! Stages: background subtraction, adaptive binarization, sliding-window
//! coarse localization, 3×3 closing, outer border following, sub-pixel
//! edge refinement along rays, RANSAC ellipse fit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conic::{fit_conic_ransac, RansacParams};
use super::ImageFrame;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractParams {
    pub threshold_offset: f64,
    pub min_fill: f64,
    pub min_contour_len: usize,
    pub ransac: RansacParams,
}

impl Default for ExtractParams {
    fn default() -> Self {
        super::VisionConfig::default().extract_params()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureObservation {
    /// Fitted center, pixels.
    pub u: f64,
    pub v: f64,
    /// Semi-axes (major, minor), pixels.
    pub axes: (f64, f64),
    pub valid: bool,
    pub contour_len: usize,
    pub inliers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl FeatureObservation {
    fn invalid(reason: impl Into<String>, contour_len: usize) -> Self {
        Self {
            u: f64::NAN,
            v: f64::NAN,
            axes: (0.0, 0.0),
            valid: false,
            contour_len,
            inliers: 0,
            reason: Some(reason.into()),
        }
    }

    pub fn center(&self) -> Option<(f64, f64)> {
        self.valid.then_some((self.u, self.v))
    }
}

/// Summed-area table with a zero first row and column.
struct Integral {
    w: usize,
    data: Vec<f64>,
}

impl Integral {
    fn new(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += f(x, y);
                data[(y + 1) * (w + 1) + x + 1] = data[y * (w + 1) + x + 1] + row;
            }
        }
        Self { w, data }
    }

    /// Sum over `[x0, x1) × [y0, y1)`.
    fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.w + 1;
        self.data[y1 * s + x1] - self.data[y0 * s + x1] - self.data[y1 * s + x0] + self.data[y0 * s + x0]
    }
}

/// Rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Rect {
    fn w(&self) -> usize {
        self.x1 - self.x0
    }
    fn h(&self) -> usize {
        self.y1 - self.y0
    }
}

/// Window start positions covering `[0, len)`, including a final flush one.
fn window_starts(len: usize, win: usize, stride: usize) -> Vec<usize> {
    if win >= len {
        return vec![0];
    }
    let mut v: Vec<usize> = (0..=len - win).step_by(stride).collect();
    if *v.last().expect("non-empty") != len - win {
        v.push(len - win);
    }
    v
}

fn morph(mask: &[bool], w: usize, h: usize, dilate: bool) -> Vec<bool> {
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = !dilate;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    // outside pixels never change the result
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let m = mask[ny as usize * w + nx as usize];
                    if dilate {
                        acc |= m;
                    } else {
                        acc &= m;
                    }
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// 8-connected component labels; returns the pixels of the largest one.
fn largest_component(mask: &[bool], w: usize, h: usize) -> Vec<usize> {
    let mut seen = vec![false; w * h];
    let mut best: Vec<usize> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            comp.push(i);
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best
}

/// Moore-neighbor tracing of the outer border of a component, starting at
/// its top-left pixel. Returns pixel coordinates in traversal order.
fn trace_border(mask: &[bool], w: usize, h: usize, start: usize) -> Vec<(usize, usize)> {
    // clockwise from west, image coordinates with y down
    const DIRS: [(i64, i64); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < w as i64 && y < h as i64 && mask[y as usize * w + x as usize];
    let s = ((start % w) as i64, (start / w) as i64);
    let mut border = vec![(s.0 as usize, s.1 as usize)];
    let mut cur = s;
    // the pixel west of the top-left pixel is background
    let mut back = 0usize;
    let limit = 4 * w * h + 8;
    for _ in 0..limit {
        let mut next = None;
        for k in 1..=8 {
            let d = (back + k) % 8;
            let (nx, ny) = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
            if inside(nx, ny) {
                next = Some(((nx, ny), d));
                break;
            }
        }
        let Some((p, d)) = next else { break };
        // the background cell examined just before p, seen from p
        back = if d % 2 == 0 { (d + 6) % 8 } else { (d + 5) % 8 };
        if p == s && border.len() > 1 {
            break;
        }
        cur = p;
        border.push((p.0 as usize, p.1 as usize));
    }
    border
}

fn bilinear(img: &[f64], w: usize, h: usize, x: f64, y: f64) -> Option<f64> {
    // pixel centers sit at integer + 0.5
    let (fx, fy) = (x - 0.5, y - 0.5);
    if fx < 0.0 || fy < 0.0 || fx > (w - 1) as f64 || fy > (h - 1) as f64 {
        return None;
    }
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
    let g = |x: usize, y: usize| img[y * w + x];
    Some(
        g(x0, y0) * (1.0 - tx) * (1.0 - ty)
            + g(x1, y0) * tx * (1.0 - ty)
            + g(x0, y1) * (1.0 - tx) * ty
            + g(x1, y1) * tx * ty,
    )
}

/// Finds the particle in `frame` given a particle-free `background`.
pub fn extract_feature(
    frame: &ImageFrame,
    background: &ImageFrame,
    expected_diameter_px: f64,
    params: &ExtractParams,
    seed: u64,
) -> Result<FeatureObservation> {
    if !(expected_diameter_px > 3.0) {
        return Err(Error::Detection(format!(
            "expected diameter must exceed 3 px (got {expected_diameter_px})"
        )));
    }
    if frame.width != background.width || frame.height != background.height {
        return Err(Error::Detection("frame and background sizes differ".into()));
    }
    let (w, h) = (frame.width, frame.height);
    let d = expected_diameter_px;

    // (1) background subtraction
    let diff: Vec<f64> = frame
        .pixels
        .iter()
        .zip(&background.pixels)
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .collect();

    // (2) adaptive binarization against the local mean
    let sat = Integral::new(w, h, |x, y| diff[y * w + x]);
    let half = (d.round() as usize).max(1);
    let fg: Vec<bool> = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let r = Rect {
                x0: x.saturating_sub(half),
                y0: y.saturating_sub(half),
                x1: (x + half + 1).min(w),
                y1: (y + half + 1).min(h),
            };
            let mean = sat.sum(r.x0, r.y0, r.x1, r.y1) / (r.w() * r.h()) as f64;
            diff[i] > mean + params.threshold_offset
        })
        .collect();

    // (3) coarse localization by foreground count
    let count = Integral::new(w, h, |x, y| fg[y * w + x] as u8 as f64);
    let win = ((1.5 * d).round() as usize).max(2);
    let stride = ((d / 2.0).round() as usize).max(1);
    let (wx, wy) = (win.min(w), win.min(h));
    let mut best = (0.0, Rect { x0: 0, y0: 0, x1: wx, y1: wy });
    for &y0 in &window_starts(h, wy, stride) {
        for &x0 in &window_starts(w, wx, stride) {
            let c = count.sum(x0, y0, x0 + wx, y0 + wy);
            if c > best.0 {
                best = (c, Rect { x0, y0, x1: x0 + wx, y1: y0 + wy });
            }
        }
    }
    let min_count = params.min_fill * std::f64::consts::PI * d * d / 4.0;
    if best.0 < min_count.max(1.0) {
        return Ok(FeatureObservation::invalid("particle not detected", 0));
    }

    // the window may cut the disc, so work on a grown region
    let grow = (d / 2.0).ceil() as usize + 2;
    let roi = Rect {
        x0: best.1.x0.saturating_sub(grow),
        y0: best.1.y0.saturating_sub(grow),
        x1: (best.1.x1 + grow).min(w),
        y1: (best.1.y1 + grow).min(h),
    };
    let (rw, rh) = (roi.w(), roi.h());
    let local: Vec<bool> = (0..rw * rh)
        .map(|i| fg[(roi.y0 + i / rw) * w + roi.x0 + i % rw])
        .collect();

    // (4) closing: dilation, then erosion
    let closed = morph(&morph(&local, rw, rh, true), rw, rh, false);

    // (5) outer border of the largest blob
    let comp = largest_component(&closed, rw, rh);
    if comp.is_empty() {
        return Ok(FeatureObservation::invalid("particle not detected", 0));
    }
    let start = *comp.iter().min().expect("non-empty");
    let border = trace_border(&closed, rw, rh, start);
    if border.len() < params.min_contour_len {
        return Ok(FeatureObservation::invalid("contour too short", border.len()));
    }

    // sub-pixel edge positions along rays from the blob centroid
    let local_diff: Vec<f64> = (0..rw * rh)
        .map(|i| diff[(roi.y0 + i / rw) * w + roi.x0 + i % rw])
        .collect();
    let mut in_comp = vec![false; rw * rh];
    for &i in &comp {
        in_comp[i] = true;
    }
    let cx = comp.iter().map(|&i| (i % rw) as f64 + 0.5).sum::<f64>() / comp.len() as f64;
    let cy = comp.iter().map(|&i| (i / rw) as f64 + 0.5).sum::<f64>() / comp.len() as f64;
    let interior: Vec<f64> = comp
        .iter()
        .filter(|&&i| {
            let (x, y) = (i % rw, i / rw);
            x > 0 && y > 0 && x + 1 < rw && y + 1 < rh && {
                (0..9).all(|k| in_comp[(y + k / 3 - 1) * rw + x + k % 3 - 1])
            }
        })
        .map(|&i| local_diff[i])
        .collect();
    let fg_level = if interior.is_empty() {
        comp.iter().map(|&i| local_diff[i]).fold(0.0, f64::max)
    } else {
        let mut v = interior;
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let outside: Vec<f64> = (0..rw * rh)
        .filter(|&i| !closed[i])
        .map(|i| local_diff[i])
        .collect();
    let bg_level = if outside.is_empty() {
        0.0
    } else {
        outside.iter().sum::<f64>() / outside.len() as f64
    };
    let level = (fg_level + bg_level) / 2.0;
    let r_max = d + 2.0;
    let step = 0.05;
    let mut edges = Vec::with_capacity(border.len());
    for &(bx, by) in &border {
        let (dx, dy) = (bx as f64 + 0.5 - cx, by as f64 + 0.5 - cy);
        let n = (dx * dx + dy * dy).sqrt();
        if n < 1e-9 {
            continue;
        }
        let (ux, uy) = (dx / n, dy / n);
        let mut prev: Option<(f64, f64)> = None;
        let mut r = 0.0;
        while r <= r_max {
            let Some(val) = bilinear(&local_diff, rw, rh, cx + ux * r, cy + uy * r) else { break };
            if let Some((pr, pv)) = prev {
                if pv >= level && val < level {
                    let t = (pv - level) / (pv - val);
                    let re = pr + t * (r - pr);
                    edges.push((cx + ux * re + roi.x0 as f64, cy + uy * re + roi.y0 as f64));
                    break;
                }
            }
            prev = Some((r, val));
            r += step;
        }
    }
    if edges.len() < params.min_contour_len {
        return Ok(FeatureObservation::invalid("contour too short", edges.len()));
    }

    // (6) robust ellipse fit
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let Some(fit) = fit_conic_ransac(&edges, &params.ransac, &mut rng) else {
        return Ok(FeatureObservation::invalid("no ellipse fits the contour", border.len()));
    };
    let (u, v) = fit.center;
    if !(u >= 0.0 && v >= 0.0 && u < w as f64 && v < h as f64) {
        return Ok(FeatureObservation::invalid("fitted center outside the image", border.len()));
    }
    Ok(FeatureObservation {
        u,
        v,
        axes: fit.semi_axes,
        valid: true,
        contour_len: border.len(),
        inliers: fit.inliers,
        reason: None,
    })
}
