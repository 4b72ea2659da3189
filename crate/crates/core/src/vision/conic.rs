//! Ellipse fitting: general conics through five points inside RANSAC,
//! followed by an algebraic least-squares refit on the inliers.

use nalgebra::{Matrix6, SymmetricEigen, Vector6};
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// `a·x² + b·x·y + c·y² + d·x + e·y + f = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conic {
    pub coef: [f64; 6],
}

impl Conic {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let [a, b, c, d, e, f] = self.coef;
        a * x * x + b * x * y + c * y * y + d * x + e * y + f
    }

    pub fn is_ellipse(&self) -> bool {
        let [a, b, c, ..] = self.coef;
        b * b - 4.0 * a * c < 0.0
    }

    /// First-order geometric distance.
    pub fn sampson_distance(&self, x: f64, y: f64) -> f64 {
        let [a, b, c, d, e, _] = self.coef;
        let gx = 2.0 * a * x + b * y + d;
        let gy = b * x + 2.0 * c * y + e;
        let g = (gx * gx + gy * gy).sqrt();
        if g == 0.0 {
            f64::INFINITY
        } else {
            self.value(x, y).abs() / g
        }
    }

    /// Center, semi-axes (major first) and major-axis angle.
    pub fn ellipse(&self) -> Option<EllipseFit> {
        if !self.is_ellipse() {
            return None;
        }
        let [a, b, c, d, e, _] = self.coef;
        let det = 4.0 * a * c - b * b;
        let x0 = (b * e - 2.0 * c * d) / det;
        let y0 = (b * d - 2.0 * a * e) / det;
        let f0 = self.value(x0, y0);
        // eigenvalues of [[a, b/2], [b/2, c]]
        let mean = (a + c) / 2.0;
        let diff = (((a - c) / 2.0).powi(2) + (b / 2.0).powi(2)).sqrt();
        let (l1, l2) = (mean - diff, mean + diff);
        let s1 = -f0 / l1;
        let s2 = -f0 / l2;
        if !(s1 > 0.0 && s2 > 0.0) {
            return None;
        }
        // l1 is the smaller magnitude eigenvalue when both share a sign
        let (major, minor) = if s1 >= s2 { (s1.sqrt(), s2.sqrt()) } else { (s2.sqrt(), s1.sqrt()) };
        let angle = 0.5 * b.atan2(a - c) + if s1 >= s2 { std::f64::consts::FRAC_PI_2 } else { 0.0 };
        Some(EllipseFit {
            center: (x0, y0),
            semi_axes: (major, minor),
            angle,
            inliers: 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseFit {
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    /// Major axis direction, radians from +u.
    pub angle: f64,
    pub inliers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub iterations: usize,
    /// Sampson distance band, pixels.
    pub inlier_band: f64,
    /// Inlier fraction that ends the search.
    pub early_exit: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 200,
            inlier_band: 1.5,
            early_exit: 0.9,
        }
    }
}

/// Translation and isotropic scale taking points near the origin with
/// mean distance √2.
struct Normalizer {
    mx: f64,
    my: f64,
    s: f64,
}

impl Normalizer {
    fn new(pts: &[(f64, f64)]) -> Self {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let md = pts.iter().map(|p| ((p.0 - mx).powi(2) + (p.1 - my).powi(2)).sqrt()).sum::<f64>() / n;
        let s = if md > 0.0 { std::f64::consts::SQRT_2 / md } else { 1.0 };
        Self { mx, my, s }
    }

    fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        ((p.0 - self.mx) * self.s, (p.1 - self.my) * self.s)
    }

    fn restore(&self, fit: EllipseFit) -> EllipseFit {
        EllipseFit {
            center: (fit.center.0 / self.s + self.mx, fit.center.1 / self.s + self.my),
            semi_axes: (fit.semi_axes.0 / self.s, fit.semi_axes.1 / self.s),
            ..fit
        }
    }
}

fn row(x: f64, y: f64) -> Vector6<f64> {
    Vector6::new(x * x, x * y, y * y, x, y, 1.0)
}

/// Algebraic fit `min ‖D·c‖` subject to `‖c‖ = 1`.
fn fit_algebraic(pts: &[(f64, f64)]) -> Option<Conic> {
    let mut scatter = Matrix6::zeros();
    for &(x, y) in pts {
        let r = row(x, y);
        scatter += r * r.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let (imin, _) = eig.eigenvalues.argmin();
    let v = eig.eigenvectors.column(imin);
    let coef = [v[0], v[1], v[2], v[3], v[4], v[5]];
    coef.iter().all(|c| c.is_finite()).then_some(Conic { coef })
}

/// Robust ellipse through `points` (pixels). Returns `None` when no
/// hypothesis is an ellipse.
pub fn fit_conic_ransac<R: Rng>(points: &[(f64, f64)], params: &RansacParams, rng: &mut R) -> Option<EllipseFit> {
    if points.len() < 5 {
        return None;
    }
    let norm = Normalizer::new(points);
    let pts: Vec<(f64, f64)> = points.iter().map(|&p| norm.apply(p)).collect();
    let band = params.inlier_band * norm.s;
    let inliers_of = |c: &Conic| -> Vec<usize> {
        (0..pts.len()).filter(|&i| c.sampson_distance(pts[i].0, pts[i].1) <= band).collect()
    };

    let mut best: Option<Vec<usize>> = None;
    for _ in 0..params.iterations {
        let pick: Vec<(f64, f64)> = sample(rng, pts.len(), 5).iter().map(|i| pts[i]).collect();
        let Some(c) = fit_algebraic(&pick) else { continue };
        if !c.is_ellipse() {
            continue;
        }
        let inl = inliers_of(&c);
        if best.as_ref().is_none_or(|b| inl.len() > b.len()) {
            let done = inl.len() as f64 >= params.early_exit * pts.len() as f64;
            best = Some(inl);
            if done {
                break;
            }
        }
    }
    let best = best?;
    let subset: Vec<(f64, f64)> = best.iter().map(|&i| pts[i]).collect();
    let conic = if subset.len() >= 5 { fit_algebraic(&subset)? } else { return None };
    let mut fit = conic.ellipse()?;
    fit.inliers = inliers_of(&conic).len();
    Some(norm.restore(fit))
}
