//! Track confirmation and constant-velocity extrapolation to the moment
//! the trap field is up.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TimingConfig, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    /// Localized position, mm.
    pub world: Vec3,
    /// Capture time, s.
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub predicted: Vec3,
    /// mm/s
    pub velocity: Vec3,
    /// s
    pub horizon: f64,
}

fn check_order(samples: &[TrackSample; 3]) -> Result<()> {
    for pair in samples.windows(2) {
        if pair[1].t == pair[0].t {
            return Err(Error::config("track", format!("duplicate timestamp {}", pair[0].t)));
        }
        if !(pair[1].t > pair[0].t) {
            return Err(Error::config("track", "timestamps must increase"));
        }
    }
    Ok(())
}

/// True when the middle sample sits within `tol` mm of the straight line
/// from the first to the last sample, evaluated at its own timestamp.
pub fn confirm_track(samples: &[TrackSample; 3], tol: f64) -> Result<bool> {
    check_order(samples)?;
    let [a, b, c] = samples;
    let s = (b.t - a.t) / (c.t - a.t);
    let expected = a.world + (c.world - a.world) * s;
    Ok(b.world.distance(expected) <= tol)
}

/// `C₃ + (C₃ − C₁)/(t₃ − t₁)·(t_dip + t_trans)`. The middle sample only
/// takes part in confirmation.
pub fn predict_position(samples: &[TrackSample; 3], timing: &TimingConfig) -> Result<PredictionResult> {
    predict_with_horizon(samples, timing.horizon())
}

pub fn predict_with_horizon(samples: &[TrackSample; 3], horizon: f64) -> Result<PredictionResult> {
    let (first, last) = (samples[0], samples[2]);
    if last.t == first.t {
        return Err(Error::config("track", "first and last samples share a timestamp"));
    }
    if !(horizon > 0.0) {
        return Err(Error::config("timing", "prediction horizon must be > 0"));
    }
    let velocity = (last.world - first.world) / (last.t - first.t);
    Ok(PredictionResult {
        predicted: last.world + velocity * horizon,
        velocity,
        horizon,
    })
}
