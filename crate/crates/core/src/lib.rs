//! Simulator for automated acoustic trapping with a 50×50 ultrasonic phased
//! array and a stereo pair of microscopes.
//!
//! The crate covers hologram synthesis (single focus, spatially multiplexed
//! octahedral traps and an iterative comparator), point-source field
//! evaluation, a virtual camera pair with a particle feature extractor,
//! Jacobian calibration and localization, constant-velocity prediction and
//! the closed trapping loop.

pub mod bench;
pub mod calibration;
pub mod config;
pub mod control;
pub mod error;
pub mod field;
pub mod hologram;
pub mod model;
pub mod prediction;
pub mod vision;

pub use config::{load_config, load_config_with_overrides, SimConfig, CONFIG_ENV};
pub use error::{Error, Result};
pub use model::{Contrast, MediumConfig, ParticleState, TimingConfig, TransducerArray, Vec3};
