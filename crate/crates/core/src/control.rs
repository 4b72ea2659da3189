//! Closed-loop trapping over a simulated scene.
//!
//! Time advances on the camera clock. Each tick renders both views of the
//! ground-truth particle, extracts features and localizes them. Three
//! consecutive consistent detections produce a prediction, the trap is
//! dispatched, and the field switches on exactly `t_dip + t_trans` after the
//! third frame. Containment is checked against ground truth at that instant;
//! a contained particle is pinned (velocity set to zero) and must stay
//! contained for `confirm_ticks` further ticks.

use std::io::Write;

use nalgebra::Matrix3x4;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{localize_with, CalibrationFixture, CameraId, JacobianMatrix, ReferenceSet};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::hologram::{design_octahedral, make_focus_hologram, HologramConfig, TrapSpec};
use crate::model::{
    positive, Contrast, MediumConfig, ParticleState, TankConfig, TimingConfig, TransducerArray, Vec3,
    WorkspaceConfig,
};
use crate::prediction::{confirm_track, predict_position, PredictionResult, TrackSample};
use crate::vision::{extract_feature, render_background, render_frame, CameraModel, ExtractParams, ImageFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    /// Default fall speed for generated scenarios, mm/s.
    pub fall_speed: f64,
    /// Containment radius, mm. Half a wavelength when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub containment_tol: Option<f64>,
    /// Consecutive contained ticks after activation that count as trapped.
    pub confirm_ticks: usize,
    /// Camera frames before giving up.
    pub frame_budget: usize,
    /// Track confirmation tolerance, mm.
    pub consistency_tol: f64,
    /// Place every trap here instead of at the prediction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_override: Option<Vec3>,
    /// Gaussian jitter on extracted feature coordinates, pixels.
    pub pixel_noise: f64,
    /// Probability that a stereo detection is lost.
    pub dropout: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            fall_speed: 10.0,
            containment_tol: None,
            confirm_ticks: 3,
            frame_budget: 150,
            consistency_tol: 0.3,
            target_override: None,
            pixel_noise: 1.0,
            dropout: 0.05,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        positive("control.fall_speed", self.fall_speed)?;
        if let Some(t) = self.containment_tol {
            positive("control.containment_tol", t)?;
        }
        if self.confirm_ticks == 0 {
            return Err(Error::config("control.confirm_ticks", "must be >= 1"));
        }
        if self.frame_budget < 3 {
            return Err(Error::config("control.frame_budget", "must allow at least 3 frames"));
        }
        positive("control.consistency_tol", self.consistency_tol)?;
        if !(self.pixel_noise >= 0.0) {
            return Err(Error::config("control.pixel_noise", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(Error::config("control.dropout", "must be in [0, 1]"));
        }
        Ok(())
    }
}

/// One simulated trapping attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub particle: ParticleState,
    /// Gaussian jitter on feature coordinates, pixels.
    pub pixel_noise: f64,
    /// Gray-level sensor noise, standard deviation.
    pub image_noise: f64,
    pub dropout: f64,
    pub seed: u64,
    pub timing: TimingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap_diameter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_override: Option<Vec3>,
}

impl SimScenario {
    pub fn validate(&self, world: &World) -> Result<()> {
        self.particle.validate()?;
        self.timing.validate()?;
        if !world.in_fov(self.particle.position) {
            return Err(Error::geometry(format!(
                "initial particle position {} is outside the field of view",
                self.particle.position
            )));
        }
        if !(self.pixel_noise >= 0.0 && self.image_noise >= 0.0 && (0.0..=1.0).contains(&self.dropout)) {
            return Err(Error::config("scenario", "noise levels must be >= 0 and dropout in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// No confirmed track: the particle left the view or was never seen
    /// often enough within the frame budget.
    DetectionStarvation,
    /// The particle was outside the trapping zone when the field came on.
    Missed,
    /// The predicted trap could not be realized (outside the workspace).
    InvalidTrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum LoopState {
    MaterialSelected,
    Acquiring { samples: usize },
    Predicting,
    Dispatching { ready_at: f64 },
    FieldActive { trap: TrapSpec },
    Verifying { holds: usize },
    Trapped,
    Failed { reason: FailureReason },
}

impl LoopState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, LoopState::Trapped | LoopState::Failed { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            LoopState::MaterialSelected => "material_selected",
            LoopState::Acquiring { .. } => "acquiring",
            LoopState::Predicting => "predicting",
            LoopState::Dispatching { .. } => "dispatching",
            LoopState::FieldActive { .. } => "field_active",
            LoopState::Verifying { .. } => "verifying",
            LoopState::Trapped => "trapped",
            LoopState::Failed { .. } => "failed",
        }
    }

    /// Whether `next` may follow `self`.
    pub fn can_transition(&self, next: &LoopState) -> bool {
        use LoopState::*;
        match (self, next) {
            (Trapped | Failed { .. }, _) => false,
            (_, Failed { .. }) => true,
            (MaterialSelected, Acquiring { samples: 0 }) => true,
            (Acquiring { .. }, Acquiring { .. }) => true,
            (Acquiring { samples }, Predicting) => *samples >= 3,
            (Predicting, Dispatching { .. }) => true,
            (Dispatching { .. }, FieldActive { .. }) => true,
            (FieldActive { .. }, Verifying { .. }) => true,
            (Verifying { holds: a }, Verifying { holds: b }) => *b == a + 1,
            (Verifying { .. }, Trapped) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "reason", rename_all = "snake_case")]
pub enum Outcome {
    Trapped,
    Failed(FailureReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLog {
    pub index: usize,
    pub t: f64,
    pub truth: Vec3,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed: Option<Vec3>,
    pub state: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapReport {
    pub outcome: Outcome,
    pub material: String,
    pub diameter_um: f64,
    pub trap: Option<TrapSpec>,
    pub prediction: Option<PredictionResult>,
    /// Timestamp of the frame completing the track, s.
    pub third_detection_time: Option<f64>,
    /// Field switch-on time, s.
    pub activation_time: Option<f64>,
    /// Time from the first frame to field activation, s.
    pub time_to_trap: Option<f64>,
    pub trap_position: Option<Vec3>,
    pub particle_at_activation: Option<Vec3>,
    /// Distance between the two positions above, mm.
    pub deviation: Option<f64>,
    pub frames: Vec<FrameLog>,
}

impl TrapReport {
    pub fn trapped(&self) -> bool {
        self.outcome == Outcome::Trapped
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

/// Everything a trap loop needs besides the scenario.
#[derive(Debug, Clone)]
pub struct World {
    pub array: TransducerArray,
    pub medium: MediumConfig,
    pub tank: TankConfig,
    pub workspace: WorkspaceConfig,
    pub hologram: HologramConfig,
    pub control: ControlConfig,
    pub extract: ExtractParams,
    pub cam_h: CameraModel,
    pub cam_v: CameraModel,
    pub jacobian: JacobianMatrix,
    pub refs: ReferenceSet,
}

impl World {
    /// Bundled calibration and cameras at the configured image scale.
    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let s = cfg.vision.image_scale;
        let fixture = CalibrationFixture::load();
        let world = Self {
            array: cfg.array,
            medium: cfg.medium,
            tank: cfg.tank,
            workspace: cfg.workspace,
            hologram: cfg.hologram.clone(),
            control: cfg.control.clone(),
            extract: cfg.vision.extract_params(),
            cam_h: CameraModel::fixture(CameraId::H, &cfg.vision),
            cam_v: CameraModel::fixture(CameraId::V, &cfg.vision),
            jacobian: fixture.jacobian().scaled(s),
            refs: fixture.references().scaled(s),
        };
        world.check()?;
        Ok(world)
    }

    /// Cameras must project with the same Jacobian used for localization.
    pub fn check(&self) -> Result<()> {
        let scale = self.jacobian.matrix().abs().max();
        for cam in [&self.cam_h, &self.cam_v] {
            let block = self.jacobian.camera_block(cam.id);
            for r in 0..2 {
                for c in 0..3 {
                    if (block[r][c] - cam.jacobian[r][c]).abs() > 1e-9 * scale {
                        return Err(Error::config(
                            "world",
                            format!("camera {:?} does not match the calibrated Jacobian", cam.id),
                        ));
                    }
                }
            }
        }
        self.jacobian.pseudo_inverse()?;
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        crate::model::wavelength(&self.medium, &self.array).expect("validated")
    }

    pub fn containment_tol(&self) -> f64 {
        self.control.containment_tol.unwrap_or(self.wavelength() / 2.0)
    }

    pub fn in_fov(&self, p: Vec3) -> bool {
        self.cam_h.sees(p) && self.cam_v.sees(p)
    }

    /// Scenario with the configured noise knobs.
    pub fn scenario(&self, particle: ParticleState, timing: TimingConfig, seed: u64) -> SimScenario {
        SimScenario {
            particle,
            pixel_noise: self.control.pixel_noise,
            image_noise: self.cam_h.noise_sigma,
            dropout: self.control.dropout,
            seed,
            timing,
            trap_diameter: None,
            target_override: self.control.target_override,
        }
    }
}

/// Constant-velocity motion over `dt` seconds.
pub fn step_particle(state: &ParticleState, dt: f64) -> ParticleState {
    ParticleState {
        position: state.position + state.velocity * dt,
        ..*state
    }
}

pub fn containment(particle_pos: Vec3, trap: &TrapSpec, tol: f64) -> bool {
    particle_pos.distance(trap.center()) <= tol
}

fn trap_for(contrast: Contrast, center: Vec3, diameter: f64) -> TrapSpec {
    match contrast {
        Contrast::Negative => TrapSpec::Focus { point: center },
        Contrast::Positive => TrapSpec::Octahedral { center, diameter },
    }
}

/// Independent seed for one (frame, camera) pair.
fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

struct Loop {
    state: LoopState,
    frames: Vec<FrameLog>,
}

impl Loop {
    fn go(&mut self, next: LoopState) {
        debug_assert!(
            self.state.can_transition(&next),
            "illegal transition {:?} -> {:?}",
            self.state,
            next
        );
        self.state = next;
    }
}

/// Runs one scenario to a terminal state. Deterministic in the scenario.
pub fn run_trap_loop(scenario: &SimScenario, world: &World) -> Result<TrapReport> {
    world.check()?;
    scenario.validate(world)?;
    let pinv: Matrix3x4<f64> = world.jacobian.pseudo_inverse()?;
    let timing = &scenario.timing;
    let dt = timing.frame_interval();
    let tol = world.containment_tol();
    let contrast = scenario.particle.contrast;
    let diameter = scenario.trap_diameter.unwrap_or(world.hologram.octahedron_diameter);

    let mut cam_h = world.cam_h.clone();
    let mut cam_v = world.cam_v.clone();
    cam_h.noise_sigma = scenario.image_noise;
    cam_v.noise_sigma = scenario.image_noise;
    let exp_h = cam_h.expected_diameter_px(scenario.particle.diameter_um);
    let exp_v = cam_v.expected_diameter_px(scenario.particle.diameter_um);
    let bg_h = render_background(&cam_h, 0.0, sub_seed(scenario.seed, 0));
    let bg_v = render_background(&cam_v, 0.0, sub_seed(scenario.seed, 1));
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let jitter = (scenario.pixel_noise > 0.0).then(|| Normal::new(0.0, scenario.pixel_noise).expect("sigma >= 0"));

    let mut lp = Loop {
        state: LoopState::MaterialSelected,
        frames: Vec::new(),
    };
    lp.go(LoopState::Acquiring { samples: 0 });

    let mut report = TrapReport {
        outcome: Outcome::Failed(FailureReason::DetectionStarvation),
        material: contrast.material_name().into(),
        diameter_um: scenario.particle.diameter_um,
        trap: None,
        prediction: None,
        third_detection_time: None,
        activation_time: None,
        time_to_trap: None,
        trap_position: None,
        particle_at_activation: None,
        deviation: None,
        frames: Vec::new(),
    };

    let mut particle = scenario.particle;
    let mut t_particle = 0.0;
    let mut samples: Vec<TrackSample> = Vec::with_capacity(3);
    let mut trap: Option<TrapSpec> = None;

    for k in 0..world.control.frame_budget {
        let t = k as f64 * dt;

        // activation happens between ticks
        if let LoopState::Dispatching { ready_at } = lp.state {
            if ready_at <= t {
                particle = step_particle(&particle, ready_at - t_particle);
                t_particle = ready_at;
                let tr = trap.expect("dispatched trap");
                lp.go(LoopState::FieldActive { trap: tr });
                let dev = particle.position.distance(tr.center());
                report.activation_time = Some(ready_at);
                report.time_to_trap = Some(ready_at);
                report.particle_at_activation = Some(particle.position);
                report.deviation = Some(dev);
                if containment(particle.position, &tr, tol) {
                    particle.velocity = Vec3::ZERO;
                    lp.go(LoopState::Verifying { holds: 0 });
                } else {
                    lp.go(LoopState::Failed { reason: FailureReason::Missed });
                }
            }
        }
        if lp.state.is_terminal() {
            break;
        }

        particle = step_particle(&particle, t - t_particle);
        t_particle = t;
        let mut observed = None;

        match lp.state.clone() {
            LoopState::Acquiring { .. } => {
                if !world.in_fov(particle.position) {
                    lp.go(LoopState::Failed { reason: FailureReason::DetectionStarvation });
                } else {
                    let fh = render_frame(&cam_h, &particle, t, sub_seed(scenario.seed, 2 + 2 * k as u64)).frame;
                    let fv = render_frame(&cam_v, &particle, t, sub_seed(scenario.seed, 3 + 2 * k as u64)).frame;
                    let lost = scenario.dropout > 0.0 && rng.random_bool(scenario.dropout);
                    let loc = if lost {
                        None
                    } else {
                        locate(world, &pinv, [(&fh, &bg_h, exp_h), (&fv, &bg_v, exp_v)], k, jitter.as_ref(), &mut rng)?
                    };
                    match loc {
                        Some(p) => {
                            observed = Some(p);
                            if samples.len() == 3 {
                                samples.remove(0);
                            }
                            samples.push(TrackSample { world: p, t });
                        }
                        None => samples.clear(),
                    }
                    lp.go(LoopState::Acquiring { samples: samples.len() });
                    if samples.len() == 3 {
                        let track = [samples[0], samples[1], samples[2]];
                        if confirm_track(&track, world.control.consistency_tol)? {
                            lp.go(LoopState::Predicting);
                            let pred = predict_position(&track, timing)?;
                            let center = scenario.target_override.unwrap_or(pred.predicted);
                            let tr = trap_for(contrast, center, diameter);
                            report.prediction = Some(pred);
                            report.third_detection_time = Some(t);
                            report.trap = Some(tr);
                            report.trap_position = Some(center);
                            if dispatch(world, &tr).is_err() {
                                lp.go(LoopState::Failed { reason: FailureReason::InvalidTrap });
                            } else {
                                trap = Some(tr);
                                lp.go(LoopState::Dispatching { ready_at: t + timing.horizon() });
                            }
                        } else {
                            samples.remove(0);
                        }
                    }
                }
            }
            LoopState::Verifying { holds } => {
                let tr = trap.expect("active trap");
                if containment(particle.position, &tr, tol) {
                    lp.go(LoopState::Verifying { holds: holds + 1 });
                    if holds + 1 >= world.control.confirm_ticks {
                        lp.go(LoopState::Trapped);
                    }
                } else {
                    lp.go(LoopState::Failed { reason: FailureReason::Missed });
                }
            }
            _ => {}
        }

        lp.frames.push(FrameLog {
            index: k,
            t,
            truth: particle.position,
            observed,
            state: lp.state.name().into(),
        });
        if lp.state.is_terminal() {
            break;
        }
    }

    report.outcome = match lp.state {
        LoopState::Trapped => Outcome::Trapped,
        LoopState::Failed { reason } => Outcome::Failed(reason),
        _ => Outcome::Failed(FailureReason::DetectionStarvation),
    };
    report.frames = std::mem::take(&mut lp.frames);
    Ok(report)
}

type View<'a> = (&'a ImageFrame, &'a ImageFrame, f64);

/// Stereo detection and localization; `None` when either view misses.
fn locate(
    world: &World,
    pinv: &Matrix3x4<f64>,
    views: [View<'_>; 2],
    k: usize,
    jitter: Option<&Normal<f64>>,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Vec3>> {
    let mut px = [(0.0, 0.0); 2];
    for (i, (frame, bg, exp)) in views.into_iter().enumerate() {
        let obs = extract_feature(frame, bg, exp, &world.extract, (k * 2 + i) as u64)?;
        let Some(c) = obs.center() else { return Ok(None) };
        px[i] = c;
    }
    if let Some(n) = jitter {
        for p in &mut px {
            p.0 += n.sample(rng);
            p.1 += n.sample(rng);
        }
    }
    Ok(Some(localize_with(pinv, &world.refs, px[0], px[1])))
}

/// Computes the hologram the host would send.
fn dispatch(world: &World, trap: &TrapSpec) -> Result<()> {
    trap.validate(&world.workspace)?;
    match *trap {
        TrapSpec::Focus { point } => make_focus_hologram(&world.array, point, &world.medium).map(drop),
        TrapSpec::Octahedral { center, diameter } => design_octahedral(
            &world.array,
            center,
            diameter,
            &world.medium,
            world.hologram.sm_phasing,
            &world.hologram.rotation(),
        )
        .map(drop),
    }
}

/// Falling particles started in the upper middle of the view.
pub fn generate_batch(world: &World, n: usize, seed: u64, contrast: Contrast, timing: &TimingConfig) -> Vec<SimScenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = world.workspace.center;
    let v = world.control.fall_speed;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let position = Vec3::new(
            c.x + rng.random_range(-6.0..6.0),
            c.y + rng.random_range(-6.0..6.0),
            c.z + rng.random_range(2.0..10.0),
        );
        let velocity = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            -v * rng.random_range(0.5..1.5),
        );
        let particle = ParticleState {
            position,
            velocity,
            diameter_um: rng.random_range(400.0..=700.0),
            contrast,
        };
        let s = rng.next_u64();
        if world.in_fov(position) {
            out.push(world.scenario(particle, *timing, s));
        }
    }
    out
}

/// Runs scenarios in parallel; reports come back in scenario order.
pub fn run_batch(scenarios: &[SimScenario], world: &World) -> Result<Vec<TrapReport>> {
    scenarios.par_iter().map(|s| run_trap_loop(s, world)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub material: String,
    pub runs: usize,
    pub trapped: usize,
    pub success_rate: f64,
    /// Over trapped runs, mm; NaN when none.
    pub mean_deviation: f64,
    pub median_deviation: f64,
    pub mean_time_to_trap: f64,
}

pub fn summarize(reports: &[TrapReport]) -> Vec<BatchSummary> {
    let mut materials: Vec<&str> = reports.iter().map(|r| r.material.as_str()).collect();
    materials.sort_unstable();
    materials.dedup();
    materials
        .into_iter()
        .map(|m| {
            let group: Vec<&TrapReport> = reports.iter().filter(|r| r.material == m).collect();
            let ok: Vec<&TrapReport> = group.iter().copied().filter(|r| r.trapped()).collect();
            let mut devs: Vec<f64> = ok.iter().filter_map(|r| r.deviation).collect();
            devs.sort_by(f64::total_cmp);
            let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
            let times: Vec<f64> = ok.iter().filter_map(|r| r.time_to_trap).collect();
            BatchSummary {
                material: m.into(),
                runs: group.len(),
                trapped: ok.len(),
                success_rate: ok.len() as f64 / group.len() as f64,
                mean_deviation: mean(&devs),
                median_deviation: median(&devs),
                mean_time_to_trap: mean(&times),
            }
        })
        .collect()
}

pub fn median(sorted: &[f64]) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => sorted[n / 2],
        n => (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0,
    }
}

/// Per-material summary rows.
pub fn write_summary_csv<W: Write>(summaries: &[BatchSummary], mut w: W) -> Result<()> {
    writeln!(w, "material,runs,trapped,success_rate,mean_deviation_mm,median_deviation_mm,mean_time_to_trap_s")?;
    for s in summaries {
        writeln!(
            w,
            "{},{},{},{:.4},{:.4},{:.4},{:.4}",
            s.material, s.runs, s.trapped, s.success_rate, s.mean_deviation, s.median_deviation, s.mean_time_to_trap
        )?;
    }
    Ok(())
}

/// One row per run: trap position, particle position at activation and
/// their distance.
pub fn write_runs_csv<W: Write>(reports: &[TrapReport], mut w: W) -> Result<()> {
    writeln!(
        w,
        "run,material,diameter_um,outcome,trap_x,trap_y,trap_z,particle_x,particle_y,particle_z,deviation_mm,time_to_trap_s"
    )?;
    let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for (i, r) in reports.iter().enumerate() {
        let outcome = match r.outcome {
            Outcome::Trapped => "trapped".to_string(),
            Outcome::Failed(reason) => serde_json::to_value(reason)?.as_str().unwrap_or("failed").to_string(),
        };
        let tp = r.trap_position;
        let pp = r.particle_at_activation;
        writeln!(
            w,
            "{i},{},{:.0},{outcome},{},{},{},{},{},{},{},{}",
            r.material,
            r.diameter_um,
            f(tp.map(|p| p.x)),
            f(tp.map(|p| p.y)),
            f(tp.map(|p| p.z)),
            f(pp.map(|p| p.x)),
            f(pp.map(|p| p.y)),
            f(pp.map(|p| p.z)),
            f(r.deviation),
            f(r.time_to_trap),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> World {
        World::from_config(&SimConfig::default()).unwrap()
    }

    fn falling(contrast: Contrast) -> ParticleState {
        ParticleState {
            position: Vec3::new(20.0, 24.0, 42.0),
            velocity: Vec3::new(0.0, 0.0, -10.0),
            diameter_um: 400.0,
            contrast,
        }
    }

    fn quiet(w: &World, p: ParticleState, seed: u64) -> SimScenario {
        SimScenario {
            pixel_noise: 0.0,
            image_noise: 0.0,
            dropout: 0.0,
            ..w.scenario(p, TimingConfig::default(), seed)
        }
    }

    #[test]
    fn step_examples() {
        let p = falling(Contrast::Positive);
        let s = step_particle(&p, 1.0 / 15.0);
        assert!((s.position.z - p.position.z + 0.6667).abs() < 1e-4);
        let half = step_particle(&step_particle(&p, 0.05), 0.05);
        let full = step_particle(&p, 0.1);
        assert!(half.position.distance(full.position) < 1e-12);
        let still = ParticleState { velocity: Vec3::ZERO, ..p };
        assert_eq!(step_particle(&still, 3.0), still);
    }

    #[test]
    fn containment_examples() {
        let w = world();
        let tol = w.containment_tol();
        assert!((tol - 0.32609).abs() < 1e-4);
        let trap = TrapSpec::Octahedral { center: Vec3::new(25.0, 25.0, 40.0), diameter: 2.4 };
        assert!(containment(Vec3::new(25.0, 25.0, 40.0), &trap, tol));
        assert!(containment(Vec3::new(25.236, 25.0, 40.0), &trap, tol));
        assert!(!containment(Vec3::new(25.5, 25.0, 40.0), &trap, tol));
    }

    #[test]
    fn transitions_follow_the_diagram() {
        use LoopState::*;
        assert!(MaterialSelected.can_transition(&Acquiring { samples: 0 }));
        assert!(!MaterialSelected.can_transition(&Predicting));
        assert!(!Acquiring { samples: 2 }.can_transition(&Predicting));
        assert!(Acquiring { samples: 3 }.can_transition(&Predicting));
        assert!(Verifying { holds: 1 }.can_transition(&Verifying { holds: 2 }));
        assert!(!Verifying { holds: 1 }.can_transition(&Verifying { holds: 3 }));
        assert!(!Trapped.can_transition(&Failed { reason: FailureReason::Missed }));
        assert!(!Failed { reason: FailureReason::Missed }.can_transition(&Trapped));
    }

    #[test]
    fn noiseless_fall_is_trapped_precisely() {
        let w = world();
        let s = quiet(&w, falling(Contrast::Positive), 1);
        let r = run_trap_loop(&s, &w).unwrap();
        assert_eq!(r.outcome, Outcome::Trapped, "{r:?}");
        assert!(r.deviation.unwrap() < 0.05, "{:?}", r.deviation);
        assert!(matches!(r.trap, Some(TrapSpec::Octahedral { .. })));
        let third = r.third_detection_time.unwrap();
        assert_eq!(r.activation_time.unwrap(), third + s.timing.horizon());
        let dev = r.trap_position.unwrap().distance(r.particle_at_activation.unwrap());
        assert_eq!(dev, r.deviation.unwrap());
    }

    #[test]
    fn negative_contrast_uses_a_focus() {
        let w = world();
        let r = run_trap_loop(&quiet(&w, falling(Contrast::Negative), 2), &w).unwrap();
        assert!(r.trapped());
        assert!(matches!(r.trap, Some(TrapSpec::Focus { .. })));
    }

    #[test]
    fn rising_particle_starves() {
        let w = world();
        let mut p = falling(Contrast::Positive);
        // just below the top of the side view, moving up fast
        p.position = Vec3::new(20.0, 24.0, 50.0);
        while w.in_fov(p.position + Vec3::Z * 0.1) {
            p.position.z += 0.1;
        }
        p.velocity = Vec3::new(0.0, 0.0, 20.0);
        let r = run_trap_loop(&quiet(&w, p, 3), &w).unwrap();
        assert_eq!(r.outcome, Outcome::Failed(FailureReason::DetectionStarvation));
        assert!(r.trap.is_none());
    }

    #[test]
    fn reports_are_deterministic() {
        let w = world();
        let s = w.scenario(falling(Contrast::Positive), TimingConfig::default(), 77);
        let a = run_trap_loop(&s, &w).unwrap().to_json_line();
        let b = run_trap_loop(&s, &w).unwrap().to_json_line();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_camera_is_a_setup_error() {
        let mut w = world();
        w.cam_h.jacobian[0][1] *= 1.1;
        let s = quiet(&w, falling(Contrast::Positive), 1);
        assert!(matches!(run_trap_loop(&s, &w), Err(Error::Config { .. })));
    }

    #[test]
    fn start_outside_view_rejected() {
        let w = world();
        let mut p = falling(Contrast::Positive);
        p.position = Vec3::new(200.0, 24.0, 42.0);
        assert!(run_trap_loop(&quiet(&w, p, 1), &w).is_err());
    }

    #[test]
    fn batch_keeps_scenario_order_and_trap_types() {
        let w = world();
        let mut scen = generate_batch(&w, 4, 5, Contrast::Positive, &TimingConfig::default());
        scen.extend(generate_batch(&w, 4, 6, Contrast::Negative, &TimingConfig::default()));
        let reports = run_batch(&scen, &w).unwrap();
        for (s, r) in scen.iter().zip(&reports) {
            assert_eq!(r.diameter_um, s.particle.diameter_um);
            match (s.particle.contrast, r.trap) {
                (Contrast::Positive, Some(TrapSpec::Focus { .. })) => panic!("focus for PS"),
                (Contrast::Negative, Some(TrapSpec::Octahedral { .. })) => panic!("octahedron for PDMS"),
                _ => {}
            }
        }
        let sums = summarize(&reports);
        assert_eq!(sums.len(), 2);
        let mut csv = Vec::new();
        write_summary_csv(&sums, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
        let mut runs = Vec::new();
        write_runs_csv(&reports, &mut runs).unwrap();
        assert_eq!(String::from_utf8(runs).unwrap().lines().count(), 9);
    }
}
