//! `acoustrap`: command-line front end for the acoustic trapping simulator.
//!
//! Every subcommand writes into `--out-dir` and finishes with a
//! `manifest.json` describing the run.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use acoustrap::{Error, SimConfig, Vec3, CONFIG_ENV};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit status for each error family.
pub mod exit {
    pub const OTHER: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const GEOMETRY: u8 = 4;
    pub const DETECTION: u8 = 5;
}

#[derive(Debug, Parser)]
#[command(name = "acoustrap", version, about = "Acoustic trapping simulator: holograms, fields, vision and closed-loop runs")]
#[command(after_help = "Exit codes: 0 success, 1 other failure, 2 usage, 3 configuration, 4 geometry, 5 detection failure.")]
pub struct Cli {
    /// TOML configuration file. Built-in defaults when absent.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set medium.sound_speed=1480`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// Seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Phase-only hologram for a focus, an octahedral trap or the iterative baseline.
    Hologram {
        #[command(subcommand)]
        kind: HologramKind,
    },
    /// Pressure slice through a saved hologram.
    Field(FieldArgs),
    /// Synthetic Jacobian and reference calibration.
    Calibrate(CalibrateArgs),
    /// Render camera frames of a moving particle and extract its feature.
    Vision(VisionArgs),
    /// Closed-loop trapping runs.
    Simulate(SimulateArgs),
    /// Time the hologram generators.
    Bench(BenchArgs),
}

#[derive(Debug, Subcommand)]
pub enum HologramKind {
    /// Single focal point.
    Focus {
        /// Focal point x,y,z in mm.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        at: Vec3,
    },
    /// Octahedral trap by spatial multiplexing.
    Octa {
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        center: Vec3,
        /// mm; `hologram.octahedron_diameter` when absent.
        #[arg(long)]
        diameter: Option<f64>,
    },
    /// Iterative backpropagation over arbitrary targets.
    Ib {
        /// Target points `x,y,z;x,y,z;...` in mm. The octahedron around
        /// `--center` when absent.
        #[arg(long, value_parser = parse_targets, allow_hyphen_values = true)]
        targets: Option<Vec<Vec3>>,
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true, conflicts_with = "targets")]
        center: Option<Vec3>,
        #[arg(long)]
        iters: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlaneArg {
    Xoy,
    Xoz,
    Yoz,
}

#[derive(Debug, Args)]
pub struct FieldArgs {
    /// Hologram CSV written by `hologram`.
    #[arg(long)]
    pub hologram: PathBuf,
    #[arg(long, value_enum)]
    pub plane: PlaneArg,
    /// Fixed coordinate of an `xoz` plane, mm.
    #[arg(long)]
    pub y: Option<f64>,
    /// Fixed coordinate of a `yoz` plane, mm.
    #[arg(long)]
    pub x: Option<f64>,
    /// Fixed coordinate of an `xoy` plane, mm.
    #[arg(long)]
    pub z: Option<f64>,
    /// In-plane center `a,b`, mm. The workspace center when absent.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub center: Option<(f64, f64)>,
    /// Half extents `a,b` of the slice, mm.
    #[arg(long, value_parser = parse_pair, default_value = "3,3")]
    pub half: (f64, f64),
    /// Grid step, mm. λ/8 when absent.
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Also report octahedral trap quality around this center.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    pub octa_center: Option<Vec3>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Jacobian moves; `calibration.moves` when absent.
    #[arg(long)]
    pub moves: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CameraArg {
    H,
    V,
    Both,
}

#[derive(Debug, Args)]
pub struct VisionArgs {
    /// Particle position in the first frame, mm.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    pub at: Option<Vec3>,
    /// Particle velocity, mm/s.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true, default_value = "0,0,0")]
    pub velocity: Vec3,
    #[arg(long, default_value_t = 400.0)]
    pub diameter_um: f64,
    #[arg(long, default_value_t = 3)]
    pub frames: usize,
    #[arg(long, value_enum, default_value = "both")]
    pub camera: CameraArg,
    /// Skip writing PGM frames.
    #[arg(long)]
    pub no_images: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ContrastArg {
    Positive,
    Negative,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("mode").required(true).args(["scenario", "batch"])))]
pub struct SimulateArgs {
    /// JSON scenario file.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Number of generated scenarios.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, value_enum, default_value = "positive")]
    pub contrast: ContrastArg,
    /// Keep per-frame logs in the JSON lines.
    #[arg(long)]
    pub frames: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 21)]
    pub reps: usize,
    #[arg(long, default_value_t = 3)]
    pub ib_reps: usize,
    /// Overrides `hologram.ib_iterations`.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    pub center: Option<Vec3>,
}

fn parse_vec3(s: &str) -> Result<Vec3, String> {
    Vec3::parse_csv(s).map_err(|e| e.to_string())
}

fn parse_targets(s: &str) -> Result<Vec<Vec3>, String> {
    s.split(';').filter(|t| !t.trim().is_empty()).map(parse_vec3).collect()
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected a,b, got `{s}`"))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("not a number: `{t}`"));
    Ok((num(a)?, num(b)?))
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Parse(_) => exit::CONFIG,
        Error::Geometry(_) | Error::Index { .. } | Error::Singularity { .. } => exit::GEOMETRY,
        Error::Detection(_) => exit::DETECTION,
        _ => exit::OTHER,
    }
}

fn load(cli: &Cli) -> acoustrap::Result<SimConfig> {
    match &cli.config {
        Some(p) => acoustrap::load_config_with_overrides(p, &cli.overrides).map_err(|e| match e {
            Error::Io(io) => Error::config("--config", format!("{}: {io}", p.display())),
            other => other,
        }),
        None => SimConfig::from_toml_with_overrides("", &cli.overrides),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = load(&cli).and_then(|cfg| commands::run(&cli, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
