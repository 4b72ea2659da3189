use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};

use acoustrap::bench::run_bench;
use acoustrap::calibration::{
    acquire_reference, calibrate_jacobian, localize, synthetic_motion_pairs, CameraId, JacobianMatrix,
    ReferenceSet,
};
use acoustrap::control::{
    generate_batch, run_batch, run_trap_loop, summarize, write_runs_csv, write_summary_csv, FailureReason,
    Outcome, SimScenario, TrapReport, World,
};
use acoustrap::field::{field_slice, trap_quality, FieldEngine, Plane, SliceBounds};
use acoustrap::hologram::{
    design_octahedral, format_sig, ib_baseline_hologram, make_focus_hologram, PhaseHologram, TrapSpec,
};
use acoustrap::vision::{extract_feature, render_background, render_frame, CameraModel};
use acoustrap::{Contrast, Error, ParticleState, Result, SimConfig, Vec3};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::manifest::OutDir;
use crate::{CameraArg, Cli, Command, ContrastArg, HologramKind, PlaneArg};

pub fn run(cli: &Cli, cfg: &SimConfig) -> Result<()> {
    let mut out = OutDir::new(&cli.out_dir);
    let status = match &cli.command {
        Command::Hologram { kind } => hologram(kind, cfg, &mut out),
        Command::Field(a) => field(a, cfg, &mut out),
        Command::Calibrate(a) => calibrate(a, cli.seed, cfg, &mut out),
        Command::Vision(a) => vision(a, cli.seed, cfg, &mut out),
        Command::Simulate(a) => simulate(a, cli.seed, cfg, &mut out),
        Command::Bench(a) => bench(a, cfg, &mut out),
    }?;
    out.finish(cli.seed, cfg, std::env::args().collect())?;
    status.map_or(Ok(()), Err)
}

/// `Ok(Some(e))` means the outputs are complete but the run should still
/// exit with `e`'s status.
type Status = Result<Option<Error>>;

fn inside_tank(cfg: &SimConfig, p: Vec3, what: &str) -> Result<()> {
    if cfg.tank.contains(p) && p.z > 0.0 {
        Ok(())
    } else {
        Err(Error::geometry(format!("{what} {p} is outside the tank")))
    }
}

fn write_hologram(out: &mut OutDir, h: &PhaseHologram) -> Result<()> {
    let mut buf = Vec::new();
    h.write_csv(&mut buf)?;
    out.write("hologram.csv", buf)?;
    Ok(())
}

fn write_json(out: &mut OutDir, name: &str, value: &impl serde::Serialize) -> Result<()> {
    out.write(name, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn hologram(kind: &HologramKind, cfg: &SimConfig, out: &mut OutDir) -> Status {
    let lambda = cfg.wavelength();
    match kind {
        HologramKind::Focus { at } => {
            inside_tank(cfg, *at, "focal point")?;
            let h = make_focus_hologram(&cfg.array, *at, &cfg.medium)?;
            write_hologram(out, &h)?;
            let trap = TrapSpec::Focus { point: *at };
            write_json(out, "hologram.json", &json!({ "trap": trap, "wavelength_mm": lambda, "rows": h.rows(), "cols": h.cols() }))?;
            println!("focus hologram for {at}: {}x{} phases", h.rows(), h.cols());
        }
        HologramKind::Octa { center, diameter } => {
            inside_tank(cfg, *center, "trap center")?;
            let d = diameter.unwrap_or(cfg.hologram.octahedron_diameter);
            let design = design_octahedral(&cfg.array, *center, d, &cfg.medium, cfg.hologram.sm_phasing, &cfg.hologram.rotation())?;
            for v in &design.vertexes {
                inside_tank(cfg, *v, "octahedron vertex")?;
            }
            write_hologram(out, &design.hologram)?;
            let mut csv = String::from("vertex,x,y,z,group_elements,arrival_phase\n");
            let counts = design.assignment.counts();
            for (i, v) in design.vertexes.iter().enumerate() {
                let _ = writeln!(csv, "{i},{},{},{},{},{}", v.x, v.y, v.z, counts[i], format_sig(design.group_offsets[i], 9));
            }
            out.write("vertexes.csv", csv)?;
            let mut groups = String::new();
            for r in 0..design.hologram.rows() {
                let row: Vec<String> = (0..design.hologram.cols()).map(|c| design.assignment.get(r, c).to_string()).collect();
                let _ = writeln!(groups, "{}", row.join(","));
            }
            out.write("assignment.csv", groups)?;
            let trap = TrapSpec::Octahedral { center: *center, diameter: d };
            write_json(
                out,
                "hologram.json",
                &json!({ "trap": trap, "wavelength_mm": lambda, "sm_phasing": cfg.hologram.sm_phasing, "rotation_deg": cfg.hologram.octahedron_rotation_deg }),
            )?;
            println!("octahedral hologram at {center}, diameter {d} mm");
        }
        HologramKind::Ib { targets, center, iters } => {
            let targets = match (targets, center) {
                (Some(t), _) => t.clone(),
                (None, Some(c)) => acoustrap::hologram::octahedron_vertexes_oriented(*c, cfg.hologram.octahedron_diameter, &cfg.hologram.rotation())?.to_vec(),
                (None, None) => return Err(Error::config("ib", "give --targets or --center")),
            };
            if targets.is_empty() {
                return Err(Error::geometry("no IB targets"));
            }
            for t in &targets {
                inside_tank(cfg, *t, "target")?;
            }
            let n = iters.unwrap_or(cfg.hologram.ib_iterations);
            let r = ib_baseline_hologram(&cfg.array, &targets, &cfg.medium, n)?;
            write_hologram(out, &r.hologram)?;
            let mut csv = String::from("iteration,cost\n");
            for (i, c) in r.cost.iter().enumerate() {
                let _ = writeln!(csv, "{},{}", i + 1, format_sig(*c, 9));
            }
            out.write("cost.csv", csv)?;
            write_json(out, "hologram.json", &json!({ "kind": "ib", "targets": targets, "iterations": n, "wavelength_mm": lambda }))?;
            println!("IB hologram over {} targets, {n} iterations, final cost {:.4}", targets.len(), r.cost.last().copied().unwrap_or(f64::NAN));
        }
    }
    Ok(None)
}

fn field(a: &crate::FieldArgs, cfg: &SimConfig, out: &mut OutDir) -> Status {
    let h = PhaseHologram::read_csv(BufReader::new(File::open(&a.hologram)?))?;
    let engine = FieldEngine::new(&cfg.array, &h, &cfg.medium)?.with_directivity(cfg.field.directivity);
    let c = cfg.workspace.center;
    let (plane, default_center) = match a.plane {
        PlaneArg::Xoy => (Plane::Xoy { z: a.z.unwrap_or(c.z) }, (c.x, c.y)),
        PlaneArg::Xoz => (Plane::Xoz { y: a.y.unwrap_or(c.y) }, (c.x, c.z)),
        PlaneArg::Yoz => (Plane::Yoz { x: a.x.unwrap_or(c.x) }, (c.y, c.z)),
    };
    let (ca, cb) = a.center.unwrap_or(default_center);
    let res = a.resolution.unwrap_or(engine.wavelength() / 8.0);
    let slice = field_slice(&engine, &cfg.tank, plane, SliceBounds::centered(ca, cb, a.half.0, a.half.1), res)?;

    let mut csv = Vec::new();
    slice.write_csv(&mut csv)?;
    out.write("field.csv", csv)?;
    let mut pgm = Vec::new();
    slice.write_pgm16(&mut pgm)?;
    out.write("field.pgm", pgm)?;

    let (ia, ib) = slice.argmax();
    let peak = slice.point(ia, ib);
    let (ext_a, ext_b) = slice.extent_through_peak(0.5);
    let quality = match a.octa_center {
        Some(center) => {
            let trap = TrapSpec::Octahedral { center, diameter: cfg.hologram.octahedron_diameter };
            Some(trap_quality(&engine, &trap, &cfg.hologram.rotation())?)
        }
        None => None,
    };
    write_json(
        out,
        "field.json",
        &json!({
            "plane": slice.plane,
            "origin": slice.origin,
            "spacing_mm": slice.spacing,
            "width": slice.width,
            "height": slice.height,
            "peak": peak,
            "peak_magnitude_pa": slice.max_magnitude(),
            "half_amplitude_extent_mm": [ext_a, ext_b],
            "octahedral_quality": quality,
        }),
    )?;
    println!("{}x{} slice, peak {:.3} Pa at {peak}", slice.width, slice.height, slice.max_magnitude());
    if let Some(q) = quality {
        println!("contrast ratio {:.4}", q.contrast_ratio.unwrap_or(f64::NAN));
    }
    Ok(None)
}

fn calibrate(a: &crate::CalibrateArgs, seed: u64, cfg: &SimConfig, out: &mut OutDir) -> Status {
    let cal = &cfg.calibration;
    let s = cfg.vision.image_scale;
    let truth = JacobianMatrix::fixture().scaled(s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let moves = a.moves.unwrap_or(cal.moves);
    let pairs = synthetic_motion_pairs(&truth, moves, cal.move_step_mm, cal.motion_noise_px, &mut rng);
    let j = calibrate_jacobian(&pairs)?;

    let cam_h = CameraModel::fixture(CameraId::H, &cfg.vision);
    let cam_v = CameraModel::fixture(CameraId::V, &cfg.vision);
    let entries = cal
        .lattice_points()
        .into_iter()
        .map(|p| acquire_reference(&cfg.array, &cfg.medium, p, &cal.scan, &cam_h, &cam_v, cal.reference_noise_px, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let refs = ReferenceSet::new(entries)?;

    out.write("jacobian.json", j.to_json() + "\n")?;
    out.write("references.json", refs.to_json() + "\n")?;

    let scale = truth.matrix().abs().max();
    let max_err = (j.matrix() - truth.matrix()).abs().max();
    let mut sq = 0.0;
    for e in refs.entries() {
        sq += localize(&j, &refs, e.pixel_h, e.pixel_v)?.distance(e.world).powi(2);
    }
    let ref_rms = (sq / refs.len() as f64).sqrt();
    write_json(
        out,
        "calibration.json",
        &json!({
            "moves": moves,
            "image_scale": s,
            "max_entry_error": max_err,
            "max_entry_error_relative": max_err / scale,
            "condition_number": j.condition_number(),
            "residual_rms_px": j.residual_rms(),
            "references": refs.len(),
            "reference_centroid_mm": refs.centroid_world(),
            "reference_localization_rms_mm": ref_rms,
        }),
    )?;
    println!(
        "Jacobian from {moves} moves: max entry error {:.2}% of max |J|, condition {:.3}; {} references, localization RMS {:.1} um",
        100.0 * max_err / scale,
        j.condition_number(),
        refs.len(),
        ref_rms * 1e3
    );
    Ok(None)
}

fn vision(a: &crate::VisionArgs, seed: u64, cfg: &SimConfig, out: &mut OutDir) -> Status {
    if a.frames == 0 {
        return Err(Error::config("--frames", "must be >= 1"));
    }
    let mut cams = Vec::new();
    if matches!(a.camera, CameraArg::H | CameraArg::Both) {
        cams.push(CameraModel::fixture(CameraId::H, &cfg.vision));
    }
    if matches!(a.camera, CameraArg::V | CameraArg::Both) {
        cams.push(CameraModel::fixture(CameraId::V, &cfg.vision));
    }
    let start = a.at.unwrap_or(cfg.calibration.lattice_center);
    let particle = ParticleState { position: start, velocity: a.velocity, diameter_um: a.diameter_um, contrast: Contrast::Positive };
    particle.validate()?;
    let s = cfg.vision.image_scale;
    let fixture = acoustrap::calibration::CalibrationFixture::load();
    let j = fixture.jacobian().scaled(s);
    let refs = fixture.references().scaled(s);
    let params = cfg.vision.extract_params();
    let dt = cfg.timing.frame_interval();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut lines = String::new();
    let mut detected = 0;
    for i in 0..a.frames {
        let t = i as f64 * dt;
        let p = ParticleState { position: start + a.velocity * t, ..particle };
        let mut record = json!({ "frame": i, "t": t, "truth": p.position });
        let mut centers = Vec::new();
        for cam in &cams {
            let name = match cam.id {
                CameraId::H => "h",
                CameraId::V => "v",
            };
            let (fs, bs, es) = (rng.next_u64(), rng.next_u64(), rng.next_u64());
            let r = render_frame(cam, &p, t, fs);
            let bg = render_background(cam, t, bs);
            let obs = extract_feature(&r.frame, &bg, cam.expected_diameter_px(a.diameter_um), &params, es)?;
            if !a.no_images {
                let file = format!("frame_{name}_{i:03}.pgm");
                let mut buf = Vec::new();
                r.frame.write_pgm(&mut buf)?;
                out.write(&file, buf)?;
            }
            centers.push(obs.center());
            record[name] = json!({ "truth_pixel": r.center, "clipped": r.clipped, "observation": obs });
        }
        if let [Some(h), Some(v)] = centers[..] {
            record["localized"] = json!(localize(&j, &refs, h, v)?);
        }
        if centers.iter().all(Option::is_some) {
            detected += 1;
        }
        lines.push_str(&serde_json::to_string(&record)?);
        lines.push('\n');
    }
    out.write("observations.jsonl", lines)?;
    println!("{detected}/{} frames with a valid feature in every camera", a.frames);
    Ok((detected == 0).then(|| Error::Detection("no frame produced a valid feature".into())))
}

fn simulate(a: &crate::SimulateArgs, seed: u64, cfg: &SimConfig, out: &mut OutDir) -> Status {
    let world = World::from_config(cfg)?;
    let (reports, single) = match (&a.scenario, a.batch) {
        (Some(path), _) => {
            let s: SimScenario = serde_json::from_reader(BufReader::new(File::open(path)?))?;
            (vec![run_trap_loop(&s, &world)?], true)
        }
        (None, Some(n)) => {
            let contrast = match a.contrast {
                ContrastArg::Positive => Contrast::Positive,
                ContrastArg::Negative => Contrast::Negative,
            };
            let scen = generate_batch(&world, n, seed, contrast, &cfg.timing);
            write_json(out, "scenarios.json", &scen)?;
            (run_batch(&scen, &world)?, false)
        }
        (None, None) => return Err(Error::config("simulate", "give --scenario or --batch")),
    };

    {
        let name = "reports.jsonl";
        let mut w = BufWriter::new(File::create(out.path(name)?)?);
        for r in &reports {
            let line = if a.frames { r.to_json_line() } else { TrapReport { frames: Vec::new(), ..r.clone() }.to_json_line() };
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        out.record(name);
    }
    let summaries = summarize(&reports);
    let mut buf = Vec::new();
    write_summary_csv(&summaries, &mut buf)?;
    out.write("summary.csv", buf)?;
    let mut buf = Vec::new();
    write_runs_csv(&reports, &mut buf)?;
    out.write("runs.csv", buf)?;

    for s in &summaries {
        println!(
            "{}: {}/{} trapped ({:.0}%), mean deviation {:.3} mm, median {:.3} mm, mean time to trap {:.2} s",
            s.material,
            s.trapped,
            s.runs,
            s.success_rate * 100.0,
            s.mean_deviation,
            s.median_deviation,
            s.mean_time_to_trap
        );
    }
    let starved = single && reports[0].outcome == Outcome::Failed(FailureReason::DetectionStarvation);
    Ok(starved.then(|| Error::Detection("the particle was never tracked".into())))
}

fn bench(a: &crate::BenchArgs, cfg: &SimConfig, out: &mut OutDir) -> Status {
    let mut hcfg = cfg.hologram.clone();
    if let Some(n) = a.iters {
        if n == 0 {
            return Err(Error::config("--iters", "must be >= 1"));
        }
        hcfg.ib_iterations = n;
    }
    let center = a.center.unwrap_or(cfg.calibration.lattice_center);
    inside_tank(cfg, center, "bench center")?;
    let r = run_bench(&cfg.array, &cfg.medium, &hcfg, &cfg.timing, center, a.reps, a.ib_reps)?;
    write_json(out, "bench.json", &r)?;
    println!("elements            {}", r.elements);
    println!("focus               {:.3} ms", r.focus_ms);
    println!("SM octahedral       {:.3} ms", r.sm_octahedral_ms);
    println!("IB ({:>3} iterations) {:.3} ms", r.ib_iterations, r.ib_ms);
    println!("IB / SM             {:.1}x", r.ib_over_sm);
    println!("SM fits dispatch    {}", r.sm_fits_dispatch);
    println!("SM fits refresh     {}", r.sm_fits_refresh);
    Ok(None)
}
