//! The three subcommands: scenario generation, a single closed-loop run,
//! and the benchmark matrix.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use thicket_core::depth::camera_pose;
use thicket_core::sim::{run_cell, run_trial, render_depth, CellResult, Scene, TrialConfig};
use thicket_core::CameraIntrinsics;

use crate::config::RunConfig;
use crate::report;
use crate::scene_io;
use crate::{depth_dump, RuntimeError};

pub fn generate(
    bounds_spec: &str,
    density: f64,
    seed: u64,
    radii: Option<&str>,
    out: &Path,
) -> Result<()> {
    let bounds = parse_bounds(bounds_spec)?;
    let radius_range = match radii {
        Some(spec) => parse_radii(spec)?,
        None => (0.15, 0.40),
    };
    let scene = thicket_core::sim::generate_forest_with_radii(bounds, density, radius_range, seed)?;
    let text = scene_io::write_scene(&scene);
    write_file(out, &text)?;
    println!("wrote {} with {} obstacles", out.display(), scene.obstacles.len());
    Ok(())
}

/// `WxD` or `WxDxH`: a region centred on y, grounded at z = 0, starting
/// at x = 0 (e.g. `50x30x3`).
fn parse_bounds(spec: &str) -> Result<thicket_core::sim::Aabb> {
    let parts: Vec<f64> = spec
        .split('x')
        .map(|p| p.parse::<f64>().with_context(|| format!("bad bounds component {p:?}")))
        .collect::<Result<_>>()?;
    let (w, d, h) = match parts.as_slice() {
        [w, d] => (*w, *d, 3.0),
        [w, d, h] => (*w, *d, *h),
        _ => bail!("bounds must be WxD or WxDxH, got {spec:?}"),
    };
    thicket_core::sim::Aabb::new(
        nalgebra::Vector3::new(0.0, -d / 2.0, 0.0),
        nalgebra::Vector3::new(w, d / 2.0, h),
    )
    .map_err(Into::into)
}

/// `lo:hi` trunk radius range in metres.
fn parse_radii(spec: &str) -> Result<(f64, f64)> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.parse::<f64>().with_context(|| format!("bad radius component {p:?}")))
        .collect::<Result<_>>()?;
    match parts.as_slice() {
        [lo, hi] => Ok((*lo, *hi)),
        _ => bail!("radii must be lo:hi, got {spec:?}"),
    }
}

pub struct RunArgs<'a> {
    pub scene: &'a Path,
    pub speed: Option<f64>,
    pub seed: u64,
    pub out: &'a Path,
    pub dump_depth: bool,
}

pub fn run(config: &RunConfig, args: &RunArgs) -> Result<()> {
    let mpc = config.mpc.build()?;
    let perception = config.perception.build()?;
    let model = config.model.build()?;
    let mut trial = config.trial.build()?;
    if let Some(v) = args.speed {
        if !(v > 0.0) {
            bail!("--speed must be positive");
        }
        trial.v_des = v;
    }

    let scene = scene_io::read_scene(args.scene).map_err(RuntimeError::wrap)?;
    let result = run_trial(&scene, &trial, &mpc, &perception, &model, args.seed)
        .map_err(|e| RuntimeError::wrap(e.into()))?;

    fs::create_dir_all(args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(RuntimeError::wrap)?;
    write_file(&args.out.join("trajectory.csv"), &report::trajectory_csv(&result))
        .map_err(RuntimeError::wrap)?;
    write_file(&args.out.join("diagnostics.jsonl"), &report::diagnostics_jsonl(&result))
        .map_err(RuntimeError::wrap)?;
    if args.dump_depth {
        dump_depth_frames(&scene, &trial, &perception, &result, args.seed, args.out)
            .map_err(RuntimeError::wrap)?;
    }
    println!("{}", report::summary_line(&result));
    Ok(())
}

/// Re-render the frames along the recorded trajectory into the debug dump
/// format. Rendering is deterministic, so for noise-free runs this
/// reproduces exactly what the planner saw; with position noise enabled
/// the dumps use the true poses rather than the noised estimates.
fn dump_depth_frames(
    scene: &Scene,
    trial: &TrialConfig,
    perception: &thicket_core::perception::PerceptionConfig,
    result: &thicket_core::sim::TrialResult,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let dir = out.join("depth");
    fs::create_dir_all(&dir)?;
    let intrinsics = CameraIntrinsics::with_hfov(
        perception.target_width,
        perception.target_height,
        trial.camera_hfov_deg.to_radians(),
    );
    for (tick, rec) in result.ticks.iter().enumerate() {
        let pose = camera_pose(&rec.state.position, rec.state.yaw);
        let frame = render_depth(
            scene,
            &pose,
            intrinsics,
            perception.max_range,
            trial.depth_noise_sigma,
            seed ^ (tick as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            rec.t,
        );
        write_file(&dir.join(format!("frame_{tick:05}.txt")), &depth_dump::write_dump(&frame))?;
    }
    Ok(())
}

pub fn bench(config: &RunConfig, out: &Path) -> Result<()> {
    let mpc = config.mpc.build()?;
    let perception = config.perception.build()?;
    let model = config.model.build()?;
    let trial = config.trial.build()?;
    let bench = &config.benchmark;
    bench.validate()?;
    let ablations = bench.ablation_specs()?;

    let scenes: Vec<Scene> = if let Some(file) = &config.scene.file {
        vec![scene_io::read_scene(Path::new(file)).map_err(RuntimeError::wrap)?]
    } else {
        (0..bench.n_scenes)
            .map(|i| config.scene.generate(config.scene.seed + i as u64))
            .collect::<Result<_>>()
            .map_err(RuntimeError::wrap)?
    };

    // Cells are independent; trials inside a cell share nothing either,
    // so fan the whole matrix out over the thread pool.
    let cell_specs: Vec<(f64, usize)> = bench
        .speeds
        .iter()
        .flat_map(|s| (0..ablations.len()).map(move |a| (*s, a)))
        .collect();
    let mut cells: Vec<(usize, CellResult)> = cell_specs
        .par_iter()
        .enumerate()
        .map(|(idx, (speed, abl_idx))| {
            let cell = run_cell(
                &scenes,
                *speed,
                &ablations[*abl_idx],
                bench.trials_per_cell,
                &trial,
                &mpc,
                &perception,
                &model,
                bench.base_seed,
            )?;
            Ok((idx, cell))
        })
        .collect::<thicket_core::Result<Vec<_>>>()
        .map_err(|e| RuntimeError::wrap(e.into()))?;
    cells.sort_by_key(|(idx, _)| *idx);
    let cells: Vec<CellResult> = cells.into_iter().map(|(_, c)| c).collect();

    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(RuntimeError::wrap)?;
    write_file(&out.join("results.csv"), &report::results_csv(&cells)).map_err(RuntimeError::wrap)?;
    for c in &cells {
        println!(
            "speed {:>5.1} m/s  {:<14} success {:>5.1}%  mean speed {:>5.2}  solve {:>6.2} ms  iters {:>4.2}",
            c.speed,
            c.ablation,
            c.success_rate * 100.0,
            c.mean_speed,
            c.mean_solve_ms,
            c.mean_iters,
        );
    }
    println!("wrote {}", out.join("results.csv").display());
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn default_out(config: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| PathBuf::from(&config.output_dir))
}
