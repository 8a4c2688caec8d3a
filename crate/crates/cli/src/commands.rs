//! Subcommand implementations. Each loads its inputs, drives the core
//! library and writes artifacts under the output directory. No artifact
//! carries a timestamp, so repeating a command with the same configuration
//! and seed reproduces every file byte for byte.

use crate::config::{render_config, ExperimentConfig, PoseKind};
use boostdepth_core::curriculum::schedule_for_epoch;
use boostdepth_core::error::{Error, Result};
use boostdepth_core::geometry::{backproject, synthesize, RigidTransform};
use boostdepth_core::grid::Grid;
use boostdepth_core::io::scene::depth_name;
use boostdepth_core::io::{
    read_depth, read_scene, write_depth, write_drift_table, write_metrics, write_scene,
    write_training_log,
};
use boostdepth_core::loss::{automask, min_aggregate, photometric_error, ErrorMap};
use boostdepth_core::metrics::{
    edge_metrics, extract_edges, image_metrics, pointcloud_metrics, MetricReport,
};
use boostdepth_core::optim::{
    build_candidates, plan_sources, run, run_with_state, DepthState, RunConfig,
};
use boostdepth_core::pose::{poses_for_sources, simulate_drift, PoseEstimator, PoseMode, PosePolicy};
use boostdepth_core::world::Scene;
use boostdepth_core::DepthMap;
use nalgebra::Vector3;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

/// The effective configuration, written so the run reproduces from its own
/// output directory.
fn write_echo(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    fs::write(out.join("config.txt"), render_config(cfg))?;
    Ok(())
}

fn make_estimator(cfg: &ExperimentConfig) -> PoseEstimator {
    match cfg.pose.kind {
        PoseKind::Oracle => PoseEstimator::oracle(),
        PoseKind::Noisy => PoseEstimator::noisy(cfg.pose.drift, cfg.seed),
        // Start from drifted odometry and let the photometric gradient
        // refine the stored estimates.
        PoseKind::Optimized => PoseEstimator::optimized(Some(cfg.pose.drift), cfg.seed),
    }
}

pub fn cmd_synth(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let scene = Scene::render(cfg.scene.clone())?;
    prepare_out(out)?;
    write_scene(&scene, out)?;
    write_echo(cfg, out)
}

/// Frames the schedule asks for but the window cannot supply are dropped by
/// the planner; say so once per target because a silently shrunken source
/// set is a common source of confusing loss curves.
fn warn_on_clipped_sources(scene: &Scene, run_cfg: &RunConfig, targets: &[usize]) -> Result<()> {
    for &t in targets {
        let window = scene.window(t)?.offset_window();
        let clipped = match &run_cfg.fixed_sources {
            Some(fixed) => fixed.iter().any(|&s| !window.contains(s)),
            None => (run_cfg.start_epoch..run_cfg.total_epochs()).any(|epoch| {
                let sched = schedule_for_epoch(
                    epoch,
                    run_cfg.stage_of(epoch),
                    run_cfg.tri_min,
                    &run_cfg.curriculum,
                );
                sched.omega.iter().any(|&s| !window.contains(s))
            }),
        };
        if clipped {
            eprintln!("warning: source set for target {t} clipped to offsets {}..{}",
                window.min_offset, window.max_offset);
        }
    }
    Ok(())
}

pub fn cmd_optimize(
    cfg: &ExperimentConfig,
    scene_dir: &Path,
    out: &Path,
    dump_errors: bool,
) -> Result<()> {
    let scene = read_scene(scene_dir)?;
    // Per-epoch depths are part of this command's contract.
    let mut run_cfg = cfg.run.clone();
    run_cfg.snapshots = true;
    let targets = run_cfg.targets.clone().unwrap_or_else(|| vec![scene.spec.center()]);
    warn_on_clipped_sources(&scene, &run_cfg, &targets)?;

    let mut est = make_estimator(cfg);
    let output = match &cfg.resume_from {
        Some(path) => {
            let checkpoint = read_depth(path)?;
            let scales = run_cfg.warmup_scales.max(run_cfg.boost_scales);
            let mut state = DepthState::from_depth(&checkpoint, scales)?;
            run_with_state(&mut state, &scene, &mut est, &run_cfg)?
        }
        None => run(&scene, &mut est, &run_cfg)?,
    };

    prepare_out(out)?;
    for &t in &targets {
        write_depth(&output.depth, &out.join(depth_name(t)))?;
    }
    for (epoch, depth) in &output.snapshots {
        write_depth(depth, &out.join(format!("snapshot_{epoch:04}.pfm")))?;
    }
    write_training_log(&output.log, &out.join("training_log.csv"))?;
    let mut effective = cfg.clone();
    effective.run = run_cfg;
    write_echo(&effective, out)?;
    if dump_errors {
        dump_error_maps(&scene, &effective, &output.depth, targets[0], out)?;
    }
    Ok(())
}

/// Final-state diagnostic: the aggregated per-pixel error of the last
/// epoch's source set against the optimized depth, plus the stationarity
/// mask, both as PFM grids.
fn dump_error_maps(
    scene: &Scene,
    cfg: &ExperimentConfig,
    depth: &DepthMap,
    target: usize,
    out: &Path,
) -> Result<()> {
    let run_cfg = &cfg.run;
    let window = scene.window(target)?;
    let model = scene.baseline_model()?;
    let last = run_cfg.total_epochs() - 1;
    let sched =
        schedule_for_epoch(last, run_cfg.stage_of(last), run_cfg.tri_min, &run_cfg.curriculum);
    let sources =
        plan_sources(&model, &sched, window.offset_window(), run_cfg.fixed_sources.as_deref())?;
    let trajectory: Vec<RigidTransform> =
        window.frames.values().map(|f| f.world_from_camera).collect();
    let mut est = make_estimator(cfg);
    let policy = PosePolicy { mode: PoseMode::Direct, error_alpha: run_cfg.error_alpha };
    let poses = poses_for_sources(
        &mut est,
        &policy,
        &sources,
        target,
        &trajectory,
        &window.stereo_relative(),
    )?;
    let alpha = run_cfg.error_reconstructions.then_some(run_cfg.error_alpha);
    let candidates = build_candidates(&poses, alpha)?;

    let target_frame = window.target();
    let mut recon_errors = Vec::with_capacity(candidates.len());
    for c in &candidates {
        let src = window.source_frame(c.source)?;
        let recon = synthesize(&src.image, depth, &window.intrinsics, &c.pose)?;
        recon_errors.push(photometric_error(
            &target_frame.image,
            &recon.image,
            &recon.mask,
            &run_cfg.loss,
        )?);
    }
    let (best, _) = min_aggregate(&recon_errors)?;

    let n = window.intrinsics.width * window.intrinsics.height;
    let keep = if run_cfg.loss.automask {
        let all_true = vec![true; n];
        let standard: Vec<ErrorMap> = candidates
            .iter()
            .zip(&recon_errors)
            .filter(|(c, _)| !c.error_induced)
            .map(|(_, e)| e.clone())
            .collect();
        let source_errors: Vec<ErrorMap> = candidates
            .iter()
            .filter(|c| !c.error_induced)
            .map(|c| {
                let src = window.source_frame(c.source)?;
                photometric_error(&target_frame.image, &src.image, &all_true, &run_cfg.loss)
            })
            .collect::<Result<_>>()?;
        automask(&standard, &source_errors)?
    } else {
        vec![true; n]
    };
    let mut keep_grid = Grid::new(window.intrinsics.width, window.intrinsics.height, 0.0);
    for (slot, &k) in keep_grid.data.iter_mut().zip(&keep) {
        *slot = if k { 1.0 } else { 0.0 };
    }

    boostdepth_core::io::write_pfm(&best.values, &out.join("error.pfm"))?;
    boostdepth_core::io::write_pfm(&keep_grid, &out.join("keep.pfm"))
}

/// Predicted maps are matched to ground truth by file name: every
/// `depth_NNNN.pfm` in the prediction directory pairs with the scene frame
/// of the same index.
fn list_predictions(pred_dir: &Path) -> Result<Vec<(String, usize)>> {
    let mut entries = Vec::new();
    for entry in fs::read_dir(pred_dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_prefix("depth_").and_then(|s| s.strip_suffix(".pfm")) {
            if let Ok(index) = stem.parse::<usize>() {
                entries.push((name, index));
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::data(format!(
            "no depth_NNNN.pfm predictions under {}",
            pred_dir.display()
        )));
    }
    entries.sort();
    Ok(entries)
}

pub fn cmd_eval(
    cfg: &ExperimentConfig,
    pred_dir: &Path,
    gt_dir: &Path,
    out: &Path,
) -> Result<()> {
    let gt_scene = read_scene(gt_dir)?;
    let m = &cfg.metrics;
    let identity = RigidTransform::identity();
    let k = &gt_scene.spec.intrinsics;

    let mut reports = BTreeMap::new();
    for (name, index) in list_predictions(pred_dir)? {
        let pred = read_depth(&pred_dir.join(&name))?;
        let gt = &gt_scene
            .frames
            .get(index)
            .ok_or_else(|| Error::data(format!("{name} has no ground-truth frame {index}")))?
            .depth;
        let image = image_metrics(&pred, gt, m.median_scale)?;
        let pred_edges = extract_edges(&pred, m.edge_low, m.edge_high)?;
        let gt_edges = extract_edges(gt, m.edge_low, m.edge_high)?;
        let edge = edge_metrics(&pred_edges, &gt_edges, m.acc_orientation)?;
        let cloud = pointcloud_metrics(
            &backproject(&pred, k, &identity)?,
            &backproject(gt, k, &identity)?,
            m.cloud_delta,
        )?;
        reports.insert(name, MetricReport::assemble(image, edge, cloud));
    }
    let all: Vec<MetricReport> = reports.values().cloned().collect();
    let aggregate = MetricReport::aggregate(&all)?;

    prepare_out(out)?;
    write_metrics(&reports, &aggregate, &out.join("metrics.json"), &out.join("metrics.csv"))?;
    write_echo(cfg, out)
}

pub fn cmd_posesim(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    prepare_out(out)?;
    let p = &cfg.posesim;
    for &b in &p.baselines {
        let trajectory: Vec<RigidTransform> = (0..p.frames)
            .map(|i| RigidTransform::from_translation(Vector3::new(b * i as f64, 0.0, 0.0)))
            .collect();
        let seeds: Vec<u64> = (0..p.seeds).map(|i| cfg.seed.wrapping_add(i as u64)).collect();
        let table = simulate_drift(&cfg.pose.drift, &trajectory, p.max_separation, &seeds)?;
        write_drift_table(&table, &out.join(format!("drift_{b}.csv")))?;
    }
    write_echo(cfg, out)
}
