//! Experiment configuration: one plain-text file of `key = value` lines with
//! dotted section names covering the scene, the optimization run, the loss,
//! pose estimation, curriculum coefficients, metric options and the drift
//! simulation. Values merge over built-in defaults (optionally through a
//! preset), unknown keys are rejected, and the effective result renders back
//! to text losslessly so every run can be reproduced from its output
//! directory.

use boostdepth_core::curriculum::SourceId;
use boostdepth_core::error::{Error, Result};
use boostdepth_core::metrics::AccOrientation;
use boostdepth_core::optim::RunConfig;
use boostdepth_core::pose::DriftModel;
use boostdepth_core::world::{Layout, SceneSpec};
use nalgebra::Vector3;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

/// Which ground-truth estimator feeds the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseKind {
    Oracle,
    Noisy,
    Optimized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseOptions {
    pub kind: PoseKind,
    pub drift: DriftModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricOptions {
    pub median_scale: bool,
    pub edge_low: f64,
    pub edge_high: f64,
    pub acc_orientation: AccOrientation,
    pub cloud_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSimOptions {
    pub baselines: Vec<f64>,
    pub max_separation: usize,
    pub seeds: usize,
    pub frames: usize,
}

/// Everything a command needs, defaults merged.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scene: SceneSpec,
    pub run: RunConfig,
    pub pose: PoseOptions,
    pub metrics: MetricOptions,
    pub posesim: PoseSimOptions,
    /// Depth PFM to continue from instead of the constant initializer.
    pub resume_from: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            scene: SceneSpec::default(),
            run: RunConfig::default(),
            pose: PoseOptions { kind: PoseKind::Oracle, drift: DriftModel::default() },
            metrics: MetricOptions {
                median_scale: false,
                edge_low: 0.05,
                edge_high: 0.15,
                acc_orientation: AccOrientation::GtToPred,
                cloud_delta: 0.1,
            },
            posesim: PoseSimOptions {
                baselines: vec![0.02, 0.05, 0.08, 0.12],
                max_separation: 7,
                seeds: 200,
                frames: 15,
            },
            resume_from: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.run.validate()?;
        self.pose.drift.validate()?;
        let m = &self.metrics;
        if !(m.edge_low > 0.0 && m.edge_low <= m.edge_high) {
            return Err(Error::config(format!(
                "edge thresholds need 0 < low <= high, got {} and {}",
                m.edge_low, m.edge_high
            )));
        }
        if !(m.cloud_delta > 0.0 && m.cloud_delta.is_finite()) {
            return Err(Error::config("cloud match distance must be finite and > 0"));
        }
        let p = &self.posesim;
        if p.baselines.is_empty() || p.baselines.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::config("drift baselines must be a nonempty list of positive reals"));
        }
        if p.max_separation == 0 {
            return Err(Error::config("drift simulation needs max_separation >= 1"));
        }
        if p.frames <= p.max_separation {
            return Err(Error::config(format!(
                "{} drift frames cannot reach separation {}",
                p.frames, p.max_separation
            )));
        }
        if p.seeds == 0 {
            return Err(Error::config("drift simulation needs at least one seed"));
        }
        Ok(())
    }
}

/// Named configuration bundles; applied between defaults and the file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Plain single-separation photometric baseline: no curriculum growth,
    /// no tri-aggregation, no incremental poses, no error reconstructions;
    /// the whole budget runs warmup-style on the fixed {+1, -1, stereo} set.
    Md2,
    /// Warmup stage only.
    Warmup,
    /// The complete method.
    Full,
    /// Boost stage only, resuming a warmup checkpoint mid-schedule.
    Pre,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Preset> {
        match s {
            "md2" => Ok(Preset::Md2),
            "warmup" => Ok(Preset::Warmup),
            "full" => Ok(Preset::Full),
            "pre" => Ok(Preset::Pre),
            other => Err(Error::config(format!(
                "unknown preset {other:?}, expected md2, warmup, full or pre"
            ))),
        }
    }
}

/// Desk-scale step size. Per-pixel Adam moves each log-depth by roughly the
/// learning rate per step, so the small rates suited to network weights
/// would need orders of magnitude more iterations than the schedule has.
const PRESET_LEARNING_RATE: f64 = 0.015;

pub fn apply_preset(cfg: &mut ExperimentConfig, preset: Preset) {
    cfg.run.learning_rate = PRESET_LEARNING_RATE;
    match preset {
        Preset::Md2 => {
            cfg.run.warmup_epochs = 20;
            cfg.run.boost_epochs = 0;
            cfg.run.tri_min = false;
            cfg.run.incremental_pose = false;
            cfg.run.partial_incremental = false;
            cfg.run.error_reconstructions = false;
            cfg.run.fixed_sources = Some(vec![SourceId::Offset(1), SourceId::Offset(-1)]);
        }
        Preset::Warmup => {
            cfg.run.boost_epochs = 0;
        }
        Preset::Full => {}
        Preset::Pre => {
            cfg.run.start_epoch = cfg.run.warmup_epochs;
        }
    }
}

/// Layout parameters stay independent of the chosen kind while a file is
/// being applied, so the keys may arrive in any order; the kind picks which
/// of them materialize.
struct LayoutDraft {
    kind: String,
    plane_depth: f64,
    near: f64,
    far: f64,
    split_x: f64,
    ramp_base: f64,
    ramp_slope: f64,
    occluder_depth: f64,
    occluder: [f64; 4],
}

impl LayoutDraft {
    fn from_layout(layout: &Layout) -> Self {
        let mut draft = LayoutDraft {
            kind: String::new(),
            plane_depth: 8.0,
            near: 6.0,
            far: 10.0,
            split_x: 0.0,
            ramp_base: 8.0,
            ramp_slope: 0.4,
            occluder_depth: 5.0,
            occluder: [-1.0, -1.0, 1.0, 1.0],
        };
        match *layout {
            Layout::TexturedPlane { depth } => {
                draft.kind = "textured_plane".into();
                draft.plane_depth = depth;
            }
            Layout::TwoPlaneStep { near, far, split_x } => {
                draft.kind = "two_plane_step".into();
                draft.near = near;
                draft.far = far;
                draft.split_x = split_x;
            }
            Layout::RampPlusOccluder { base, slope, occluder_depth, occluder } => {
                draft.kind = "ramp_plus_occluder".into();
                draft.ramp_base = base;
                draft.ramp_slope = slope;
                draft.occluder_depth = occluder_depth;
                draft.occluder = occluder;
            }
        }
        draft
    }

    fn materialize(&self) -> Result<Layout> {
        match self.kind.as_str() {
            "textured_plane" => Ok(Layout::TexturedPlane { depth: self.plane_depth }),
            "two_plane_step" => {
                Ok(Layout::TwoPlaneStep { near: self.near, far: self.far, split_x: self.split_x })
            }
            "ramp_plus_occluder" => Ok(Layout::RampPlusOccluder {
                base: self.ramp_base,
                slope: self.ramp_slope,
                occluder_depth: self.occluder_depth,
                occluder: self.occluder,
            }),
            other => Err(Error::config(format!(
                "unknown scene layout {other:?}, expected textured_plane, two_plane_step or ramp_plus_occluder"
            ))),
        }
    }
}

/// Apply `key = value` lines on top of `base`. Lines are independent except
/// for the scene layout, which materializes once after the last line.
pub fn parse_config(text: &str, base: &ExperimentConfig) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    let mut layout = LayoutDraft::from_layout(&cfg.scene.layout);
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let located = |e: Error| match e {
            Error::Config(msg) => Error::config(format!("line {}: {msg}", lineno + 1)),
            other => other,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected key = value", lineno + 1)))?;
        apply_key(&mut cfg, &mut layout, key.trim(), value.trim()).map_err(located)?;
    }
    cfg.scene.layout = layout.materialize()?;
    cfg.validate()?;
    Ok(cfg)
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| Error::config(format!("{key}: {v:?} is not a real number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::config(format!("{key}: {v:?} is not a non-negative integer")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse().map_err(|_| Error::config(format!("{key}: {v:?} is not a non-negative integer")))
}

fn parse_i32(key: &str, v: &str) -> Result<i32> {
    v.parse().map_err(|_| Error::config(format!("{key}: {v:?} is not an integer")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::config(format!("{key}: {v:?} is not true or false"))),
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|t| !t.is_empty())
}

fn parse_f64_list(key: &str, v: &str) -> Result<Vec<f64>> {
    split_list(v).map(|t| parse_f64(key, t)).collect()
}

fn parse_usize_list(key: &str, v: &str) -> Result<Vec<usize>> {
    split_list(v).map(|t| parse_usize(key, t)).collect()
}

fn parse_vector3(key: &str, v: &str) -> Result<Vector3<f64>> {
    let parts = parse_f64_list(key, v)?;
    if parts.len() != 3 {
        return Err(Error::config(format!("{key}: expected three comma-separated reals")));
    }
    Ok(Vector3::new(parts[0], parts[1], parts[2]))
}

fn parse_rect(key: &str, v: &str) -> Result<[f64; 4]> {
    let parts = parse_f64_list(key, v)?;
    if parts.len() != 4 {
        return Err(Error::config(format!("{key}: expected x0,y0,x1,y1")));
    }
    Ok([parts[0], parts[1], parts[2], parts[3]])
}

/// Source tokens: signed frame offsets plus `s` for the stereo partner.
fn parse_sources(key: &str, v: &str) -> Result<Vec<SourceId>> {
    split_list(v)
        .map(|t| {
            if t == "s" {
                Ok(SourceId::Stereo)
            } else {
                parse_i32(key, t).map(SourceId::Offset)
            }
        })
        .collect()
}

fn source_token(s: &SourceId) -> String {
    match s {
        SourceId::Offset(k) => k.to_string(),
        SourceId::Stereo => "s".into(),
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn apply_key(
    cfg: &mut ExperimentConfig,
    layout: &mut LayoutDraft,
    key: &str,
    v: &str,
) -> Result<()> {
    let scene = &mut cfg.scene;
    let run = &mut cfg.run;
    match key {
        "seed" => cfg.seed = parse_u64(key, v)?,

        "scene.layout" => layout.kind = v.to_string(),
        "scene.plane_depth" => layout.plane_depth = parse_f64(key, v)?,
        "scene.near" => layout.near = parse_f64(key, v)?,
        "scene.far" => layout.far = parse_f64(key, v)?,
        "scene.split_x" => layout.split_x = parse_f64(key, v)?,
        "scene.ramp_base" => layout.ramp_base = parse_f64(key, v)?,
        "scene.ramp_slope" => layout.ramp_slope = parse_f64(key, v)?,
        "scene.occluder_depth" => layout.occluder_depth = parse_f64(key, v)?,
        "scene.occluder" => layout.occluder = parse_rect(key, v)?,
        "scene.frames" => scene.frames = parse_usize(key, v)?,
        "scene.velocity" => scene.velocity = parse_vector3(key, v)?,
        "scene.yaw_rate" => scene.yaw_rate = parse_f64(key, v)?,
        "scene.stereo_offset" => scene.stereo_offset = parse_f64(key, v)?,
        "scene.brightness_gain" => scene.brightness.gain = parse_f64(key, v)?,
        "scene.brightness_bias" => scene.brightness.bias = parse_f64(key, v)?,
        "scene.fx" => scene.intrinsics.fx = parse_f64(key, v)?,
        "scene.fy" => scene.intrinsics.fy = parse_f64(key, v)?,
        "scene.cx" => scene.intrinsics.cx = parse_f64(key, v)?,
        "scene.cy" => scene.intrinsics.cy = parse_f64(key, v)?,
        "scene.width" => scene.intrinsics.width = parse_usize(key, v)?,
        "scene.height" => scene.intrinsics.height = parse_usize(key, v)?,
        "scene.meters_per_unit" => scene.meters_per_unit = parse_f64(key, v)?,
        "scene.texture_octaves" => {
            scene.texture.octaves = parse_u64(key, v)? as u32;
        }
        "scene.texture_frequency" => scene.texture.base_frequency = parse_f64(key, v)?,
        "scene.texture_seed" => scene.texture.seed = parse_u64(key, v)?,
        "scene.texture_low" => scene.texture.low = parse_f64(key, v)?,
        "scene.texture_high" => scene.texture.high = parse_f64(key, v)?,

        "run.warmup_epochs" => run.warmup_epochs = parse_usize(key, v)?,
        "run.boost_epochs" => run.boost_epochs = parse_usize(key, v)?,
        "run.iterations_per_epoch" => run.iterations_per_epoch = parse_usize(key, v)?,
        "run.learning_rate" => run.learning_rate = parse_f64(key, v)?,
        "run.lr_decay" => run.lr_decay = parse_f64(key, v)?,
        "run.lr_milestones" => run.lr_milestones = parse_usize_list(key, v)?,
        "run.warmup_scales" => run.warmup_scales = parse_usize(key, v)?,
        "run.boost_scales" => run.boost_scales = parse_usize(key, v)?,
        "run.pose_learning_rate" => run.pose_learning_rate = parse_f64(key, v)?,
        "run.tri_min" => run.tri_min = parse_bool(key, v)?,
        "run.incremental_pose" => run.incremental_pose = parse_bool(key, v)?,
        "run.partial_incremental" => run.partial_incremental = parse_bool(key, v)?,
        "run.error_reconstructions" => run.error_reconstructions = parse_bool(key, v)?,
        "run.error_alpha" => run.error_alpha = parse_f64(key, v)?,
        "run.fixed_sources" => {
            let sources = parse_sources(key, v)?;
            run.fixed_sources = if sources.is_empty() { None } else { Some(sources) };
        }
        "run.start_epoch" => run.start_epoch = parse_usize(key, v)?,
        "run.targets" => {
            let targets = parse_usize_list(key, v)?;
            run.targets = if targets.is_empty() { None } else { Some(targets) };
        }
        "run.init_depth" => {
            run.init_depth = if v.is_empty() { None } else { Some(parse_f64(key, v)?) };
        }
        "run.snapshots" => run.snapshots = parse_bool(key, v)?,
        "run.resume_from" => {
            cfg.resume_from = if v.is_empty() { None } else { Some(PathBuf::from(v)) };
        }

        "loss.ssim_weight" => run.loss.ssim_weight = parse_f64(key, v)?,
        "loss.smoothness_lambda" => run.loss.smoothness_lambda = parse_f64(key, v)?,
        "loss.automask" => run.loss.automask = parse_bool(key, v)?,

        "pose.kind" => {
            cfg.pose.kind = match v {
                "oracle" => PoseKind::Oracle,
                "noisy" => PoseKind::Noisy,
                "optimized" => PoseKind::Optimized,
                _ => {
                    return Err(Error::config(format!(
                        "{key}: {v:?} is not oracle, noisy or optimized"
                    )))
                }
            };
        }
        "pose.drift_c" => cfg.pose.drift.c = parse_f64(key, v)?,
        "pose.drift_p" => cfg.pose.drift.p = parse_f64(key, v)?,
        "pose.rotation_noise_deg" => cfg.pose.drift.rotation_noise_deg = parse_f64(key, v)?,

        "curriculum.warmup_base" => run.curriculum.warmup.base = parse_f64(key, v)?,
        "curriculum.warmup_slope" => run.curriculum.warmup.slope = parse_f64(key, v)?,
        "curriculum.warmup_max_offset" => run.curriculum.warmup.max_offset = parse_i32(key, v)?,
        "curriculum.boost_base" => run.curriculum.boost.base = parse_f64(key, v)?,
        "curriculum.boost_slope" => run.curriculum.boost.slope = parse_f64(key, v)?,
        "curriculum.boost_max_offset" => run.curriculum.boost.max_offset = parse_i32(key, v)?,
        "curriculum.boost_tri_base" => run.curriculum.boost_tri.base = parse_f64(key, v)?,
        "curriculum.boost_tri_slope" => run.curriculum.boost_tri.slope = parse_f64(key, v)?,
        "curriculum.boost_tri_max_offset" => {
            run.curriculum.boost_tri.max_offset = parse_i32(key, v)?;
        }
        "curriculum.include_stereo" => run.curriculum.include_stereo = parse_bool(key, v)?,

        "metrics.median_scale" => cfg.metrics.median_scale = parse_bool(key, v)?,
        "metrics.edge_low" => cfg.metrics.edge_low = parse_f64(key, v)?,
        "metrics.edge_high" => cfg.metrics.edge_high = parse_f64(key, v)?,
        "metrics.acc_orientation" => {
            cfg.metrics.acc_orientation = match v {
                "gt_to_pred" => AccOrientation::GtToPred,
                "pred_to_gt" => AccOrientation::PredToGt,
                _ => {
                    return Err(Error::config(format!(
                        "{key}: {v:?} is not gt_to_pred or pred_to_gt"
                    )))
                }
            };
        }
        "metrics.cloud_delta" => cfg.metrics.cloud_delta = parse_f64(key, v)?,

        "posesim.baselines" => cfg.posesim.baselines = parse_f64_list(key, v)?,
        "posesim.max_separation" => cfg.posesim.max_separation = parse_usize(key, v)?,
        "posesim.seeds" => cfg.posesim.seeds = parse_usize(key, v)?,
        "posesim.frames" => cfg.posesim.frames = parse_usize(key, v)?,

        _ => return Err(Error::config(format!("unknown configuration key {key:?}"))),
    }
    Ok(())
}

/// Render every key in a fixed order. Real numbers use the shortest exact
/// decimal form, so parsing the output reproduces the configuration bit for
/// bit.
pub fn render_config(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("seed", cfg.seed.to_string());

    let layout = LayoutDraft::from_layout(&cfg.scene.layout);
    let scene = &cfg.scene;
    kv("scene.layout", layout.kind.clone());
    kv("scene.plane_depth", layout.plane_depth.to_string());
    kv("scene.near", layout.near.to_string());
    kv("scene.far", layout.far.to_string());
    kv("scene.split_x", layout.split_x.to_string());
    kv("scene.ramp_base", layout.ramp_base.to_string());
    kv("scene.ramp_slope", layout.ramp_slope.to_string());
    kv("scene.occluder_depth", layout.occluder_depth.to_string());
    kv("scene.occluder", join(&layout.occluder));
    kv("scene.frames", scene.frames.to_string());
    kv(
        "scene.velocity",
        format!("{},{},{}", scene.velocity.x, scene.velocity.y, scene.velocity.z),
    );
    kv("scene.yaw_rate", scene.yaw_rate.to_string());
    kv("scene.stereo_offset", scene.stereo_offset.to_string());
    kv("scene.brightness_gain", scene.brightness.gain.to_string());
    kv("scene.brightness_bias", scene.brightness.bias.to_string());
    kv("scene.fx", scene.intrinsics.fx.to_string());
    kv("scene.fy", scene.intrinsics.fy.to_string());
    kv("scene.cx", scene.intrinsics.cx.to_string());
    kv("scene.cy", scene.intrinsics.cy.to_string());
    kv("scene.width", scene.intrinsics.width.to_string());
    kv("scene.height", scene.intrinsics.height.to_string());
    kv("scene.meters_per_unit", scene.meters_per_unit.to_string());
    kv("scene.texture_octaves", scene.texture.octaves.to_string());
    kv("scene.texture_frequency", scene.texture.base_frequency.to_string());
    kv("scene.texture_seed", scene.texture.seed.to_string());
    kv("scene.texture_low", scene.texture.low.to_string());
    kv("scene.texture_high", scene.texture.high.to_string());

    let run = &cfg.run;
    kv("run.warmup_epochs", run.warmup_epochs.to_string());
    kv("run.boost_epochs", run.boost_epochs.to_string());
    kv("run.iterations_per_epoch", run.iterations_per_epoch.to_string());
    kv("run.learning_rate", run.learning_rate.to_string());
    kv("run.lr_decay", run.lr_decay.to_string());
    kv("run.lr_milestones", join(&run.lr_milestones));
    kv("run.warmup_scales", run.warmup_scales.to_string());
    kv("run.boost_scales", run.boost_scales.to_string());
    kv("run.pose_learning_rate", run.pose_learning_rate.to_string());
    kv("run.tri_min", run.tri_min.to_string());
    kv("run.incremental_pose", run.incremental_pose.to_string());
    kv("run.partial_incremental", run.partial_incremental.to_string());
    kv("run.error_reconstructions", run.error_reconstructions.to_string());
    kv("run.error_alpha", run.error_alpha.to_string());
    kv(
        "run.fixed_sources",
        run.fixed_sources
            .as_ref()
            .map(|s| s.iter().map(source_token).collect::<Vec<_>>().join(","))
            .unwrap_or_default(),
    );
    kv("run.start_epoch", run.start_epoch.to_string());
    kv("run.targets", run.targets.as_ref().map(|t| join(t)).unwrap_or_default());
    kv("run.init_depth", run.init_depth.map(|d| d.to_string()).unwrap_or_default());
    kv("run.snapshots", run.snapshots.to_string());
    kv(
        "run.resume_from",
        cfg.resume_from.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
    );

    kv("loss.ssim_weight", run.loss.ssim_weight.to_string());
    kv("loss.smoothness_lambda", run.loss.smoothness_lambda.to_string());
    kv("loss.automask", run.loss.automask.to_string());

    let kind = match cfg.pose.kind {
        PoseKind::Oracle => "oracle",
        PoseKind::Noisy => "noisy",
        PoseKind::Optimized => "optimized",
    };
    kv("pose.kind", kind.into());
    kv("pose.drift_c", cfg.pose.drift.c.to_string());
    kv("pose.drift_p", cfg.pose.drift.p.to_string());
    kv("pose.rotation_noise_deg", cfg.pose.drift.rotation_noise_deg.to_string());

    let cur = &run.curriculum;
    kv("curriculum.warmup_base", cur.warmup.base.to_string());
    kv("curriculum.warmup_slope", cur.warmup.slope.to_string());
    kv("curriculum.warmup_max_offset", cur.warmup.max_offset.to_string());
    kv("curriculum.boost_base", cur.boost.base.to_string());
    kv("curriculum.boost_slope", cur.boost.slope.to_string());
    kv("curriculum.boost_max_offset", cur.boost.max_offset.to_string());
    kv("curriculum.boost_tri_base", cur.boost_tri.base.to_string());
    kv("curriculum.boost_tri_slope", cur.boost_tri.slope.to_string());
    kv("curriculum.boost_tri_max_offset", cur.boost_tri.max_offset.to_string());
    kv("curriculum.include_stereo", cur.include_stereo.to_string());

    let m = &cfg.metrics;
    kv("metrics.median_scale", m.median_scale.to_string());
    kv("metrics.edge_low", m.edge_low.to_string());
    kv("metrics.edge_high", m.edge_high.to_string());
    let orientation = match m.acc_orientation {
        AccOrientation::GtToPred => "gt_to_pred",
        AccOrientation::PredToGt => "pred_to_gt",
    };
    kv("metrics.acc_orientation", orientation.into());
    kv("metrics.cloud_delta", m.cloud_delta.to_string());

    let p = &cfg.posesim;
    kv("posesim.baselines", join(&p.baselines));
    kv("posesim.max_separation", p.max_separation.to_string());
    kv("posesim.seeds", p.seeds.to_string());
    kv("posesim.frames", p.frames.to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use boostdepth_core::optim::RunConfig;

    #[test]
    fn round_trip_reproduces_every_field() {
        let mut cfg = ExperimentConfig::default();
        apply_preset(&mut cfg, Preset::Full);
        cfg.scene.layout = Layout::TwoPlaneStep { near: 5.5, far: 9.25, split_x: 0.125 };
        cfg.scene.brightness.gain = 1.03;
        cfg.run.fixed_sources = Some(vec![SourceId::Offset(2), SourceId::Stereo]);
        cfg.run.targets = Some(vec![3, 7]);
        cfg.run.init_depth = Some(6.5);
        cfg.resume_from = Some(PathBuf::from("runs/warmup/depth_0007.pfm"));
        cfg.seed = 41;

        let text = render_config(&cfg);
        let back = parse_config(&text, &ExperimentConfig::default()).unwrap();
        assert_eq!(render_config(&back), text);
        assert_eq!(back.scene, cfg.scene);
        assert_eq!(back.run.fixed_sources, cfg.run.fixed_sources);
        assert_eq!(back.run.learning_rate, cfg.run.learning_rate);
        assert_eq!(back.resume_from, cfg.resume_from);
        assert_eq!(back.seed, 41);
    }

    #[test]
    fn unknown_keys_are_rejected_with_the_line() {
        let err = parse_config("run.warmup_epochs = 3\nrun.warmupp = 4\n", &ExperimentConfig::default())
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("run.warmupp"), "{msg}");
    }

    #[test]
    fn malformed_values_name_the_key() {
        for (text, needle) in [
            ("run.learning_rate = fast", "run.learning_rate"),
            ("run.tri_min = yes", "run.tri_min"),
            ("scene.velocity = 1,2", "scene.velocity"),
            ("pose.kind = gps", "pose.kind"),
            ("run.fixed_sources = 1,x", "run.fixed_sources"),
            ("no equals sign here", "key = value"),
        ] {
            let err = parse_config(text, &ExperimentConfig::default()).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}");
            assert!(err.to_string().contains(needle), "{text} -> {err}");
        }
    }

    #[test]
    fn comments_blanks_and_layout_order_are_tolerated() {
        let text = "\n# two planes\nscene.near = 4.5\nscene.layout = two_plane_step\n\nscene.far = 12\n";
        let cfg = parse_config(text, &ExperimentConfig::default()).unwrap();
        assert_eq!(cfg.scene.layout, Layout::TwoPlaneStep { near: 4.5, far: 12.0, split_x: 0.0 });
    }

    #[test]
    fn empty_optionals_clear_previous_values() {
        let mut base = ExperimentConfig::default();
        base.run.fixed_sources = Some(vec![SourceId::Stereo]);
        base.run.init_depth = Some(3.0);
        base.resume_from = Some(PathBuf::from("x.pfm"));
        let text = "run.fixed_sources =\nrun.init_depth =\nrun.resume_from =\n";
        let cfg = parse_config(text, &base).unwrap();
        assert_eq!(cfg.run.fixed_sources, None);
        assert_eq!(cfg.run.init_depth, None);
        assert_eq!(cfg.resume_from, None);
    }

    #[test]
    fn presets_layer_between_defaults_and_the_file() {
        let mut cfg = ExperimentConfig::default();
        apply_preset(&mut cfg, Preset::Md2);
        assert_eq!(cfg.run.boost_epochs, 0);
        assert_eq!(cfg.run.warmup_epochs, 20);
        assert!(!cfg.run.tri_min);
        assert_eq!(
            cfg.run.fixed_sources.as_deref(),
            Some(&[SourceId::Offset(1), SourceId::Offset(-1)][..])
        );

        let cfg = parse_config("run.learning_rate = 0.02\n", &cfg).unwrap();
        assert_eq!(cfg.run.learning_rate, 0.02);
        assert!(!cfg.run.error_reconstructions);

        let mut pre = ExperimentConfig::default();
        apply_preset(&mut pre, Preset::Pre);
        assert_eq!(pre.run.start_epoch, RunConfig::default().warmup_epochs);
        assert_eq!(pre.run.total_epochs(), 20);
    }

    #[test]
    fn validation_rejects_inconsistent_sections() {
        let bad = [
            "metrics.edge_low = 0.3\nmetrics.edge_high = 0.1",
            "posesim.frames = 5\nposesim.max_separation = 7",
            "posesim.baselines =",
            "scene.frames = 0",
            "run.warmup_epochs = 0\nrun.boost_epochs = 0",
        ];
        for text in bad {
            assert!(parse_config(text, &ExperimentConfig::default()).is_err(), "{text}");
        }
    }
}
