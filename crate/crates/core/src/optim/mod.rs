//! Direct gradient optimization of per-pixel log-depth against the staged
//! photometric objective: a multi-scale warmup on short baselines, then a
//! single-scale boost stage that widens the source curriculum and switches
//! on the pose-handling machinery.

mod objective;

pub use objective::{build_candidates, evaluate, Candidate, Evaluation};

use crate::curriculum::{
    expand_sources, schedule_for_epoch, select_source, BaselineModel, CurriculumParams,
    CurriculumSchedule, OffsetWindow, SourceId, Stage,
};
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::grid::Grid;
use crate::io::TrainingLogRow;
use crate::loss::LossConfig;
use crate::pose::{poses_for_sources, PoseEstimator, PoseMode, PosePolicy};
use crate::world::{FrameWindow, Scene};
use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Representable depth range; exp(log_depth) is projected back into it
/// after every step.
pub const DEPTH_MIN: f64 = 1e-3;
pub const DEPTH_MAX: f64 = 100.0;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// First and second moment accumulators for one grid.
#[derive(Debug, Clone)]
struct AdamGrid {
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

impl AdamGrid {
    fn new(len: usize) -> Self {
        AdamGrid { m: vec![0.0; len], v: vec![0.0; len], steps: 0 }
    }
}

/// The optimized parameters: one log-depth grid per scale, each with its own
/// moment accumulators. Scale s halves the full resolution s times.
#[derive(Debug, Clone)]
pub struct DepthState {
    pub log_depth: Vec<Grid>,
    adam: Vec<AdamGrid>,
}

impl DepthState {
    /// Constant initialization at `init_depth` on every scale.
    pub fn new(width: usize, height: usize, scales: usize, init_depth: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::config("depth state needs a non-empty resolution"));
        }
        if scales == 0 {
            return Err(Error::config("depth state needs at least one scale"));
        }
        if !(init_depth.is_finite() && init_depth > 0.0) {
            return Err(Error::config(format!("initial depth {init_depth} must be finite and > 0")));
        }
        let l = init_depth.clamp(DEPTH_MIN, DEPTH_MAX).ln();
        let mut log_depth = Vec::with_capacity(scales);
        let mut adam = Vec::with_capacity(scales);
        for s in 0..scales {
            let ws = (width >> s).max(1);
            let hs = (height >> s).max(1);
            log_depth.push(Grid::new(ws, hs, l));
            adam.push(AdamGrid::new(ws * hs));
        }
        Ok(DepthState { log_depth, adam })
    }

    /// Resume from a full-resolution depth map (checkpoint). Invalid pixels
    /// and the coarser scales start at the map's median.
    pub fn from_depth(depth: &DepthMap, scales: usize) -> Result<Self> {
        let median = depth.median()?;
        let mut state = DepthState::new(depth.width(), depth.height(), scales, median)?;
        for i in 0..depth.values.data.len() {
            if depth.valid[i] {
                state.log_depth[0].data[i] = depth.values.data[i].clamp(DEPTH_MIN, DEPTH_MAX).ln();
            }
        }
        Ok(state)
    }

    pub fn width(&self) -> usize {
        self.log_depth[0].width
    }

    pub fn height(&self) -> usize {
        self.log_depth[0].height
    }

    /// Current full-resolution estimate.
    pub fn depth(&self) -> DepthMap {
        DepthMap::from_grid(self.log_depth[0].map(f64::exp))
    }

    /// One adaptive-moment step per supplied gradient grid (grid 0 first),
    /// then projection back into the representable depth interval.
    pub fn apply(&mut self, grads: &[Grid], lr: f64) -> Result<()> {
        if grads.len() > self.log_depth.len() {
            return Err(Error::config(format!(
                "{} gradient grids for {} scales",
                grads.len(),
                self.log_depth.len()
            )));
        }
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::config(format!("learning rate {lr} must be finite and > 0")));
        }
        let lo = DEPTH_MIN.ln();
        let hi = DEPTH_MAX.ln();
        for (s, g) in grads.iter().enumerate() {
            if !g.same_shape(&self.log_depth[s]) {
                return Err(Error::config(format!("gradient shape mismatch at scale {s}")));
            }
            let a = &mut self.adam[s];
            a.steps += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(a.steps as i32);
            let bc2 = 1.0 - ADAM_BETA2.powi(a.steps as i32);
            let x = &mut self.log_depth[s].data;
            for i in 0..g.data.len() {
                let gi = g.data[i];
                a.m[i] = ADAM_BETA1 * a.m[i] + (1.0 - ADAM_BETA1) * gi;
                a.v[i] = ADAM_BETA2 * a.v[i] + (1.0 - ADAM_BETA2) * gi * gi;
                let m_hat = a.m[i] / bc1;
                let v_hat = a.v[i] / bc2;
                x[i] = (x[i] - lr * m_hat / (v_hat.sqrt() + ADAM_EPS)).clamp(lo, hi);
            }
        }
        Ok(())
    }
}

/// Stage layout, schedule and ablation switches for a full run. Defaults
/// give the complete method; the ablation flags peel its parts off.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub warmup_epochs: usize,
    pub boost_epochs: usize,
    /// Gradient steps per target frame per epoch.
    pub iterations_per_epoch: usize,
    pub learning_rate: f64,
    /// Multiplied onto the rate at each milestone epoch (absolute count).
    pub lr_decay: f64,
    pub lr_milestones: Vec<usize>,
    pub warmup_scales: usize,
    pub boost_scales: usize,
    /// Step size for learnable pose estimators.
    pub pose_learning_rate: f64,
    pub tri_min: bool,
    pub incremental_pose: bool,
    pub partial_incremental: bool,
    pub error_reconstructions: bool,
    pub error_alpha: f64,
    /// Bypass the curriculum with a fixed source set.
    pub fixed_sources: Option<Vec<SourceId>>,
    /// First epoch to execute; later values resume mid-schedule.
    pub start_epoch: usize,
    /// Target frames visited each epoch; None means the scene's center
    /// frame, the only one whose window admits the widest boost offsets.
    pub targets: Option<Vec<usize>>,
    /// Depth initialization; None means the scene's median true depth.
    pub init_depth: Option<f64>,
    /// Keep a per-epoch depth snapshot in the run output.
    pub snapshots: bool,
    pub curriculum: CurriculumParams,
    pub loss: LossConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            warmup_epochs: 10,
            boost_epochs: 10,
            iterations_per_epoch: 40,
            learning_rate: 1e-4,
            lr_decay: 0.4,
            lr_milestones: vec![11, 13, 15, 16, 17, 18, 19],
            warmup_scales: 4,
            boost_scales: 1,
            pose_learning_rate: 1e-3,
            tri_min: true,
            incremental_pose: true,
            partial_incremental: true,
            error_reconstructions: true,
            error_alpha: 5.5,
            fixed_sources: None,
            start_epoch: 0,
            targets: None,
            init_depth: None,
            snapshots: false,
            curriculum: CurriculumParams::default(),
            loss: LossConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn total_epochs(&self) -> usize {
        self.warmup_epochs + self.boost_epochs
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_epochs() == 0 {
            return Err(Error::config("run needs at least one epoch"));
        }
        if self.start_epoch >= self.total_epochs() {
            return Err(Error::config(format!(
                "start epoch {} is past the {}-epoch schedule",
                self.start_epoch,
                self.total_epochs()
            )));
        }
        if self.iterations_per_epoch == 0 {
            return Err(Error::config("iterations_per_epoch must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config(format!("learning rate {} must be finite and > 0", self.learning_rate)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::config(format!("lr decay {} outside (0, 1]", self.lr_decay)));
        }
        if self.warmup_scales == 0 || self.boost_scales == 0 {
            return Err(Error::config("stages need at least one scale"));
        }
        if !(self.pose_learning_rate.is_finite() && self.pose_learning_rate > 0.0) {
            return Err(Error::config("pose learning rate must be finite and > 0"));
        }
        if !(self.error_alpha.is_finite() && self.error_alpha > 0.0) {
            return Err(Error::config(format!("error_alpha {} must be finite and > 0", self.error_alpha)));
        }
        if let Some(fixed) = &self.fixed_sources {
            if fixed.is_empty() {
                return Err(Error::config("fixed source set cannot be empty"));
            }
        }
        if let Some(t) = &self.targets {
            if t.is_empty() {
                return Err(Error::config("target frame list cannot be empty"));
            }
        }
        if let Some(d) = self.init_depth {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::config(format!("initial depth {d} must be finite and > 0")));
            }
        }
        Ok(())
    }

    /// Rate in effect at an epoch: the base rate decayed once per milestone
    /// at or before it.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let hits = self.lr_milestones.iter().filter(|&&m| m <= epoch).count() as i32;
        self.learning_rate * self.lr_decay.powi(hits)
    }

    pub fn stage_of(&self, epoch: usize) -> Stage {
        if epoch < self.warmup_epochs {
            Stage::Warmup
        } else {
            Stage::Boost
        }
    }
}

/// Everything one gradient step needs besides the mutable state.
#[derive(Debug, Clone)]
pub struct StepConfig {
    pub policy: PosePolicy,
    pub error_reconstructions: bool,
    pub loss: LossConfig,
    /// Number of leading state scales to evaluate.
    pub scales: usize,
    pub lr: f64,
    pub pose_lr: f64,
    pub sources_override: Option<Vec<SourceId>>,
}

/// What one step saw and did.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub loss: f64,
    pub sources: Vec<SourceId>,
    pub automask_fraction: f64,
}

/// Resolve the source set for a step: the override, or the curriculum pick
/// expanded around the chosen candidate. Both are clipped to the window;
/// the curriculum pool is clipped before selection so the budget never
/// chooses a frame the window cannot supply.
pub fn plan_sources(
    model: &BaselineModel,
    sched: &CurriculumSchedule,
    window: OffsetWindow,
    sources_override: Option<&[SourceId]>,
) -> Result<Vec<SourceId>> {
    if let Some(fixed) = sources_override {
        let kept: Vec<SourceId> = fixed.iter().copied().filter(|&s| window.contains(s)).collect();
        if kept.is_empty() {
            return Err(Error::config("no fixed source fits the optimization window"));
        }
        return Ok(kept);
    }
    let mut sched = sched.clone();
    sched.omega.retain(|&s| window.contains(s));
    let selection = select_source(model, &sched)?;
    Ok(expand_sources(&selection, sched.tri_min, &window)?.sources)
}

/// Camera-to-world poses of the window's frames, indexed by frame number.
fn window_trajectory(window: &FrameWindow) -> Result<Vec<RigidTransform>> {
    for (want, &have) in window.frames.keys().enumerate() {
        if want != have {
            return Err(Error::data("optimization window must cover frames 0..n contiguously"));
        }
    }
    Ok(window.frames.values().map(|f| f.world_from_camera).collect())
}

/// One gradient step on the window's target: plan sources, assemble poses,
/// evaluate the objective, update the depth grids and (for learnable
/// estimators queried directly) the poses.
pub fn step(
    state: &mut DepthState,
    window: &FrameWindow,
    model: &BaselineModel,
    est: &mut PoseEstimator,
    sched: &CurriculumSchedule,
    cfg: &StepConfig,
) -> Result<StepOutcome> {
    if cfg.scales == 0 || cfg.scales > state.log_depth.len() {
        return Err(Error::config(format!(
            "step wants {} scales but the state holds {}",
            cfg.scales,
            state.log_depth.len()
        )));
    }
    let sources =
        plan_sources(model, sched, window.offset_window(), cfg.sources_override.as_deref())?;
    let trajectory = window_trajectory(window)?;
    let poses = poses_for_sources(
        est,
        &cfg.policy,
        &sources,
        window.target_index,
        &trajectory,
        &window.stereo_relative(),
    )?;
    let alpha = if cfg.error_reconstructions { Some(cfg.policy.error_alpha) } else { None };
    let candidates = build_candidates(&poses, alpha)?;
    let eval = evaluate(window, &candidates, &state.log_depth[..cfg.scales], &cfg.loss, true)?;
    state.apply(&eval.grads, cfg.lr)?;
    // Chained poses are composites of one-step estimates; their gradients do
    // not decompose onto the stored pairs, so pose learning only runs when
    // the estimator was queried directly.
    if cfg.policy.mode == PoseMode::Direct {
        for (&source, (g_t, g_r)) in &eval.pose_grads {
            if let SourceId::Offset(k) = source {
                let to = (window.target_index as i64 + k as i64) as usize;
                est.apply_update((window.target_index, to), g_t, g_r, cfg.pose_lr);
            }
        }
    }
    Ok(StepOutcome { loss: eval.loss, sources, automask_fraction: eval.automask_fraction })
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub depth: DepthMap,
    pub log: Vec<TrainingLogRow>,
    /// (epoch, depth after that epoch) when snapshots are enabled.
    pub snapshots: Vec<(usize, DepthMap)>,
}

/// Execute the staged schedule on a rendered scene, initializing the depth
/// state from the configuration.
pub fn run(scene: &Scene, est: &mut PoseEstimator, cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let init = match cfg.init_depth {
        Some(d) => d,
        None => scene.frames[scene.spec.center()].depth.median()?,
    };
    let mut state = DepthState::new(
        scene.spec.intrinsics.width,
        scene.spec.intrinsics.height,
        cfg.warmup_scales.max(cfg.boost_scales),
        init,
    )?;
    run_with_state(&mut state, scene, est, cfg)
}

/// Like [`run`] but resuming from caller-provided state, e.g. a depth
/// checkpoint loaded from disk.
pub fn run_with_state(
    state: &mut DepthState,
    scene: &Scene,
    est: &mut PoseEstimator,
    cfg: &RunConfig,
) -> Result<RunOutput> {
    cfg.validate()?;
    let targets = match &cfg.targets {
        Some(t) => t.clone(),
        None => vec![scene.spec.center()],
    };
    for &t in &targets {
        if t >= scene.frames.len() {
            return Err(Error::config(format!("target frame {t} outside the scene")));
        }
    }
    let model = scene.baseline_model()?;
    let chained = cfg.incremental_pose || cfg.partial_incremental;
    let mut log = Vec::new();
    let mut snapshots = Vec::new();
    for epoch in cfg.start_epoch..cfg.total_epochs() {
        let stage = cfg.stage_of(epoch);
        let lr = cfg.learning_rate_at(epoch);
        let sched = schedule_for_epoch(epoch, stage, cfg.tri_min, &cfg.curriculum);
        let mode = match (stage, chained, cfg.partial_incremental) {
            (Stage::Warmup, _, _) | (Stage::Boost, false, _) => PoseMode::Direct,
            (Stage::Boost, true, true) => PoseMode::PartialIncremental,
            (Stage::Boost, true, false) => PoseMode::FullIncremental,
        };
        let step_cfg = StepConfig {
            policy: PosePolicy { mode, error_alpha: cfg.error_alpha },
            error_reconstructions: stage == Stage::Boost && cfg.error_reconstructions,
            loss: cfg.loss,
            scales: match stage {
                Stage::Warmup => cfg.warmup_scales,
                Stage::Boost => cfg.boost_scales,
            },
            lr,
            pose_lr: cfg.pose_learning_rate,
            sources_override: cfg.fixed_sources.clone(),
        };
        let mut iteration = 0;
        for &t in &targets {
            let window = scene.window(t)?;
            for _ in 0..cfg.iterations_per_epoch {
                let out = step(state, &window, &model, est, &sched, &step_cfg)?;
                log.push(TrainingLogRow {
                    epoch,
                    iteration,
                    loss: out.loss,
                    lr,
                    stage,
                    sources: out.sources,
                });
                iteration += 1;
            }
        }
        if cfg.snapshots {
            snapshots.push((epoch, state.depth()));
        }
    }
    Ok(RunOutput { depth: state.depth(), log, snapshots })
}

/// Compare analytic log-depth gradients against central finite differences
/// at sampled pixels; returns the worst relative error. The relative error
/// uses a small floor so flat regions where both sides vanish compare as
/// equal instead of amplifying rounding noise.
pub fn gradient_check(
    state: &DepthState,
    window: &FrameWindow,
    candidates: &[Candidate],
    loss_cfg: &LossConfig,
    scales: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if scales == 0 || scales > state.log_depth.len() {
        return Err(Error::config("gradient check scale count out of range"));
    }
    let grids = &state.log_depth[..scales];
    let eval = evaluate(window, candidates, grids, loss_cfg, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Large enough to clear f64 cancellation noise, small enough that the
    // structural-similarity curvature's second-order term stays below the
    // comparison tolerance.
    let h = 3e-6;
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let s = rng.gen_range(0..scales);
        let i = rng.gen_range(0..grids[s].data.len());
        let mut probe = grids.to_vec();
        probe[s].data[i] += h;
        let lp = evaluate(window, candidates, &probe, loss_cfg, false)?.loss;
        probe[s].data[i] -= 2.0 * h;
        let lm = evaluate(window, candidates, &probe, loss_cfg, false)?.loss;
        let fd = (lp - lm) / (2.0 * h);
        let g = eval.grads[s].data[i];
        worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-6));
    }
    Ok(worst)
}

/// Finite-difference check of the pose gradients: each standard candidate's
/// pose is perturbed in its six tangent directions while every other pose,
/// including the error-induced variants derived from it, stays frozen. The
/// frozen variants make this a direct probe of the gradient cut through
/// them.
pub fn pose_gradient_check(
    state: &DepthState,
    window: &FrameWindow,
    candidates: &[Candidate],
    loss_cfg: &LossConfig,
    scales: usize,
) -> Result<f64> {
    if scales == 0 || scales > state.log_depth.len() {
        return Err(Error::config("gradient check scale count out of range"));
    }
    let grids = &state.log_depth[..scales];
    let eval = evaluate(window, candidates, grids, loss_cfg, true)?;
    // Smaller step than the depth probes: a pose perturbation moves every
    // pixel's residual at once, so both the second-order term and the odds
    // of sweeping some residual through the absolute-difference kink grow
    // with the step.
    let h = 1e-7;
    let mut worst = 0.0_f64;
    for (ci, c) in candidates.iter().enumerate() {
        if c.error_induced {
            continue;
        }
        let zero = (Vector3::zeros(), Vector3::zeros());
        let (g_t, g_r) = eval.pose_grads.get(&c.source).unwrap_or(&zero);
        for j in 0..3 {
            let mut axis = Vector3::zeros();
            axis[j] = 1.0;

            let mut probe = candidates.to_vec();
            probe[ci].pose =
                RigidTransform::from_parts(c.pose.rotation, c.pose.translation + axis * h);
            let lp = evaluate(window, &probe, grids, loss_cfg, false)?.loss;
            probe[ci].pose =
                RigidTransform::from_parts(c.pose.rotation, c.pose.translation - axis * h);
            let lm = evaluate(window, &probe, grids, loss_cfg, false)?.loss;
            let fd = (lp - lm) / (2.0 * h);
            worst = worst.max((fd - g_t[j]).abs() / fd.abs().max(g_t[j].abs()).max(1e-6));

            let plus = Rotation3::from_scaled_axis(axis * h).into_inner() * c.pose.rotation;
            probe[ci].pose = RigidTransform::from_parts(plus, c.pose.translation);
            let lp = evaluate(window, &probe, grids, loss_cfg, false)?.loss;
            let minus = Rotation3::from_scaled_axis(axis * -h).into_inner() * c.pose.rotation;
            probe[ci].pose = RigidTransform::from_parts(minus, c.pose.translation);
            let lm = evaluate(window, &probe, grids, loss_cfg, false)?.loss;
            let fd = (lp - lm) / (2.0 * h);
            worst = worst.max((fd - g_r[j]).abs() / fd.abs().max(g_r[j].abs()).max(1e-6));
        }
    }
    Ok(worst)
}
