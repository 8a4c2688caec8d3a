//! Relative-pose estimation policies over an abstract estimator.
//!
//! Estimates map points of the `from` frame into the `to` frame. Three
//! estimator kinds exist: an oracle (exact ground truth), a noisy oracle
//! whose translation error grows superlinearly with baseline, and an
//! optimized store whose per-pair parameters receive gradient updates.
//! Long-range poses can be formed directly or as left-multiplied chains of
//! one-step estimates, which trades one large-baseline error for several
//! small ones.

pub mod drift;

pub use drift::{simulate_drift, DriftModel, DriftTable};

use crate::curriculum::SourceId;
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use nalgebra::{Rotation3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::{BTreeMap, HashMap};

/// How long-range relative poses are assembled from estimator calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseMode {
    /// One estimator call per pair, whatever the separation.
    Direct,
    /// Left-multiplied product of one-step estimates.
    FullIncremental,
    /// Chained translation only for the closest monocular source(s);
    /// all other sources keep the direct translation but take the
    /// chained rotation.
    PartialIncremental,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosePolicy {
    pub mode: PoseMode,
    /// Translation divisor for error-induced reconstructions.
    pub error_alpha: f64,
}

impl Default for PosePolicy {
    fn default() -> Self {
        PosePolicy { mode: PoseMode::Direct, error_alpha: 5.5 }
    }
}

impl PosePolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.error_alpha > 0.0 && self.error_alpha.is_finite()) {
            return Err(Error::config("error_alpha must be finite and > 0"));
        }
        Ok(())
    }
}

/// Ground-truth relative pose between two trajectory entries, mapping
/// `from`-frame points into the `to` frame.
pub fn gt_relative(trajectory: &[RigidTransform], from: usize, to: usize) -> Result<RigidTransform> {
    let a = trajectory
        .get(from)
        .ok_or_else(|| Error::data(format!("frame {from} outside trajectory")))?;
    let b = trajectory
        .get(to)
        .ok_or_else(|| Error::data(format!("frame {to} outside trajectory")))?;
    Ok(RigidTransform::between(a, b))
}

fn pair_seed(seed: u64, from: usize, to: usize) -> u64 {
    let mut z = seed
        ^ (from as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (to as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-pair learnable pose with Adam moments.
#[derive(Debug, Clone)]
struct PoseParam {
    pose: RigidTransform,
    m_t: Vector3<f64>,
    v_t: Vector3<f64>,
    m_r: Vector3<f64>,
    v_r: Vector3<f64>,
    steps: u64,
}

impl PoseParam {
    fn new(pose: RigidTransform) -> Self {
        PoseParam {
            pose,
            m_t: Vector3::zeros(),
            v_t: Vector3::zeros(),
            m_r: Vector3::zeros(),
            v_r: Vector3::zeros(),
            steps: 0,
        }
    }
}

/// Learnable pose store. Pairs are initialized on first query, from the
/// noisy oracle when a drift model is present and from ground truth
/// otherwise, then refined by [`PoseEstimator::apply_update`].
#[derive(Debug, Clone)]
pub struct OptimizedPoses {
    pub init_drift: Option<DriftModel>,
    pub seed: u64,
    entries: HashMap<(usize, usize), PoseParam>,
}

#[derive(Debug, Clone)]
pub enum PoseEstimator {
    Oracle,
    NoisyOracle { drift: DriftModel, seed: u64 },
    Optimized(OptimizedPoses),
}

impl PoseEstimator {
    pub fn oracle() -> Self {
        PoseEstimator::Oracle
    }

    pub fn noisy(drift: DriftModel, seed: u64) -> Self {
        PoseEstimator::NoisyOracle { drift, seed }
    }

    pub fn optimized(init_drift: Option<DriftModel>, seed: u64) -> Self {
        PoseEstimator::Optimized(OptimizedPoses { init_drift, seed, entries: HashMap::new() })
    }

    /// Estimate the relative pose for one ordered pair. Repeated queries
    /// with the same arguments return the same answer, as a trained network
    /// in eval mode would.
    pub fn estimate(
        &mut self,
        trajectory: &[RigidTransform],
        from: usize,
        to: usize,
    ) -> Result<RigidTransform> {
        match self {
            PoseEstimator::Oracle => gt_relative(trajectory, from, to),
            PoseEstimator::NoisyOracle { drift, seed } => {
                let truth = gt_relative(trajectory, from, to)?;
                Ok(corrupt(&truth, drift, *seed, from, to))
            }
            PoseEstimator::Optimized(store) => {
                if let Some(param) = store.entries.get(&(from, to)) {
                    return Ok(param.pose.clone());
                }
                let truth = gt_relative(trajectory, from, to)?;
                let init = match &store.init_drift {
                    Some(drift) => corrupt(&truth, drift, store.seed, from, to),
                    None => truth,
                };
                store.entries.insert((from, to), PoseParam::new(init.clone()));
                Ok(init)
            }
        }
    }

    /// Gradient step on one stored pair; gradients are w.r.t. the output
    /// point X' = R X + t, folded into translation (sum of dL/dX') and a
    /// left rotation increment (sum of (R X) x dL/dX'). Returns false when
    /// this estimator has no learnable parameters or the pair was never
    /// queried.
    pub fn apply_update(
        &mut self,
        pair: (usize, usize),
        g_t: &Vector3<f64>,
        g_r: &Vector3<f64>,
        lr: f64,
    ) -> bool {
        let PoseEstimator::Optimized(store) = self else { return false };
        let Some(param) = store.entries.get_mut(&pair) else { return false };
        param.steps += 1;
        let t = param.steps;
        let step_t = adam_step(&mut param.m_t, &mut param.v_t, g_t, t, lr);
        let step_r = adam_step(&mut param.m_r, &mut param.v_r, g_r, t, lr);
        let delta = Rotation3::from_scaled_axis(-step_r);
        let rotation = Rotation3::from_matrix(&(delta.into_inner() * param.pose.rotation));
        param.pose = RigidTransform::from_parts(rotation.into_inner(), param.pose.translation - step_t);
        true
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn adam_step(
    m: &mut Vector3<f64>,
    v: &mut Vector3<f64>,
    g: &Vector3<f64>,
    t: u64,
    lr: f64,
) -> Vector3<f64> {
    *m = *m * ADAM_BETA1 + g * (1.0 - ADAM_BETA1);
    *v = *v * ADAM_BETA2 + g.component_mul(g) * (1.0 - ADAM_BETA2);
    let m_hat = *m / (1.0 - ADAM_BETA1.powi(t as i32));
    let v_hat = *v / (1.0 - ADAM_BETA2.powi(t as i32));
    Vector3::new(
        lr * m_hat.x / (v_hat.x.sqrt() + ADAM_EPS),
        lr * m_hat.y / (v_hat.y.sqrt() + ADAM_EPS),
        lr * m_hat.z / (v_hat.z.sqrt() + ADAM_EPS),
    )
}

fn corrupt(truth: &RigidTransform, drift: &DriftModel, seed: u64, from: usize, to: usize) -> RigidTransform {
    let b = truth.translation.norm();
    let scale = drift.translation_scale(b);
    let sigma = drift.rotation_noise_deg.to_radians();
    let rotation = if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(pair_seed(seed, from, to));
        let axis = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ) * sigma;
        Rotation3::from_scaled_axis(axis).into_inner() * truth.rotation
    } else {
        truth.rotation
    };
    RigidTransform::from_parts(rotation, truth.translation * scale)
}

/// Relative pose over `n` signed frames as the left-multiplied product of
/// one-step estimates: the chain for t -> t+n is P(t+n-1 -> t+n) * ... *
/// P(t -> t+1).
pub fn incremental_pose(
    est: &mut PoseEstimator,
    trajectory: &[RigidTransform],
    t: usize,
    n: i32,
) -> Result<RigidTransform> {
    let step = n.signum() as i64;
    let mut chain = RigidTransform::identity();
    let mut i = t as i64;
    if i >= trajectory.len() as i64 {
        return Err(Error::data(format!("frame {t} outside trajectory")));
    }
    for _ in 0..n.unsigned_abs() {
        let j = i + step;
        if j < 0 || j >= trajectory.len() as i64 {
            return Err(Error::data(format!("incremental chain leaves trajectory at frame {j}")));
        }
        let one = est.estimate(trajectory, i as usize, j as usize)?;
        chain = one.compose(&chain);
        i = j;
    }
    Ok(chain)
}

/// Assemble the effective pose for every selected source. The stereo pose
/// always comes from the fixed rig extrinsics; monocular poses follow the
/// policy mode. Under partial incremental chaining, only the source(s) at
/// the smallest |offset| take the chained translation; the rest mix the
/// chained rotation with the direct translation.
pub fn poses_for_sources(
    est: &mut PoseEstimator,
    policy: &PosePolicy,
    sources: &[SourceId],
    t: usize,
    trajectory: &[RigidTransform],
    stereo_rig: &RigidTransform,
) -> Result<BTreeMap<SourceId, RigidTransform>> {
    policy.validate()?;
    let min_abs = sources
        .iter()
        .filter_map(|s| match s {
            SourceId::Offset(k) => Some(k.abs()),
            SourceId::Stereo => None,
        })
        .min();
    let mut out = BTreeMap::new();
    for &source in sources {
        let pose = match source {
            SourceId::Stereo => stereo_rig.clone(),
            SourceId::Offset(k) => {
                let to = t as i64 + k as i64;
                if to < 0 || to >= trajectory.len() as i64 {
                    return Err(Error::data(format!("source offset {k} leaves the trajectory")));
                }
                match policy.mode {
                    PoseMode::Direct => est.estimate(trajectory, t, to as usize)?,
                    PoseMode::FullIncremental => incremental_pose(est, trajectory, t, k)?,
                    PoseMode::PartialIncremental => {
                        let chained = incremental_pose(est, trajectory, t, k)?;
                        if Some(k.abs()) == min_abs {
                            chained
                        } else {
                            let direct = est.estimate(trajectory, t, to as usize)?;
                            RigidTransform::from_parts(chained.rotation, direct.translation)
                        }
                    }
                }
            }
        };
        out.insert(source, pose);
    }
    Ok(out)
}

/// Pose used for an error-induced reconstruction: same rotation, translation
/// divided by alpha. Gradients through it are cut at the call site; this
/// function only builds the value.
pub fn error_induced_pose(pose: &RigidTransform, alpha: f64) -> Result<RigidTransform> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!("error-induced alpha must be finite and > 0, got {alpha}")));
    }
    Ok(RigidTransform::from_parts(pose.rotation, pose.translation / alpha))
}
