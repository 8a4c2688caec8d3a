//! Drift simulation comparing direct and incremental pose estimation.

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::pose::{gt_relative, incremental_pose, PoseEstimator};
use serde::{Deserialize, Serialize};

/// Error law of the noisy oracle. The translation reported for a pair with
/// true baseline b is scaled by (1 - c * b^(p-1)), so the one-step error
/// norm is e(b) = c * b^p. Rotations get isotropic axis-angle noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    pub c: f64,
    pub p: f64,
    pub rotation_noise_deg: f64,
}

impl Default for DriftModel {
    fn default() -> Self {
        DriftModel { c: 0.5, p: 2.0, rotation_noise_deg: 0.05 }
    }
}

impl DriftModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::config("drift coefficient c must be finite and >= 0"));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::config("drift exponent p must be finite and >= 1"));
        }
        if !(self.rotation_noise_deg >= 0.0 && self.rotation_noise_deg.is_finite()) {
            return Err(Error::config("rotation noise must be finite and >= 0"));
        }
        Ok(())
    }

    /// Translation scale applied to a pair with true baseline `b`.
    pub fn translation_scale(&self, b: f64) -> f64 {
        (1.0 - self.c * b.powf(self.p - 1.0)).max(0.0)
    }

    /// Expected one-step translation error norm e(b) = c * b^p.
    pub fn one_step_error(&self, b: f64) -> f64 {
        self.c * b.powf(self.p)
    }
}

/// Per-separation translation-error statistics for the two policies.
/// Means and deviations are taken across seeds of per-seed means, which
/// themselves average over every admissible start frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub separation: usize,
    pub direct_mean: f64,
    pub direct_std: f64,
    pub incremental_mean: f64,
    pub incremental_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftTable {
    pub rows: Vec<DriftRow>,
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Walk every start frame of `trajectory` at each separation 1..=max and
/// record how far the estimated translation lands from the true one, for
/// one-shot estimates and for chained one-step estimates.
pub fn simulate_drift(
    drift: &DriftModel,
    trajectory: &[RigidTransform],
    max_separation: usize,
    seeds: &[u64],
) -> Result<DriftTable> {
    drift.validate()?;
    if trajectory.len() <= max_separation {
        return Err(Error::config(format!(
            "trajectory of {} frames cannot reach separation {}",
            trajectory.len(),
            max_separation
        )));
    }
    if seeds.is_empty() {
        return Err(Error::config("drift simulation needs at least one seed"));
    }
    let mut rows = Vec::with_capacity(max_separation);
    for n in 1..=max_separation {
        let mut direct = Vec::with_capacity(seeds.len());
        let mut incremental = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut est = PoseEstimator::noisy(*drift, seed);
            let mut d_sum = 0.0;
            let mut i_sum = 0.0;
            let starts = trajectory.len() - n;
            for t in 0..starts {
                let truth = gt_relative(trajectory, t, t + n)?;
                let one_shot = est.estimate(trajectory, t, t + n)?;
                let chained = incremental_pose(&mut est, trajectory, t, n as i32)?;
                d_sum += (one_shot.translation - truth.translation).norm();
                i_sum += (chained.translation - truth.translation).norm();
            }
            direct.push(d_sum / starts as f64);
            incremental.push(i_sum / starts as f64);
        }
        let (dm, ds) = mean_std(&direct);
        let (im, is) = mean_std(&incremental);
        rows.push(DriftRow {
            separation: n,
            direct_mean: dm,
            direct_std: ds,
            incremental_mean: im,
            incremental_std: is,
        });
    }
    Ok(DriftTable { rows })
}
