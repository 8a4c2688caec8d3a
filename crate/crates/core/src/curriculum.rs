//! Baseline curriculum: which source frames a target is reconstructed from,
//! as a function of training progress.
//!
//! The source pool is indexed relative to the target: temporal neighbors
//! `t+k` and the stereo partner. Each candidate has a nominal baseline
//! G(t, t+k) = b * |k| and G(t, s) fixed by the rig. The scheduler raises a
//! baseline budget `tau` with the epoch and picks the widest candidate that
//! fits; tri-aggregation widens the picked pair into a small set of
//! staggered separations.

use crate::error::{Error, Result};

/// A source frame named relative to the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SourceId {
    /// Temporal neighbor t+k (k may be negative).
    Offset(i32),
    /// Stereo partner of the target.
    Stereo,
}

impl std::fmt::Display for SourceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SourceId::Offset(k) => write!(f, "{k:+}"),
            SourceId::Stereo => write!(f, "s"),
        }
    }
}

/// Nominal baseline model of a constant-velocity sequence with a stereo rig.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineModel {
    /// Translation norm between adjacent frames.
    pub per_frame: f64,
    /// Fixed stereo baseline.
    pub stereo: f64,
}

impl BaselineModel {
    pub fn new(per_frame: f64, stereo: f64) -> Result<Self> {
        if !(per_frame > 0.0 && per_frame.is_finite()) {
            return Err(Error::config(format!("per-frame baseline must be positive, got {per_frame}")));
        }
        if !(stereo > 0.0 && stereo.is_finite()) {
            return Err(Error::config(format!("stereo baseline must be positive, got {stereo}")));
        }
        Ok(BaselineModel { per_frame, stereo })
    }

    /// Nominal baseline of one source: b * |k| for temporal neighbors, the
    /// rig constant for stereo.
    pub fn baseline(&self, source: SourceId) -> f64 {
        match source {
            SourceId::Offset(k) => self.per_frame * k.unsigned_abs() as f64,
            SourceId::Stereo => self.stereo,
        }
    }
}

pub const DEFAULT_STEREO_BASELINE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Warmup,
    Boost,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::Warmup => write!(f, "warmup"),
            Stage::Boost => write!(f, "boost"),
        }
    }
}

/// Linear budget rule tau(epoch) = base + slope * epoch and the largest
/// positive offset admitted into the pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetRule {
    pub base: f64,
    pub slope: f64,
    pub max_offset: i32,
}

/// Scheduler coefficients. Defaults follow the training recipe; every field
/// can be overridden from configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurriculumParams {
    pub warmup: BudgetRule,
    pub boost: BudgetRule,
    /// Boost rule when tri-aggregation is on; the wider pool compensates
    /// for the staggered sets.
    pub boost_tri: BudgetRule,
    pub include_stereo: bool,
}

impl Default for CurriculumParams {
    fn default() -> Self {
        CurriculumParams {
            warmup: BudgetRule { base: 0.1, slope: 0.04, max_offset: 2 },
            boost: BudgetRule { base: -0.4, slope: 0.1, max_offset: 5 },
            boost_tri: BudgetRule { base: -0.9, slope: 0.15, max_offset: 7 },
            include_stereo: true,
        }
    }
}

/// Resolved schedule for one epoch: candidate pool and baseline budget.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumSchedule {
    pub stage: Stage,
    pub epoch: usize,
    pub tau: f64,
    pub omega: Vec<SourceId>,
    pub tri_min: bool,
}

/// Build the epoch schedule. Boost budgets use the absolute epoch counter,
/// so a 10-epoch warmup hands over at epoch 10 with its budget already grown.
pub fn schedule_for_epoch(
    epoch: usize,
    stage: Stage,
    tri_min: bool,
    params: &CurriculumParams,
) -> CurriculumSchedule {
    let rule = match (stage, tri_min) {
        (Stage::Warmup, _) => &params.warmup,
        (Stage::Boost, false) => &params.boost,
        (Stage::Boost, true) => &params.boost_tri,
    };
    let mut omega = Vec::new();
    if params.include_stereo {
        omega.push(SourceId::Stereo);
    }
    for k in 1..=rule.max_offset {
        omega.push(SourceId::Offset(k));
    }
    CurriculumSchedule {
        stage,
        epoch,
        tau: rule.base + rule.slope * epoch as f64,
        omega,
        tri_min,
    }
}

/// The picked source pair before expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSelection {
    pub chosen: SourceId,
    pub sources: Vec<SourceId>,
}

/// Pick the widest candidate whose nominal baseline fits the budget; if
/// nothing fits, fall back to the narrowest candidate. Ties prefer the
/// temporal candidate over stereo, then the larger offset.
pub fn select_source(model: &BaselineModel, sched: &CurriculumSchedule) -> Result<SourceSelection> {
    if sched.omega.is_empty() {
        return Err(Error::config("empty curriculum candidate pool"));
    }
    let feasible: Vec<SourceId> =
        sched.omega.iter().copied().filter(|&s| model.baseline(s) <= sched.tau).collect();
    let chosen = if feasible.is_empty() {
        pick(model, &sched.omega, false)
    } else {
        pick(model, &feasible, true)
    };
    Ok(SourceSelection { chosen, sources: vec![chosen] })
}

fn pick(model: &BaselineModel, pool: &[SourceId], largest: bool) -> SourceId {
    let mut best = pool[0];
    let mut best_g = model.baseline(best);
    for &cand in &pool[1..] {
        let g = model.baseline(cand);
        let better = if largest { g > best_g } else { g < best_g };
        let tie = g == best_g && prefer_on_tie(cand, best);
        if better || tie {
            best = cand;
            best_g = g;
        }
    }
    best
}

/// Tie order: temporal beats stereo; among temporal, larger offset wins.
fn prefer_on_tie(cand: SourceId, incumbent: SourceId) -> bool {
    match (cand, incumbent) {
        (SourceId::Offset(_), SourceId::Stereo) => true,
        (SourceId::Offset(a), SourceId::Offset(b)) => a.abs() > b.abs(),
        _ => false,
    }
}

/// Relative offsets that actually exist around the target, inclusive, plus
/// stereo availability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetWindow {
    pub min_offset: i32,
    pub max_offset: i32,
    pub stereo: bool,
}

impl OffsetWindow {
    pub fn contains(&self, source: SourceId) -> bool {
        match source {
            SourceId::Offset(k) => k != 0 && k >= self.min_offset && k <= self.max_offset,
            SourceId::Stereo => self.stereo,
        }
    }
}

/// Expand the chosen candidate into the reconstruction source set.
///
/// Without tri-aggregation the pair is mirrored: {+k, -k} (stereo stays
/// alone). With it, stereo stays alone; k = 1 adds the mirror and stereo;
/// k = 2 staggers one step on both sides and keeps stereo; k >= 3 staggers
/// two steps on both sides and drops stereo. Sources falling outside the
/// window are dropped, never clamped.
pub fn expand_sources(
    selection: &SourceSelection,
    tri_min: bool,
    window: &OffsetWindow,
) -> Result<SourceSelection> {
    let raw: Vec<SourceId> = match (selection.chosen, tri_min) {
        (SourceId::Stereo, _) => vec![SourceId::Stereo],
        (SourceId::Offset(k), false) => {
            vec![SourceId::Offset(k), SourceId::Offset(-k)]
        }
        (SourceId::Offset(k), true) => {
            let ka = k.abs();
            match ka {
                0 => return Err(Error::config("chosen source cannot be the target itself")),
                1 => vec![SourceId::Offset(k), SourceId::Offset(-k), SourceId::Stereo],
                2 => {
                    let s = k.signum();
                    vec![
                        SourceId::Offset(k),
                        SourceId::Offset(k - s),
                        SourceId::Offset(-k),
                        SourceId::Offset(-k + s),
                        SourceId::Stereo,
                    ]
                }
                _ => {
                    let s = k.signum();
                    vec![
                        SourceId::Offset(k),
                        SourceId::Offset(k - s),
                        SourceId::Offset(k - 2 * s),
                        SourceId::Offset(-k),
                        SourceId::Offset(-k + s),
                        SourceId::Offset(-k + 2 * s),
                    ]
                }
            }
        }
    };
    let sources: Vec<SourceId> = raw.into_iter().filter(|s| window.contains(*s)).collect();
    if sources.is_empty() {
        return Err(Error::data(format!(
            "no sources left after clipping {} to [{}, {}]",
            selection.chosen, window.min_offset, window.max_offset
        )));
    }
    Ok(SourceSelection { chosen: selection.chosen, sources })
}
