//! Forward and backward evaluation of the training objective on a stack of
//! per-scale log-depth grids.

use crate::curriculum::SourceId;
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::{synthesize, Reconstruction, RigidTransform};
use crate::grid::{upsample_bilinear, upsample_bilinear_adjoint, Grid};
use crate::loss::{
    automask, min_aggregate, photometric_backward, photometric_error,
    photometric_error_with_ctx, smoothness_backward, total_loss, ErrorMap, LossConfig,
    PhotometricCtx,
};
use crate::pose::error_induced_pose;
use crate::world::FrameWindow;
use nalgebra::Vector3;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// One reconstruction source: the frame to sample, the pose to warp with,
/// and whether the pose is an error-induced variant (shrunken translation,
/// no pose gradients).
#[derive(Debug, Clone)]
pub struct Candidate {
    pub source: SourceId,
    pub pose: RigidTransform,
    pub error_induced: bool,
}

/// Expand per-source poses into the candidate list. Standard candidates come
/// first so an error-induced duplicate (alpha = 1) never wins the strict
/// per-pixel minimum and the objective stays bit-identical to the plain
/// list. Error variants exist for monocular sources only; the stereo rig
/// pose carries no estimation error to shrink.
pub fn build_candidates(
    poses: &BTreeMap<SourceId, RigidTransform>,
    error_alpha: Option<f64>,
) -> Result<Vec<Candidate>> {
    if poses.is_empty() {
        return Err(Error::config("candidate list needs at least one source pose"));
    }
    let mut out = Vec::with_capacity(poses.len() * 2);
    for (&source, pose) in poses {
        out.push(Candidate { source, pose: *pose, error_induced: false });
    }
    if let Some(alpha) = error_alpha {
        for (&source, pose) in poses {
            if source == SourceId::Stereo {
                continue;
            }
            out.push(Candidate { source, pose: error_induced_pose(pose, alpha)?, error_induced: true });
        }
    }
    Ok(out)
}

/// One objective evaluation, optionally with gradients.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Mean over scales of the masked photometric error plus weighted
    /// smoothness.
    pub loss: f64,
    pub per_scale: Vec<f64>,
    /// Gradient per evaluated log-depth grid; empty without gradients.
    pub grads: Vec<Grid>,
    /// Accumulated (translation, left rotation) gradients per standard
    /// source. Error-induced candidates contribute nothing here.
    pub pose_grads: BTreeMap<SourceId, (Vector3<f64>, Vector3<f64>)>,
    /// Fraction of full-resolution pixels the stationarity mask keeps.
    pub automask_fraction: f64,
}

/// Evaluate the objective at the given log-depth grids. Each grid is
/// exponentiated, upsampled to full resolution, warped against every
/// candidate, min-aggregated and masked; the per-scale losses are averaged.
///
/// The backward pass routes each kept pixel's weight to the winning
/// candidate, pulls it through the photometric error and the bilinear warp
/// onto depth, adds the smoothness gradient and pushes the sum through the
/// upsampling and the exponential back onto the log grid. Candidates are
/// processed concurrently but reduced in list order, so results do not
/// depend on thread count.
pub fn evaluate(
    window: &FrameWindow,
    candidates: &[Candidate],
    log_depth: &[Grid],
    loss_cfg: &LossConfig,
    compute_grads: bool,
) -> Result<Evaluation> {
    if candidates.is_empty() {
        return Err(Error::config("objective needs at least one reconstruction source"));
    }
    if log_depth.is_empty() {
        return Err(Error::config("objective needs at least one depth scale"));
    }
    let target = window.target().clone();
    let k = window.intrinsics;
    let (w, h) = (k.width, k.height);
    let n = w * h;
    let n_scales = log_depth.len() as f64;

    // Raw-source errors for the stationarity mask; depth-independent.
    let all_true = vec![true; n];
    let source_errors: Vec<ErrorMap> = candidates
        .iter()
        .filter(|c| !c.error_induced)
        .map(|c| {
            let src = window.source_frame(c.source)?;
            photometric_error(&target.image, &src.image, &all_true, loss_cfg)
        })
        .collect::<Result<_>>()?;

    let mut per_scale = Vec::with_capacity(log_depth.len());
    let mut grads = Vec::with_capacity(if compute_grads { log_depth.len() } else { 0 });
    let mut pose_grads: BTreeMap<SourceId, (Vector3<f64>, Vector3<f64>)> = BTreeMap::new();
    let mut automask_fraction = 0.0;

    for (s, log_grid) in log_depth.iter().enumerate() {
        let coarse = log_grid.map(f64::exp);
        let full = upsample_bilinear(&coarse, w, h);
        let depth = DepthMap::from_grid(full);

        let recons: Vec<(Reconstruction, ErrorMap, PhotometricCtx)> = candidates
            .par_iter()
            .map(|c| {
                let src = window.source_frame(c.source)?;
                let recon = synthesize(&src.image, &depth, &k, &c.pose)?;
                let (err, ctx) =
                    photometric_error_with_ctx(&target.image, &recon.image, &recon.mask, loss_cfg)?;
                Ok((recon, err, ctx))
            })
            .collect::<Result<_>>()?;

        let keep = if loss_cfg.automask {
            let standard: Vec<ErrorMap> = candidates
                .iter()
                .zip(&recons)
                .filter(|(c, _)| !c.error_induced)
                .map(|(_, r)| r.1.clone())
                .collect();
            automask(&standard, &source_errors)?
        } else {
            all_true.clone()
        };
        if s == 0 {
            automask_fraction = keep.iter().filter(|&&b| b).count() as f64 / n as f64;
        }

        let maps: Vec<ErrorMap> = recons.iter().map(|r| r.1.clone()).collect();
        let (agg, winners) = min_aggregate(&maps)?;
        per_scale.push(total_loss(&agg, &keep, &depth, &target.image, loss_cfg)?);

        if !compute_grads {
            continue;
        }

        // Each kept pixel enters the masked mean with weight 1/count, and
        // the scale average divides once more.
        let count = keep.iter().zip(&agg.mask).filter(|(k, m)| **k && **m).count();
        let g_unit = 1.0 / (count as f64 * n_scales);
        let mut g_pe: Vec<Option<Grid>> = vec![None; candidates.len()];
        for i in 0..n {
            if !(keep[i] && agg.mask[i]) {
                continue;
            }
            if let Some(win) = winners[i] {
                g_pe[win].get_or_insert_with(|| Grid::new(w, h, 0.0)).data[i] = g_unit;
            }
        }

        let mut g_depth =
            smoothness_backward(&depth, &target.image, loss_cfg.smoothness_lambda / n_scales)?;

        type PoseGrad = (Vector3<f64>, Vector3<f64>);
        let contribs: Vec<Option<(Grid, Option<PoseGrad>)>> = candidates
            .par_iter()
            .enumerate()
            .map(|(ci, c)| {
                let Some(gp) = &g_pe[ci] else { return None };
                let (recon, _, ctx) = &recons[ci];
                let g_recon = photometric_backward(ctx, &target.image, &recon.image, gp);
                let mut gd = Grid::new(w, h, 0.0);
                for i in 0..n {
                    gd.data[i] = (0..g_recon.len())
                        .map(|ch| g_recon[ch].data[i] * recon.dvalue_dd(ch, i))
                        .sum();
                }
                let pose = if c.error_induced {
                    None
                } else {
                    Some(pose_gradient(recon, &g_recon, &k, &c.pose))
                };
                Some((gd, pose))
            })
            .collect();

        for (ci, contrib) in contribs.into_iter().enumerate() {
            let Some((gd, pose)) = contrib else { continue };
            for i in 0..n {
                g_depth.data[i] += gd.data[i];
            }
            if let Some((g_t, g_r)) = pose {
                let e = pose_grads
                    .entry(candidates[ci].source)
                    .or_insert((Vector3::zeros(), Vector3::zeros()));
                e.0 += g_t;
                e.1 += g_r;
            }
        }

        let g_coarse = upsample_bilinear_adjoint(&g_depth, coarse.width, coarse.height);
        let mut g_log = Grid::new(coarse.width, coarse.height, 0.0);
        for i in 0..g_log.data.len() {
            g_log.data[i] = g_coarse.data[i] * coarse.data[i];
        }
        grads.push(g_log);
    }

    let loss = per_scale.iter().sum::<f64>() / n_scales;
    if !loss.is_finite() {
        return Err(Error::numeric(format!("non-finite objective {loss}")));
    }
    Ok(Evaluation { loss, per_scale, grads, pose_grads, automask_fraction })
}

/// Pull the reconstruction-value gradient back onto the pose: translation
/// gets the per-pixel point gradient, the left rotation increment gets the
/// rotated point crossed with it.
fn pose_gradient(
    recon: &Reconstruction,
    g_recon: &[Grid],
    k: &crate::geometry::Intrinsics,
    pose: &RigidTransform,
) -> (Vector3<f64>, Vector3<f64>) {
    let mut g_t = Vector3::zeros();
    let mut g_r = Vector3::zeros();
    let n = recon.proj.u.data.len();
    for i in 0..n {
        if !recon.mask[i] {
            continue;
        }
        let mut gu = 0.0;
        let mut gv = 0.0;
        for (ch, g_ch) in g_recon.iter().enumerate() {
            gu += g_ch.data[i] * recon.grad_u[ch].data[i];
            gv += g_ch.data[i] * recon.grad_v[ch].data[i];
        }
        if gu == 0.0 && gv == 0.0 {
            continue;
        }
        let px = recon.proj.x_cam[0].data[i];
        let py = recon.proj.x_cam[1].data[i];
        let pz = recon.proj.x_cam[2].data[i];
        let g_p = Vector3::new(
            gu * k.fx / pz,
            gv * k.fy / pz,
            -(gu * k.fx * px + gv * k.fy * py) / (pz * pz),
        );
        g_t += g_p;
        g_r += (Vector3::new(px, py, pz) - pose.translation).cross(&g_p);
    }
    (g_t, g_r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Intrinsics;
    use crate::optim::DepthState;
    use crate::pose::{poses_for_sources, PoseEstimator, PosePolicy};
    use crate::world::{Layout, Scene, SceneSpec};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Plane at depth 1 with dyadic camera steps: every warp lands exactly
    /// on source pixel centers and reconstructions reproduce the target bit
    /// for bit.
    fn pixel_aligned_scene() -> Scene {
        let spec = SceneSpec {
            layout: Layout::TexturedPlane { depth: 1.0 },
            velocity: Vector3::new(1.0 / 128.0, 0.0, 0.0),
            stereo_offset: 1.0 / 128.0,
            intrinsics: Intrinsics::new(128.0, 128.0, 48.0, 32.0, 96, 64).unwrap(),
            ..SceneSpec::default()
        };
        Scene::render(spec).unwrap()
    }

    fn small_scene() -> Scene {
        let spec = SceneSpec {
            intrinsics: Intrinsics::new(60.0, 60.0, 24.0, 16.0, 48, 32).unwrap(),
            ..SceneSpec::default()
        };
        Scene::render(spec).unwrap()
    }

    fn tri_sources() -> Vec<SourceId> {
        vec![SourceId::Offset(1), SourceId::Offset(-1), SourceId::Stereo]
    }

    fn oracle_poses(
        window: &FrameWindow,
        sources: &[SourceId],
    ) -> BTreeMap<SourceId, RigidTransform> {
        let trajectory: Vec<RigidTransform> =
            window.frames.values().map(|f| f.world_from_camera).collect();
        poses_for_sources(
            &mut PoseEstimator::oracle(),
            &PosePolicy::default(),
            sources,
            window.target_index,
            &trajectory,
            &window.stereo_relative(),
        )
        .unwrap()
    }

    fn scaled_state(window: &FrameWindow, factor: f64, scales: usize) -> DepthState {
        let bumped = DepthMap::from_grid(window.target().depth.values.map(|d| d * factor));
        DepthState::from_depth(&bumped, scales).unwrap()
    }

    fn norm(g: &Grid) -> f64 {
        g.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn exact_correspondence_zeroes_loss_and_gradient() {
        let scene = pixel_aligned_scene();
        let window = scene.window(scene.spec.center()).unwrap();
        let poses = oracle_poses(&window, &tri_sources());
        let candidates = build_candidates(&poses, None).unwrap();
        let cfg = LossConfig::default();

        let gt = scaled_state(&window, 1.0, 1);
        let at_gt = evaluate(&window, &candidates, &gt.log_depth, &cfg, true).unwrap();
        assert_eq!(at_gt.loss, 0.0);

        let off = scaled_state(&window, 1.5, 1);
        let at_off = evaluate(&window, &candidates, &off.log_depth, &cfg, true).unwrap();
        assert!(at_off.loss > 1e-6, "perturbed loss {}", at_off.loss);
        assert!(
            norm(&at_gt.grads[0]) < 1e-3 * norm(&at_off.grads[0]),
            "gradient norms {} vs {}",
            norm(&at_gt.grads[0]),
            norm(&at_off.grads[0])
        );
    }

    #[test]
    fn alpha_one_error_branch_is_bit_identical() {
        let scene = small_scene();
        let window = scene.window(scene.spec.center()).unwrap();
        let poses = oracle_poses(&window, &tri_sources());
        let plain = build_candidates(&poses, None).unwrap();
        let degenerate = build_candidates(&poses, Some(1.0)).unwrap();
        assert_eq!(degenerate.len(), plain.len() + 2);

        let state = scaled_state(&window, 1.3, 2);
        let cfg = LossConfig::default();
        let a = evaluate(&window, &plain, &state.log_depth, &cfg, true).unwrap();
        let b = evaluate(&window, &degenerate, &state.log_depth, &cfg, true).unwrap();
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        for (ga, gb) in a.grads.iter().zip(&b.grads) {
            assert_eq!(ga.data, gb.data);
        }
        assert_eq!(a.pose_grads, b.pose_grads);
    }

    #[test]
    fn loss_ignores_candidate_order() {
        let scene = small_scene();
        let window = scene.window(scene.spec.center()).unwrap();
        let poses = oracle_poses(&window, &tri_sources());
        let candidates = build_candidates(&poses, Some(5.5)).unwrap();
        let state = scaled_state(&window, 0.8, 1);
        let cfg = LossConfig::default();
        let base = evaluate(&window, &candidates, &state.log_depth, &cfg, false).unwrap().loss;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut shuffled = candidates.clone();
        for _ in 0..5 {
            shuffled.shuffle(&mut rng);
            let loss =
                evaluate(&window, &shuffled, &state.log_depth, &cfg, false).unwrap().loss;
            assert_eq!(loss.to_bits(), base.to_bits());
        }
    }

    #[test]
    fn error_variants_shrink_translation_and_skip_stereo() {
        let scene = small_scene();
        let window = scene.window(scene.spec.center()).unwrap();
        let poses = oracle_poses(&window, &tri_sources());
        let candidates = build_candidates(&poses, Some(5.5)).unwrap();
        assert_eq!(candidates.len(), 5);
        assert!(candidates[..3].iter().all(|c| !c.error_induced));
        for variant in &candidates[3..] {
            assert!(variant.error_induced);
            assert_ne!(variant.source, SourceId::Stereo);
            let base = candidates[..3].iter().find(|c| c.source == variant.source).unwrap();
            assert_eq!(variant.pose.rotation, base.pose.rotation);
            assert_eq!(variant.pose.translation, base.pose.translation / 5.5);
        }
    }

    #[test]
    fn disabling_automask_keeps_every_pixel() {
        let scene = small_scene();
        let window = scene.window(scene.spec.center()).unwrap();
        let poses = oracle_poses(&window, &tri_sources());
        let candidates = build_candidates(&poses, None).unwrap();
        let state = scaled_state(&window, 1.2, 1);
        let cfg = LossConfig { automask: false, ..LossConfig::default() };
        let eval = evaluate(&window, &candidates, &state.log_depth, &cfg, false).unwrap();
        assert_eq!(eval.automask_fraction, 1.0);
    }

    #[test]
    fn fully_occluded_projection_is_a_numeric_error() {
        let scene = small_scene();
        let window = scene.window(scene.spec.center()).unwrap();
        let behind = Candidate {
            source: SourceId::Offset(1),
            pose: RigidTransform::from_translation(Vector3::new(0.0, 0.0, -100.0)),
            error_induced: false,
        };
        let state = scaled_state(&window, 1.0, 1);
        let err = evaluate(&window, &[behind], &state.log_depth, &LossConfig::default(), false);
        assert!(matches!(err, Err(Error::Numeric(_))));
    }

    #[test]
    fn empty_inputs_are_config_errors() {
        let scene = small_scene();
        let window = scene.window(scene.spec.center()).unwrap();
        let poses = oracle_poses(&window, &tri_sources());
        let candidates = build_candidates(&poses, None).unwrap();
        let state = scaled_state(&window, 1.0, 1);
        let cfg = LossConfig::default();
        assert!(matches!(
            evaluate(&window, &[], &state.log_depth, &cfg, false),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            evaluate(&window, &candidates, &[], &cfg, false),
            Err(Error::Config(_))
        ));
        assert!(matches!(build_candidates(&BTreeMap::new(), None), Err(Error::Config(_))));
    }
}
