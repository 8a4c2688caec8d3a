//! Per-pixel photometric error, minimum aggregation over reconstructions
//! and the stationary-pixel mask.

use super::ssim::{ssim_channel, ssim_channel_backward, SsimChannelCtx};
use super::LossConfig;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::image::ImageBuffer;

/// Per-pixel error values with a validity mask.
#[derive(Debug, Clone)]
pub struct ErrorMap {
    pub values: Grid,
    pub mask: Vec<bool>,
}

impl ErrorMap {
    pub fn width(&self) -> usize {
        self.values.width
    }

    pub fn height(&self) -> usize {
        self.values.height
    }
}

/// Forward state for one (target, reconstruction) error map.
#[derive(Debug, Clone)]
pub struct PhotometricCtx {
    pub ssim: Vec<SsimChannelCtx>,
    /// sign(target - recon) per channel, for the L1 part.
    pub sign: Vec<Grid>,
    pub weight: f64,
    pub channels: usize,
}

/// Weighted SSIM + L1 dissimilarity, computed per channel and averaged:
/// `(w / 2) (1 - SSIM) + (1 - w) |a - b|`.
pub fn photometric_error(
    target: &ImageBuffer,
    recon: &ImageBuffer,
    mask: &[bool],
    cfg: &LossConfig,
) -> Result<ErrorMap> {
    Ok(photometric_error_with_ctx(target, recon, mask, cfg)?.0)
}

pub fn photometric_error_with_ctx(
    target: &ImageBuffer,
    recon: &ImageBuffer,
    mask: &[bool],
    cfg: &LossConfig,
) -> Result<(ErrorMap, PhotometricCtx)> {
    if !target.same_shape(recon) {
        return Err(Error::config("photometric error inputs differ in shape"));
    }
    let n = target.width * target.height;
    if mask.len() != n {
        return Err(Error::config("photometric error mask length mismatch"));
    }
    let w = cfg.ssim_weight;
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::config(format!("ssim weight {w} outside [0,1]")));
    }
    let c = target.channels();
    let mut values = Grid::new(target.width, target.height, 0.0);
    let mut ctx = PhotometricCtx { ssim: Vec::with_capacity(c), sign: Vec::with_capacity(c), weight: w, channels: c };
    for ch in 0..c {
        let sc = ssim_channel(&target.planes[ch], &recon.planes[ch])?;
        let mut sign = Grid::new(target.width, target.height, 0.0);
        for i in 0..n {
            let diff = target.planes[ch].data[i] - recon.planes[ch].data[i];
            sign.data[i] = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            values.data[i] += 0.5 * w * (1.0 - sc.ssim.data[i]) + (1.0 - w) * diff.abs();
        }
        ctx.ssim.push(sc);
        ctx.sign.push(sign);
    }
    let inv_c = 1.0 / c as f64;
    for v in values.data.iter_mut() {
        *v *= inv_c;
    }
    Ok((ErrorMap { values, mask: mask.to_vec() }, ctx))
}

/// Gradient of `sum_q g_pe(q) * pe(q)` with respect to the reconstruction,
/// one grid per channel.
pub fn photometric_backward(
    ctx: &PhotometricCtx,
    target: &ImageBuffer,
    recon: &ImageBuffer,
    g_pe: &Grid,
) -> Vec<Grid> {
    let inv_c = 1.0 / ctx.channels as f64;
    let n = g_pe.data.len();
    let mut out = Vec::with_capacity(ctx.channels);
    for ch in 0..ctx.channels {
        // d pe / d ssim = -w/2 (per channel, averaged over channels).
        let g_ssim = Grid {
            width: g_pe.width,
            height: g_pe.height,
            data: g_pe.data.iter().map(|g| g * inv_c * (-0.5 * ctx.weight)).collect(),
        };
        let mut g = ssim_channel_backward(&ctx.ssim[ch], &target.planes[ch], &recon.planes[ch], &g_ssim);
        // d |a - b| / d b = -sign(a - b).
        for i in 0..n {
            g.data[i] += g_pe.data[i] * inv_c * (1.0 - ctx.weight) * (-ctx.sign[ch].data[i]);
        }
        out.push(g);
    }
    out
}

/// Per-pixel minimum across error maps. A pixel is valid when at least one
/// input is valid there; `winners` records which map supplied the minimum.
pub fn min_aggregate(maps: &[ErrorMap]) -> Result<(ErrorMap, Vec<Option<usize>>)> {
    let first = maps.first().ok_or_else(|| Error::config("min aggregation over an empty list"))?;
    let n = first.values.data.len();
    for m in maps {
        if !m.values.same_shape(&first.values) {
            return Err(Error::config("error maps differ in shape"));
        }
    }
    let mut values = Grid::new(first.width(), first.height(), 0.0);
    let mut mask = vec![false; n];
    let mut winners: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let mut best = f64::INFINITY;
        let mut win = None;
        for (k, m) in maps.iter().enumerate() {
            if m.mask[i] && m.values.data[i] < best {
                best = m.values.data[i];
                win = Some(k);
            }
        }
        if let Some(k) = win {
            values.data[i] = best;
            mask[i] = true;
            winners[i] = Some(k);
        }
    }
    Ok((ErrorMap { values, mask }, winners))
}

/// Stationarity mask: keep pixels where warping beats comparing the raw
/// source against the target, `min_k pe(recon_k) < min_k pe(source_k)`.
pub fn automask(recon_errors: &[ErrorMap], source_errors: &[ErrorMap]) -> Result<Vec<bool>> {
    if recon_errors.is_empty() {
        return Err(Error::config("automask needs at least one reconstruction error"));
    }
    let n = recon_errors[0].values.data.len();
    let mut mask = vec![false; n];
    for i in 0..n {
        let mut best_recon = f64::INFINITY;
        let mut any = false;
        for m in recon_errors {
            if m.mask[i] && m.values.data[i] < best_recon {
                best_recon = m.values.data[i];
                any = true;
            }
        }
        if !any {
            continue;
        }
        let mut best_src = f64::INFINITY;
        let mut any_src = false;
        for m in source_errors {
            if m.mask[i] && m.values.data[i] < best_src {
                best_src = m.values.data[i];
                any_src = true;
            }
        }
        // Without a comparison value the pixel is kept.
        mask[i] = !any_src || best_recon < best_src;
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ImageBuffer {
        let mut img = ImageBuffer::new(w, h, 1, 0.0).unwrap();
        for x in img.planes[0].data.iter_mut() {
            *x = rng.gen();
        }
        img
    }

    #[test]
    fn identical_images_give_zero_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = rand_image(&mut rng, 10, 8);
        let pe = photometric_error(&img, &img, &vec![true; 80], &LossConfig::default()).unwrap();
        for &v in &pe.values.data {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn constant_offset_matches_hand_computation() {
        // Constant images: SSIM has the closed form and the L1 part is the
        // offset itself.
        let (a, b) = (0.25, 0.85);
        let ia = ImageBuffer::new(6, 6, 1, a).unwrap();
        let ib = ImageBuffer::new(6, 6, 1, b).unwrap();
        let cfg = LossConfig::default();
        let pe = photometric_error(&ia, &ib, &vec![true; 36], &cfg).unwrap();
        let ssim = (2.0 * a * b + super::super::ssim::SSIM_C1) / (a * a + b * b + super::super::ssim::SSIM_C1);
        let expected = 0.5 * 0.85 * (1.0 - ssim) + 0.15 * (b - a);
        for &v in &pe.values.data {
            assert!((v - expected).abs() < 1e-12, "got {v}, want {expected}");
        }
    }

    #[test]
    fn error_values_are_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a = rand_image(&mut rng, 9, 5);
            let b = rand_image(&mut rng, 9, 5);
            let pe = photometric_error(&a, &b, &vec![true; 45], &LossConfig::default()).unwrap();
            for &v in &pe.values.data {
                assert!(v >= -1e-12, "negative photometric error {v}");
            }
        }
    }

    fn rand_error_map(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ErrorMap {
        ErrorMap {
            values: Grid::from_vec(w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap(),
            mask: (0..w * h).map(|_| rng.gen_bool(0.9)).collect(),
        }
    }

    #[test]
    fn min_aggregate_never_exceeds_any_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let maps: Vec<ErrorMap> = (0..5).map(|_| rand_error_map(&mut rng, 7, 6)).collect();
        let (agg, winners) = min_aggregate(&maps).unwrap();
        for i in 0..42 {
            if agg.mask[i] {
                let w = winners[i].unwrap();
                assert_eq!(agg.values.data[i], maps[w].values.data[i]);
                for m in &maps {
                    if m.mask[i] {
                        assert!(agg.values.data[i] <= m.values.data[i]);
                    }
                }
            } else {
                assert!(maps.iter().all(|m| !m.mask[i]));
            }
        }
    }

    #[test]
    fn min_aggregate_rejects_empty_input() {
        assert!(min_aggregate(&[]).is_err());
    }

    #[test]
    fn automask_drops_static_pixels() {
        // Source equals target: unwarped error is zero, strict < fails.
        let img = ImageBuffer::new(4, 4, 1, 0.5).unwrap();
        let cfg = LossConfig::default();
        let zero = photometric_error(&img, &img, &vec![true; 16], &cfg).unwrap();
        let mask = automask(&[zero.clone()], &[zero]).unwrap();
        assert!(mask.iter().all(|&m| !m));
    }

    #[test]
    fn automask_keeps_pixels_where_warping_wins() {
        let mk = |v: f64, mask: bool| ErrorMap {
            values: Grid::new(2, 2, v),
            mask: vec![mask; 4],
        };
        let mask = automask(&[mk(0.1, true), mk(0.5, true)], &[mk(0.3, true)]).unwrap();
        assert!(mask.iter().all(|&m| m));
        let mask = automask(&[mk(0.4, true)], &[mk(0.3, true)]).unwrap();
        assert!(mask.iter().all(|&m| !m));
    }
}
