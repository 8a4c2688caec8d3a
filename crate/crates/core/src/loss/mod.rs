//! Photometric objective: SSIM + L1 error, per-pixel minimum aggregation,
//! stationary-pixel masking and edge-aware smoothness.

mod photometric;
mod smoothness;
pub mod ssim;

pub use photometric::{
    automask, min_aggregate, photometric_backward, photometric_error,
    photometric_error_with_ctx, ErrorMap, PhotometricCtx,
};
pub use smoothness::{smoothness_backward, smoothness_loss};
pub use ssim::{ssim, SSIM_C1, SSIM_C2};

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Weights of the photometric objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// SSIM share of the per-pixel error; the L1 share is its complement.
    pub ssim_weight: f64,
    /// Multiplier of the smoothness term.
    pub smoothness_lambda: f64,
    /// Apply the stationary-pixel mask.
    pub automask: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { ssim_weight: 0.85, smoothness_lambda: 1e-3, automask: true }
    }
}

/// Scalar training loss: masked mean of the aggregated per-pixel error plus
/// the weighted smoothness term. `keep` is the stationary-pixel mask; it is
/// intersected with the error map's own validity.
pub fn total_loss(
    per_pixel: &ErrorMap,
    keep: &[bool],
    depth: &DepthMap,
    image: &ImageBuffer,
    cfg: &LossConfig,
) -> Result<f64> {
    if keep.len() != per_pixel.values.data.len() {
        return Err(Error::config("loss mask length mismatch"));
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 0..keep.len() {
        if keep[i] && per_pixel.mask[i] {
            acc += per_pixel.values.data[i];
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::numeric("no valid pixels left in the photometric loss"));
    }
    let photo = acc / count as f64;
    let smooth = smoothness_loss(depth, image)?;
    let total = photo + cfg.smoothness_lambda * smooth;
    if !total.is_finite() {
        return Err(Error::numeric(format!("non-finite loss {total}")));
    }
    Ok(total)
}
