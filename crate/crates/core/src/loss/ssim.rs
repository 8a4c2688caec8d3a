//! Structural similarity over 3x3 mirrored box windows.

use crate::error::{Error, Result};
use crate::grid::{box3_reflect, box3_reflect_adjoint, Grid};
use crate::image::ImageBuffer;

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Forward maps kept around for the reverse pass, one per channel.
#[derive(Debug, Clone)]
pub struct SsimChannelCtx {
    pub mu_x: Grid,
    pub mu_y: Grid,
    pub n1: Grid,
    pub n2: Grid,
    pub d1: Grid,
    pub d2: Grid,
    pub ssim: Grid,
}

/// Per-channel SSIM map of `y` against reference `x`.
pub fn ssim_channel(x: &Grid, y: &Grid) -> Result<SsimChannelCtx> {
    if !x.same_shape(y) {
        return Err(Error::config("ssim inputs differ in shape"));
    }
    let mu_x = box3_reflect(x);
    let mu_y = box3_reflect(y);
    let xx = box3_reflect(&Grid {
        width: x.width,
        height: x.height,
        data: x.data.iter().map(|a| a * a).collect(),
    });
    let yy = box3_reflect(&Grid {
        width: y.width,
        height: y.height,
        data: y.data.iter().map(|a| a * a).collect(),
    });
    let xy = box3_reflect(&Grid {
        width: x.width,
        height: x.height,
        data: x.data.iter().zip(y.data.iter()).map(|(a, b)| a * b).collect(),
    });
    let n = x.data.len();
    let mut ctx = SsimChannelCtx {
        n1: Grid::new(x.width, x.height, 0.0),
        n2: Grid::new(x.width, x.height, 0.0),
        d1: Grid::new(x.width, x.height, 0.0),
        d2: Grid::new(x.width, x.height, 0.0),
        ssim: Grid::new(x.width, x.height, 0.0),
        mu_x,
        mu_y,
    };
    for i in 0..n {
        let mx = ctx.mu_x.data[i];
        let my = ctx.mu_y.data[i];
        let sx = xx.data[i] - mx * mx;
        let sy = yy.data[i] - my * my;
        let sxy = xy.data[i] - mx * my;
        let n1 = 2.0 * mx * my + SSIM_C1;
        let n2 = 2.0 * sxy + SSIM_C2;
        let d1 = mx * mx + my * my + SSIM_C1;
        let d2 = sx + sy + SSIM_C2;
        ctx.n1.data[i] = n1;
        ctx.n2.data[i] = n2;
        ctx.d1.data[i] = d1;
        ctx.d2.data[i] = d2;
        ctx.ssim.data[i] = n1 * n2 / (d1 * d2);
    }
    Ok(ctx)
}

/// Channel-averaged SSIM map. Values lie in [-1, 1].
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<Grid> {
    if !a.same_shape(b) {
        return Err(Error::config("ssim images differ in shape"));
    }
    let mut acc = Grid::new(a.width, a.height, 0.0);
    for c in 0..a.channels() {
        let ctx = ssim_channel(&a.planes[c], &b.planes[c])?;
        for (o, s) in acc.data.iter_mut().zip(ctx.ssim.data.iter()) {
            *o += s;
        }
    }
    let n = a.channels() as f64;
    for o in acc.data.iter_mut() {
        *o /= n;
    }
    Ok(acc)
}

/// Reverse pass: gradient of `sum_q g_ssim(q) * SSIM(q)` with respect to the
/// second input `y`. `x` and `y` are the forward inputs.
pub fn ssim_channel_backward(ctx: &SsimChannelCtx, x: &Grid, y: &Grid, g_ssim: &Grid) -> Grid {
    let n = x.data.len();
    let mut g_mu = Grid::new(x.width, x.height, 0.0);
    let mut g_yy = Grid::new(x.width, x.height, 0.0);
    let mut g_xy = Grid::new(x.width, x.height, 0.0);
    for i in 0..n {
        let g = g_ssim.data[i];
        if g == 0.0 {
            continue;
        }
        let mx = ctx.mu_x.data[i];
        let my = ctx.mu_y.data[i];
        let n1 = ctx.n1.data[i];
        let n2 = ctx.n2.data[i];
        let d1 = ctx.d1.data[i];
        let d2 = ctx.d2.data[i];
        let s = ctx.ssim.data[i];
        let dd = d1 * d2;
        // d ssim / d mu_y collects the direct mu_y terms and the mean
        // corrections inside sigma_y and sigma_xy.
        g_mu.data[i] = g * (2.0 * mx * (n2 - n1) / dd - 2.0 * my * s * (1.0 / d1 - 1.0 / d2));
        // d ssim / d box(y*y) and d ssim / d box(x*y).
        g_yy.data[i] = g * (-s / d2);
        g_xy.data[i] = g * (2.0 * n1 / dd);
    }
    let b_mu = box3_reflect_adjoint(&g_mu);
    let b_yy = box3_reflect_adjoint(&g_yy);
    let b_xy = box3_reflect_adjoint(&g_xy);
    let mut out = Grid::new(x.width, x.height, 0.0);
    for i in 0..n {
        out.data[i] = b_mu.data[i] + 2.0 * y.data[i] * b_yy.data[i] + x.data[i] * b_xy.data[i];
    }
    out
}
