//! Edge-aware first-order smoothness on mean-normalized inverse depth.

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::image::ImageBuffer;

/// Mean of `|grad d*| * exp(-|grad I|)` over horizontal plus vertical
/// forward differences, where `d*` is inverse depth divided by its mean.
/// Image gradients are channel-averaged absolute differences.
pub fn smoothness_loss(depth: &DepthMap, image: &ImageBuffer) -> Result<f64> {
    let (dstar, _) = normalized_inverse(depth)?;
    let (w, h) = (depth.width(), depth.height());
    if image.width != w || image.height != h {
        return Err(Error::config("smoothness image does not match depth shape"));
    }
    let mut acc_x = 0.0;
    let mut n_x = 0usize;
    let mut acc_y = 0.0;
    let mut n_y = 0usize;
    for v in 0..h {
        for u in 0..w {
            if !depth.is_valid(u, v) {
                continue;
            }
            if u + 1 < w && depth.is_valid(u + 1, v) {
                let gd = (dstar.at(u + 1, v) - dstar.at(u, v)).abs();
                acc_x += gd * (-image_grad(image, u, v, u + 1, v)).exp();
                n_x += 1;
            }
            if v + 1 < h && depth.is_valid(u, v + 1) {
                let gd = (dstar.at(u, v + 1) - dstar.at(u, v)).abs();
                acc_y += gd * (-image_grad(image, u, v, u, v + 1)).exp();
                n_y += 1;
            }
        }
    }
    let mx = if n_x > 0 { acc_x / n_x as f64 } else { 0.0 };
    let my = if n_y > 0 { acc_y / n_y as f64 } else { 0.0 };
    Ok(mx + my)
}

/// Gradient of `g * smoothness_loss` with respect to depth, including the
/// coupling through the inverse-depth mean.
pub fn smoothness_backward(depth: &DepthMap, image: &ImageBuffer, g: f64) -> Result<Grid> {
    let (dstar, mean_inv) = normalized_inverse(depth)?;
    let (w, h) = (depth.width(), depth.height());
    let mut g_dstar = Grid::new(w, h, 0.0);
    let mut n_x = 0usize;
    let mut n_y = 0usize;
    for v in 0..h {
        for u in 0..w {
            if !depth.is_valid(u, v) {
                continue;
            }
            if u + 1 < w && depth.is_valid(u + 1, v) {
                n_x += 1;
            }
            if v + 1 < h && depth.is_valid(u, v + 1) {
                n_y += 1;
            }
        }
    }
    let wx = if n_x > 0 { 1.0 / n_x as f64 } else { 0.0 };
    let wy = if n_y > 0 { 1.0 / n_y as f64 } else { 0.0 };
    for v in 0..h {
        for u in 0..w {
            if !depth.is_valid(u, v) {
                continue;
            }
            if u + 1 < w && depth.is_valid(u + 1, v) {
                let diff = dstar.at(u + 1, v) - dstar.at(u, v);
                let s = sign(diff) * wx * (-image_grad(image, u, v, u + 1, v)).exp();
                *g_dstar.at_mut(u + 1, v) += s;
                *g_dstar.at_mut(u, v) -= s;
            }
            if v + 1 < h && depth.is_valid(u, v + 1) {
                let diff = dstar.at(u, v + 1) - dstar.at(u, v);
                let s = sign(diff) * wy * (-image_grad(image, u, v, u, v + 1)).exp();
                *g_dstar.at_mut(u, v + 1) += s;
                *g_dstar.at_mut(u, v) -= s;
            }
        }
    }
    // Chain through d* = r / mean(r), then r = 1/d. The mean couples every
    // valid pixel: dL/dr_i = (dL/dd*_i - mean_j(dL/dd*_j d*_j)) / mean(r).
    let n_valid = depth.valid.iter().filter(|&&b| b).count();
    let mut dot = 0.0;
    for i in 0..w * h {
        if depth.valid[i] {
            dot += g_dstar.data[i] * dstar.data[i];
        }
    }
    dot /= n_valid as f64;
    let mut out = Grid::new(w, h, 0.0);
    for i in 0..w * h {
        if !depth.valid[i] {
            continue;
        }
        let g_r = (g_dstar.data[i] - dot) / mean_inv;
        let d = depth.values.data[i];
        out.data[i] = g * g_r * (-1.0 / (d * d));
    }
    Ok(out)
}

fn normalized_inverse(depth: &DepthMap) -> Result<(Grid, f64)> {
    let (w, h) = (depth.width(), depth.height());
    let mut inv = Grid::new(w, h, 0.0);
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..w * h {
        if depth.valid[i] {
            let r = 1.0 / depth.values.data[i];
            inv.data[i] = r;
            sum += r;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::data("smoothness on a depth map with no valid pixels"));
    }
    let mean = sum / count as f64;
    if !(mean.is_finite() && mean > 0.0) {
        return Err(Error::numeric(format!("degenerate inverse-depth mean {mean}")));
    }
    for x in inv.data.iter_mut() {
        *x /= mean;
    }
    Ok((inv, mean))
}

#[inline]
fn image_grad(image: &ImageBuffer, u0: usize, v0: usize, u1: usize, v1: usize) -> f64 {
    let mut acc = 0.0;
    for p in &image.planes {
        acc += (p.at(u1, v1) - p.at(u0, v0)).abs();
    }
    acc / image.planes.len() as f64
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flat_depth_has_zero_smoothness() {
        let depth = DepthMap::constant(6, 5, 4.0);
        let img = ImageBuffer::new(6, 5, 1, 0.5).unwrap();
        assert_eq!(smoothness_loss(&depth, &img).unwrap(), 0.0);
    }

    #[test]
    fn depth_step_under_flat_image_matches_hand_value() {
        // Two columns, depths 1 and 2 in each row. Inverse depths 1 and 0.5,
        // mean 0.75, normalized 4/3 and 2/3: each horizontal pair
        // contributes |4/3 - 2/3| = 2/3; vertical pairs contribute 0.
        let values = Grid::from_vec(2, 2, vec![1.0, 2.0, 1.0, 2.0]).unwrap();
        let depth = DepthMap::from_grid(values);
        let img = ImageBuffer::new(2, 2, 1, 0.4).unwrap();
        let loss = smoothness_loss(&depth, &img).unwrap();
        assert!((loss - 2.0 / 3.0).abs() < 1e-12, "loss={loss}");
        assert!(loss > 0.0);
    }

    #[test]
    fn image_edges_damp_the_penalty() {
        let values = Grid::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        let depth = DepthMap::from_grid(values);
        let flat = ImageBuffer::new(2, 1, 1, 0.5).unwrap();
        let mut edged = ImageBuffer::new(2, 1, 1, 0.0).unwrap();
        edged.planes[0].data[1] = 1.0;
        let l_flat = smoothness_loss(&depth, &flat).unwrap();
        let l_edge = smoothness_loss(&depth, &edged).unwrap();
        assert!(l_edge < l_flat);
        assert!((l_edge - l_flat * (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn scaling_depth_leaves_the_loss_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let values = Grid::from_vec(7, 5, (0..35).map(|_| rng.gen_range(1.0..9.0)).collect()).unwrap();
        let img = {
            let mut im = ImageBuffer::new(7, 5, 1, 0.0).unwrap();
            for x in im.planes[0].data.iter_mut() {
                *x = rng.gen();
            }
            im
        };
        let base = smoothness_loss(&DepthMap::from_grid(values.clone()), &img).unwrap();
        let scaled = smoothness_loss(&DepthMap::from_grid(values.map(|d| d * 3.7)), &img).unwrap();
        assert!((base - scaled).abs() < 1e-12);
    }

    #[test]
    fn all_invalid_depth_is_an_error() {
        let g = Grid::new(3, 3, -1.0);
        let depth = DepthMap::from_grid(g);
        let img = ImageBuffer::new(3, 3, 1, 0.5).unwrap();
        assert!(smoothness_loss(&depth, &img).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut values = Grid::from_vec(6, 5, (0..30).map(|_| rng.gen_range(2.0..8.0)).collect()).unwrap();
        let img = {
            let mut im = ImageBuffer::new(6, 5, 1, 0.0).unwrap();
            for x in im.planes[0].data.iter_mut() {
                *x = rng.gen();
            }
            im
        };
        let analytic = smoothness_backward(&DepthMap::from_grid(values.clone()), &img, 1.0).unwrap();
        let h = 1e-6;
        for _ in 0..40 {
            let i = rng.gen_range(0..30);
            let orig = values.data[i];
            values.data[i] = orig + h;
            let fp = smoothness_loss(&DepthMap::from_grid(values.clone()), &img).unwrap();
            values.data[i] = orig - h;
            let fm = smoothness_loss(&DepthMap::from_grid(values.clone()), &img).unwrap();
            values.data[i] = orig;
            let fd = (fp - fm) / (2.0 * h);
            let a = analytic.data[i];
            assert!((fd - a).abs() < 1e-6 * a.abs().max(1e-3), "pixel {i}: analytic {a}, fd {fd}");
        }
    }
}
