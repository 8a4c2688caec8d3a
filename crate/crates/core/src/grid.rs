//! Dense row-major f64 grids plus the resampling helpers shared by the
//! loss and optimizer modules.

use crate::error::{Error, Result};

/// Row-major H x W scalar grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, fill: f64) -> Self {
        Grid { width, height, data: vec![fill; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::config(format!(
                "grid data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Grid { width, height, data })
    }

    #[inline]
    pub fn idx(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn at_mut(&mut self, u: usize, v: usize) -> &mut f64 {
        &mut self.data[v * self.width + u]
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Bilinear upsampling to `(out_w, out_h)` with half-pixel alignment: output
/// pixel centers map to `(i + 0.5) * scale - 0.5` in source coordinates,
/// clamped at the borders.
pub fn upsample_bilinear(src: &Grid, out_w: usize, out_h: usize) -> Grid {
    let mut out = Grid::new(out_w, out_h, 0.0);
    let sx = src.width as f64 / out_w as f64;
    let sy = src.height as f64 / out_h as f64;
    for v in 0..out_h {
        let fy = ((v as f64 + 0.5) * sy - 0.5).clamp(0.0, (src.height - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(src.height - 1);
        let by = fy - y0 as f64;
        for u in 0..out_w {
            let fx = ((u as f64 + 0.5) * sx - 0.5).clamp(0.0, (src.width - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(src.width - 1);
            let bx = fx - x0 as f64;
            let val = (1.0 - by) * ((1.0 - bx) * src.at(x0, y0) + bx * src.at(x1, y0))
                + by * ((1.0 - bx) * src.at(x0, y1) + bx * src.at(x1, y1));
            *out.at_mut(u, v) = val;
        }
    }
    out
}

/// Adjoint of `upsample_bilinear`: scatters a full-resolution gradient back
/// onto the coarse grid with the same interpolation weights.
pub fn upsample_bilinear_adjoint(grad: &Grid, src_w: usize, src_h: usize) -> Grid {
    let mut out = Grid::new(src_w, src_h, 0.0);
    let sx = src_w as f64 / grad.width as f64;
    let sy = src_h as f64 / grad.height as f64;
    for v in 0..grad.height {
        let fy = ((v as f64 + 0.5) * sy - 0.5).clamp(0.0, (src_h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(src_h - 1);
        let by = fy - y0 as f64;
        for u in 0..grad.width {
            let fx = ((u as f64 + 0.5) * sx - 0.5).clamp(0.0, (src_w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(src_w - 1);
            let bx = fx - x0 as f64;
            let g = grad.at(u, v);
            *out.at_mut(x0, y0) += (1.0 - by) * (1.0 - bx) * g;
            *out.at_mut(x1, y0) += (1.0 - by) * bx * g;
            *out.at_mut(x0, y1) += by * (1.0 - bx) * g;
            *out.at_mut(x1, y1) += by * bx * g;
        }
    }
    out
}

/// Mirror index into `[0, n)` without repeating the border sample
/// (`-1 -> 1`, `n -> n - 2`). Degenerates to clamping for n == 1.
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// 3x3 box mean with mirrored borders.
pub fn box3_reflect(src: &Grid) -> Grid {
    let (w, h) = (src.width, src.height);
    let mut out = Grid::new(w, h, 0.0);
    for v in 0..h {
        for u in 0..w {
            let mut acc = 0.0;
            for dv in -1..=1isize {
                let vv = reflect(v as isize + dv, h);
                for du in -1..=1isize {
                    let uu = reflect(u as isize + du, w);
                    acc += src.at(uu, vv);
                }
            }
            *out.at_mut(u, v) = acc / 9.0;
        }
    }
    out
}

/// Adjoint of `box3_reflect`: scatters each entry back over its taps.
pub fn box3_reflect_adjoint(src: &Grid) -> Grid {
    let (w, h) = (src.width, src.height);
    let mut out = Grid::new(w, h, 0.0);
    for v in 0..h {
        for u in 0..w {
            let g = src.at(u, v) / 9.0;
            for dv in -1..=1isize {
                let vv = reflect(v as isize + dv, h);
                for du in -1..=1isize {
                    let uu = reflect(u as isize + du, w);
                    *out.at_mut(uu, vv) += g;
                }
            }
        }
    }
    out
}
