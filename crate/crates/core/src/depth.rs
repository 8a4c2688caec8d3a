//! Per-pixel depth maps with validity masks.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// H x W depth grid. `valid[i]` marks pixels that carry a usable depth;
/// invalid entries hold 0 by convention in the stored values.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub values: Grid,
    pub valid: Vec<bool>,
}

impl DepthMap {
    pub fn constant(width: usize, height: usize, depth: f64) -> Self {
        DepthMap { values: Grid::new(width, height, depth), valid: vec![true; width * height] }
    }

    pub fn from_grid(values: Grid) -> Self {
        let valid = values.data.iter().map(|&d| d.is_finite() && d > 0.0).collect();
        DepthMap { values, valid }
    }

    pub fn width(&self) -> usize {
        self.values.width
    }

    pub fn height(&self) -> usize {
        self.values.height
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.values.at(u, v)
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.valid[v * self.values.width + u]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    /// Median over valid entries. Errors when nothing is valid.
    pub fn median(&self) -> Result<f64> {
        let mut vals: Vec<f64> = self
            .values
            .data
            .iter()
            .zip(self.valid.iter())
            .filter_map(|(&d, &ok)| if ok { Some(d) } else { None })
            .collect();
        if vals.is_empty() {
            return Err(Error::data("depth map has no valid pixels"));
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = vals.len();
        Ok(if n % 2 == 1 { vals[n / 2] } else { 0.5 * (vals[n / 2 - 1] + vals[n / 2]) })
    }

    /// Positive and finite everywhere it is valid.
    pub fn validate(&self) -> Result<()> {
        if self.valid.len() != self.values.data.len() {
            return Err(Error::config("depth mask length mismatch"));
        }
        for (&d, &ok) in self.values.data.iter().zip(self.valid.iter()) {
            if ok && (!d.is_finite() || d <= 0.0) {
                return Err(Error::data(format!("invalid depth value {d} marked valid")));
            }
        }
        Ok(())
    }
}
