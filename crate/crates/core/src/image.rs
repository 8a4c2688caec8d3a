//! Multi-channel intensity images.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// H x W x C image with intensities in [0, 1], stored as one row-major
/// plane per channel. C is 1 or 3.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub planes: Vec<Grid>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, fill: f64) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::config(format!("unsupported channel count {channels}")));
        }
        Ok(ImageBuffer {
            width,
            height,
            planes: (0..channels).map(|_| Grid::new(width, height, fill)).collect(),
        })
    }

    pub fn from_planes(planes: Vec<Grid>) -> Result<Self> {
        let n = planes.len();
        if n != 1 && n != 3 {
            return Err(Error::config(format!("unsupported channel count {n}")));
        }
        let (w, h) = (planes[0].width, planes[0].height);
        if planes.iter().any(|p| p.width != w || p.height != h) {
            return Err(Error::config("image planes differ in shape"));
        }
        Ok(ImageBuffer { width: w, height: h, planes })
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize, c: usize) -> f64 {
        self.planes[c].at(u, v)
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.channels() == other.channels()
    }

    /// Mean intensity across channels at one pixel.
    pub fn luminance(&self, u: usize, v: usize) -> f64 {
        let mut acc = 0.0;
        for p in &self.planes {
            acc += p.at(u, v);
        }
        acc / self.planes.len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.planes {
            for &x in &p.data {
                if !x.is_finite() || !(0.0..=1.0).contains(&x) {
                    return Err(Error::data(format!("image intensity {x} outside [0,1]")));
                }
            }
        }
        Ok(())
    }
}
