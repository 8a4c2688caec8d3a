//! PFM float maps: 32-bit little-endian, scale -1.0, rows bottom-up.
//! Invalid depth pixels are stored as 0 and re-invalidated on load.

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::grid::Grid;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

fn read_token(r: &mut impl Read) -> Result<String> {
    let mut token = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)?;
        if byte[0].is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(byte[0]);
    }
    String::from_utf8(token).map_err(|_| Error::data("PFM header is not ASCII"))
}

/// Write one grayscale float plane.
pub fn write_pfm(grid: &Grid, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "Pf\n{} {}\n-1.0\n", grid.width, grid.height)?;
    for y in (0..grid.height).rev() {
        for x in 0..grid.width {
            w.write_all(&(grid.data[y * grid.width + x] as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<Grid> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_token(&mut r)?;
    if magic != "Pf" {
        return Err(Error::data(format!(
            "{}: expected grayscale PFM magic 'Pf', got '{magic}'",
            path.display()
        )));
    }
    let width: usize = read_token(&mut r)?
        .parse()
        .map_err(|_| Error::data("PFM width is not a number"))?;
    let height: usize = read_token(&mut r)?
        .parse()
        .map_err(|_| Error::data("PFM height is not a number"))?;
    let scale: f64 = read_token(&mut r)?
        .parse()
        .map_err(|_| Error::data("PFM scale is not a number"))?;
    if width == 0 || height == 0 {
        return Err(Error::data("PFM dimensions must be positive"));
    }
    if scale >= 0.0 {
        return Err(Error::data("big-endian PFM is not supported"));
    }
    let mut raw = vec![0u8; width * height * 4];
    r.read_exact(&mut raw)?;
    let mut grid = Grid::new(width, height, 0.0);
    for y in 0..height {
        let src_row = height - 1 - y;
        for x in 0..width {
            let o = (src_row * width + x) * 4;
            let bits = [raw[o], raw[o + 1], raw[o + 2], raw[o + 3]];
            grid.data[y * width + x] = f32::from_le_bytes(bits) as f64;
        }
    }
    Ok(grid)
}

/// Depth maps ride on the grayscale plane; invalid pixels become 0.
pub fn write_depth(depth: &DepthMap, path: &Path) -> Result<()> {
    let mut grid = depth.values.clone();
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            if !depth.is_valid(x, y) {
                grid.data[y * depth.width() + x] = 0.0;
            }
        }
    }
    write_pfm(&grid, path)
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    Ok(DepthMap::from_grid(read_pfm(path)?))
}
