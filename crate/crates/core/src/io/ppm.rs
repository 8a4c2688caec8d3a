//! Binary PPM (P6, 8-bit) images. Grayscale buffers are written as equal
//! RGB channels; loads collapse such images back to one channel.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::image::ImageBuffer;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_ppm(image: &ImageBuffer, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P6\n{} {}\n255\n", image.width, image.height)?;
    let mut row = Vec::with_capacity(image.width * 3);
    for y in 0..image.height {
        row.clear();
        for x in 0..image.width {
            for c in 0..3 {
                let ch = if image.channels() == 1 { 0 } else { c };
                row.push(quantize(image.planes[ch].data[y * image.width + x]));
            }
        }
        w.write_all(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_token(r: &mut impl Read) -> Result<String> {
    let mut token = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)?;
        if byte[0] == b'#' {
            // Comment runs to end of line.
            loop {
                r.read_exact(&mut byte)?;
                if byte[0] == b'\n' {
                    break;
                }
            }
            continue;
        }
        if byte[0].is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(byte[0]);
    }
    String::from_utf8(token).map_err(|_| Error::data("PPM header is not ASCII"))
}

pub fn read_ppm(path: &Path) -> Result<ImageBuffer> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_token(&mut r)?;
    if magic != "P6" {
        return Err(Error::data(format!("{}: expected PPM magic 'P6', got '{magic}'", path.display())));
    }
    let width: usize = read_token(&mut r)?.parse().map_err(|_| Error::data("PPM width is not a number"))?;
    let height: usize = read_token(&mut r)?.parse().map_err(|_| Error::data("PPM height is not a number"))?;
    let maxval: u32 = read_token(&mut r)?.parse().map_err(|_| Error::data("PPM maxval is not a number"))?;
    if width == 0 || height == 0 {
        return Err(Error::data("PPM dimensions must be positive"));
    }
    if maxval != 255 {
        return Err(Error::data(format!("only 8-bit PPM supported, maxval {maxval}")));
    }
    let mut raw = vec![0u8; width * height * 3];
    r.read_exact(&mut raw)?;
    let mut planes = vec![Grid::new(width, height, 0.0); 3];
    let mut gray = true;
    for i in 0..width * height {
        let (r8, g8, b8) = (raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]);
        gray &= r8 == g8 && g8 == b8;
        planes[0].data[i] = r8 as f64 / 255.0;
        planes[1].data[i] = g8 as f64 / 255.0;
        planes[2].data[i] = b8 as f64 / 255.0;
    }
    if gray {
        planes.truncate(1);
    }
    ImageBuffer::from_planes(planes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn grayscale_round_trips_and_collapses() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("g.ppm");
        let mut g = Grid::new(6, 4, 0.0);
        for (i, v) in g.data.iter_mut().enumerate() {
            *v = (i % 7) as f64 / 7.0;
        }
        let img = ImageBuffer::from_planes(vec![g]).unwrap();
        write_ppm(&img, &path).unwrap();
        let back = read_ppm(&path).unwrap();
        assert_eq!(back.channels(), 1);
        for i in 0..24 {
            let q = (img.planes[0].data[i] * 255.0).round() / 255.0;
            assert!((back.planes[0].data[i] - q).abs() < 1e-12);
        }
    }

    #[test]
    fn color_stays_three_channels() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.ppm");
        let mut planes = vec![Grid::new(3, 2, 0.2), Grid::new(3, 2, 0.5), Grid::new(3, 2, 0.9)];
        planes[0].data[0] = 1.0;
        let img = ImageBuffer::from_planes(planes).unwrap();
        write_ppm(&img, &path).unwrap();
        let back = read_ppm(&path).unwrap();
        assert_eq!(back.channels(), 3);
        assert_eq!(back.planes[0].data[0], 1.0);
    }

    #[test]
    fn repeated_writes_are_byte_identical() {
        let dir = tempdir().unwrap();
        let a = dir.path().join("a.ppm");
        let b = dir.path().join("b.ppm");
        let mut g = Grid::new(9, 9, 0.0);
        for (i, v) in g.data.iter_mut().enumerate() {
            *v = ((i * 31) % 83) as f64 / 83.0;
        }
        let img = ImageBuffer::from_planes(vec![g]).unwrap();
        write_ppm(&img, &a).unwrap();
        write_ppm(&img, &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
}
