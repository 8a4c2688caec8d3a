//! ASCII PLY point clouds with double-precision x, y, z.

use crate::error::{Error, Result};
use nalgebra::Vector3;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub fn write_ply(points: &[Vector3<f64>], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(
        w,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        points.len()
    )?;
    for p in points {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ply(path: &Path) -> Result<Vec<Vector3<f64>>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let mut vertex_count: Option<usize> = None;
    let mut properties = Vec::new();
    match lines.next() {
        Some(Ok(l)) if l.trim() == "ply" => {}
        _ => return Err(Error::data(format!("{}: missing 'ply' magic", path.display()))),
    }
    loop {
        let line = lines
            .next()
            .ok_or_else(|| Error::data("PLY header ended before end_header"))??;
        let line = line.trim();
        if line == "end_header" {
            break;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("format") => {
                if parts.next() != Some("ascii") {
                    return Err(Error::data("only ASCII PLY is supported"));
                }
            }
            Some("element") => {
                if parts.next() == Some("vertex") {
                    let n = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::data("bad vertex count"))?;
                    vertex_count = Some(n);
                }
            }
            Some("property") => {
                let _ty = parts.next();
                if let Some(name) = parts.next() {
                    properties.push(name.to_string());
                }
            }
            Some("comment") | None => {}
            Some(other) => return Err(Error::data(format!("unsupported PLY header entry '{other}'"))),
        }
    }
    let n = vertex_count.ok_or_else(|| Error::data("PLY header declares no vertex element"))?;
    let ix = properties.iter().position(|p| p == "x");
    let iy = properties.iter().position(|p| p == "y");
    let iz = properties.iter().position(|p| p == "z");
    let (ix, iy, iz) = match (ix, iy, iz) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::data("PLY vertices need x, y, z properties")),
    };
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let line = lines.next().ok_or_else(|| Error::data("PLY vertex list truncated"))??;
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::data("bad PLY vertex number")))
            .collect::<Result<_>>()?;
        if fields.len() < properties.len() {
            return Err(Error::data("PLY vertex row shorter than declared properties"));
        }
        points.push(Vector3::new(fields[ix], fields[iy], fields[iz]));
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn cloud_round_trips_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let cloud = vec![
            Vector3::new(0.1, -2.5, 7.25),
            Vector3::new(1e-3, 100.0, 0.0),
            Vector3::new(0.3333333333333333, 1.0, -1.0),
        ];
        write_ply(&cloud, &path).unwrap();
        let back = read_ply(&path).unwrap();
        assert_eq!(back, cloud);
    }

    #[test]
    fn missing_header_is_a_data_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.ply");
        std::fs::write(&path, "not a ply\n").unwrap();
        let err = read_ply(&path).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
