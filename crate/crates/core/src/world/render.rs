//! Analytic ray casting of the scene layouts.

use super::noise::{texture_at, TextureSpec};
use super::Layout;
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, RigidTransform};
use crate::grid::Grid;
use crate::image::ImageBuffer;
use nalgebra::Vector3;

/// Closest surface hit along a world-space ray, as (ray parameter, surface
/// point, texture seed offset). The ray direction has unit z in the camera
/// frame, so the parameter equals camera depth.
fn cast(layout: &Layout, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>, u64)> {
    match layout {
        Layout::TexturedPlane { depth } => {
            let s = plane_hit(*depth, origin, dir)?;
            Some((s, origin + dir * s, 0))
        }
        Layout::TwoPlaneStep { near, far, split_x } => {
            let mut best: Option<(f64, Vector3<f64>, u64)> = None;
            if let Some(s) = plane_hit(*near, origin, dir) {
                let p = origin + dir * s;
                if p.x < *split_x {
                    best = Some((s, p, 0));
                }
            }
            if let Some(s) = plane_hit(*far, origin, dir) {
                let p = origin + dir * s;
                if p.x >= *split_x && best.map_or(true, |(b, _, _)| s < b) {
                    best = Some((s, p, 1));
                }
            }
            best
        }
        Layout::RampPlusOccluder { base, slope, occluder_depth, occluder } => {
            // Ramp plane z = base + slope * x, i.e. n . p = base with
            // n = (-slope, 0, 1).
            let n = Vector3::new(-slope, 0.0, 1.0);
            let denom = n.dot(dir);
            let mut best: Option<(f64, Vector3<f64>, u64)> = None;
            if denom.abs() > 1e-12 {
                let s = (base - n.dot(origin)) / denom;
                if s > 0.0 {
                    best = Some((s, origin + dir * s, 0));
                }
            }
            if let Some(s) = plane_hit(*occluder_depth, origin, dir) {
                let p = origin + dir * s;
                let [x0, y0, x1, y1] = *occluder;
                if p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1 {
                    if best.map_or(true, |(b, _, _)| s < b) {
                        best = Some((s, p, 1));
                    }
                }
            }
            best
        }
    }
}

fn plane_hit(plane_z: f64, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    if dir.z.abs() < 1e-12 {
        return None;
    }
    let s = (plane_z - origin.z) / dir.z;
    (s > 0.0).then_some(s)
}

/// Render one camera: intensity image plus ground-truth depth.
pub fn render_view(
    layout: &Layout,
    texture: &TextureSpec,
    k: &Intrinsics,
    world_from_camera: &RigidTransform,
) -> Result<(ImageBuffer, DepthMap)> {
    let (w, h) = (k.width, k.height);
    let mut img = ImageBuffer::new(w, h, 1, 0.0)?;
    let mut depth = Grid::new(w, h, 0.0);
    let mut valid = vec![false; w * h];
    let origin = world_from_camera.translation;
    for v in 0..h {
        for u in 0..w {
            let dir = world_from_camera.rotation * k.ray(u as f64, v as f64);
            let i = v * w + u;
            if let Some((s, p, tex_id)) = cast(layout, &origin, &dir) {
                let spec = TextureSpec { seed: texture.seed.wrapping_add(tex_id.wrapping_mul(0x9e37)), ..*texture };
                img.planes[0].data[i] = texture_at(&spec, p.x, p.y);
                depth.data[i] = s;
                valid[i] = true;
            }
        }
    }
    Ok((img, DepthMap { values: depth, valid }))
}

/// Temporal appearance drift: gain and bias grow with the frame's distance
/// from the reference time, clamped back into [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrightnessModel {
    pub gain: f64,
    pub bias: f64,
}

impl Default for BrightnessModel {
    fn default() -> Self {
        BrightnessModel { gain: 1.0, bias: 0.0 }
    }
}

pub fn perturb_brightness(image: &ImageBuffer, separation: i32, model: &BrightnessModel) -> Result<ImageBuffer> {
    if !(model.gain > 0.0 && model.gain.is_finite()) || !model.bias.is_finite() {
        return Err(Error::config(format!("bad brightness model gain={} bias={}", model.gain, model.bias)));
    }
    let k = separation.unsigned_abs() as f64;
    let gain = model.gain.powf(k);
    let bias = model.bias * k;
    let planes = image
        .planes
        .iter()
        .map(|p| p.map(|x| (gain * x + bias).clamp(0.0, 1.0)))
        .collect();
    ImageBuffer::from_planes(planes)
}
