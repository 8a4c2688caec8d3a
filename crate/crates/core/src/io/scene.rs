//! Scene directories: numbered PPM frames, PFM depths and a plain-text
//! manifest holding the scene description and all camera-to-world poses,
//! so a run can be reproduced from disk alone.

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, RigidTransform};
use crate::io::{pfm, ppm};
use crate::world::{BrightnessModel, FrameData, Layout, Scene, SceneSpec, TextureSpec};
use nalgebra::{Matrix3, Vector3};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

pub const MANIFEST_NAME: &str = "scene.manifest";

fn pose_fields(p: &RigidTransform) -> String {
    let r = &p.rotation;
    let t = &p.translation;
    format!(
        "{} {} {} {} {} {} {} {} {} {} {} {}",
        r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
        r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
        r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
    )
}

fn pose_from_fields(s: &str) -> Result<RigidTransform> {
    let v: Vec<f64> = s
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::data(format!("bad pose number '{t}'"))))
        .collect::<Result<_>>()?;
    if v.len() != 12 {
        return Err(Error::data(format!("pose needs 12 numbers, got {}", v.len())));
    }
    let rotation = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
    RigidTransform::new(rotation, Vector3::new(v[3], v[7], v[11]))
}

fn numbers(s: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::data(format!("bad number '{t}' in {what}"))))
        .collect::<Result<_>>()?;
    if v.len() != n {
        return Err(Error::data(format!("{what} needs {n} numbers, got {}", v.len())));
    }
    Ok(v)
}

fn manifest_text(scene: &Scene) -> String {
    let spec = &scene.spec;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("frames", spec.frames.to_string());
    kv("velocity", format!("{} {} {}", spec.velocity.x, spec.velocity.y, spec.velocity.z));
    kv("yaw_rate", spec.yaw_rate.to_string());
    kv("stereo_offset", spec.stereo_offset.to_string());
    kv("meters_per_unit", spec.meters_per_unit.to_string());
    let k = &spec.intrinsics;
    kv("intrinsics", format!("{} {} {} {} {} {}", k.fx, k.fy, k.cx, k.cy, k.width, k.height));
    match spec.layout {
        Layout::TexturedPlane { depth } => {
            kv("layout", "textured_plane".into());
            kv("layout.depth", depth.to_string());
        }
        Layout::TwoPlaneStep { near, far, split_x } => {
            kv("layout", "two_plane_step".into());
            kv("layout.near", near.to_string());
            kv("layout.far", far.to_string());
            kv("layout.split_x", split_x.to_string());
        }
        Layout::RampPlusOccluder { base, slope, occluder_depth, occluder } => {
            kv("layout", "ramp_plus_occluder".into());
            kv("layout.base", base.to_string());
            kv("layout.slope", slope.to_string());
            kv("layout.occluder_depth", occluder_depth.to_string());
            kv(
                "layout.occluder",
                format!("{} {} {} {}", occluder[0], occluder[1], occluder[2], occluder[3]),
            );
        }
    }
    let t = &spec.texture;
    kv("texture.octaves", t.octaves.to_string());
    kv("texture.base_frequency", t.base_frequency.to_string());
    kv("texture.seed", t.seed.to_string());
    kv("texture.low", t.low.to_string());
    kv("texture.high", t.high.to_string());
    kv("brightness.gain", spec.brightness.gain.to_string());
    kv("brightness.bias", spec.brightness.bias.to_string());
    for (i, f) in scene.frames.iter().enumerate() {
        kv(&format!("pose.frame.{i:04}"), pose_fields(&f.world_from_camera));
    }
    for (i, f) in scene.stereo.iter().enumerate() {
        kv(&format!("pose.stereo.{i:04}"), pose_fields(&f.world_from_camera));
    }
    out
}

fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::data(format!("manifest line {}: expected 'key = value'", lineno + 1)));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn take<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::data(format!("manifest misses key '{key}'")))
}

fn spec_from_manifest(map: &BTreeMap<String, String>) -> Result<SceneSpec> {
    let parse = |key: &str| -> Result<f64> {
        take(map, key)?
            .parse()
            .map_err(|_| Error::data(format!("manifest key '{key}' is not a number")))
    };
    let frames: usize = take(map, "frames")?
        .parse()
        .map_err(|_| Error::data("manifest key 'frames' is not a count"))?;
    let vel = numbers(take(map, "velocity")?, 3, "velocity")?;
    let ik = numbers(take(map, "intrinsics")?, 6, "intrinsics")?;
    let layout = match take(map, "layout")? {
        "textured_plane" => Layout::TexturedPlane { depth: parse("layout.depth")? },
        "two_plane_step" => Layout::TwoPlaneStep {
            near: parse("layout.near")?,
            far: parse("layout.far")?,
            split_x: parse("layout.split_x")?,
        },
        "ramp_plus_occluder" => {
            let occ = numbers(take(map, "layout.occluder")?, 4, "layout.occluder")?;
            Layout::RampPlusOccluder {
                base: parse("layout.base")?,
                slope: parse("layout.slope")?,
                occluder_depth: parse("layout.occluder_depth")?,
                occluder: [occ[0], occ[1], occ[2], occ[3]],
            }
        }
        other => return Err(Error::data(format!("unknown layout '{other}'"))),
    };
    Ok(SceneSpec {
        layout,
        texture: TextureSpec {
            octaves: take(map, "texture.octaves")?
                .parse()
                .map_err(|_| Error::data("texture.octaves is not a count"))?,
            base_frequency: parse("texture.base_frequency")?,
            seed: take(map, "texture.seed")?
                .parse()
                .map_err(|_| Error::data("texture.seed is not an integer"))?,
            low: parse("texture.low")?,
            high: parse("texture.high")?,
        },
        frames,
        velocity: Vector3::new(vel[0], vel[1], vel[2]),
        yaw_rate: parse("yaw_rate")?,
        stereo_offset: parse("stereo_offset")?,
        brightness: BrightnessModel { gain: parse("brightness.gain")?, bias: parse("brightness.bias")? },
        intrinsics: Intrinsics::new(ik[0], ik[1], ik[2], ik[3], ik[4] as usize, ik[5] as usize)?,
        meters_per_unit: parse("meters_per_unit")?,
    })
}

pub fn frame_image_name(i: usize) -> String {
    format!("frame_{i:04}.ppm")
}

pub fn stereo_image_name(i: usize) -> String {
    format!("stereo_{i:04}.ppm")
}

pub fn depth_name(i: usize) -> String {
    format!("depth_{i:04}.pfm")
}

pub fn stereo_depth_name(i: usize) -> String {
    format!("stereo_depth_{i:04}.pfm")
}

pub fn write_scene(scene: &Scene, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(MANIFEST_NAME), manifest_text(scene))?;
    for (i, f) in scene.frames.iter().enumerate() {
        ppm::write_ppm(&f.image, &dir.join(frame_image_name(i)))?;
        pfm::write_depth(&f.depth, &dir.join(depth_name(i)))?;
    }
    for (i, f) in scene.stereo.iter().enumerate() {
        ppm::write_ppm(&f.image, &dir.join(stereo_image_name(i)))?;
        pfm::write_depth(&f.depth, &dir.join(stereo_depth_name(i)))?;
    }
    Ok(())
}

pub fn read_scene(dir: &Path) -> Result<Scene> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::data(format!("{}: {e}", manifest_path.display())))?;
    let map = parse_manifest(&text)?;
    let spec = spec_from_manifest(&map)?;
    let mut frames = Vec::with_capacity(spec.frames);
    let mut stereo = Vec::with_capacity(spec.frames);
    for i in 0..spec.frames {
        let pose = pose_from_fields(take(&map, &format!("pose.frame.{i:04}"))?)?;
        frames.push(Arc::new(FrameData {
            image: ppm::read_ppm(&dir.join(frame_image_name(i)))?,
            depth: pfm::read_depth(&dir.join(depth_name(i)))?,
            world_from_camera: pose,
        }));
        let spose = pose_from_fields(take(&map, &format!("pose.stereo.{i:04}"))?)?;
        stereo.push(Arc::new(FrameData {
            image: ppm::read_ppm(&dir.join(stereo_image_name(i)))?,
            depth: pfm::read_depth(&dir.join(stereo_depth_name(i)))?,
            world_from_camera: spose,
        }));
    }
    Scene::from_parts(spec, frames, stereo)
}
