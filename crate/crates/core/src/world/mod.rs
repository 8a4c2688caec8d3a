//! Synthetic desk-scale scenes: textured analytic layouts observed by a
//! constant-velocity stereo camera with optional appearance drift.
//!
//! Scene units are model units: the stereo rig baseline is 0.1 by default
//! and `meters_per_unit` converts for reporting only.

pub mod noise;
mod render;

pub use noise::{texture_at, TextureSpec};
pub use render::{perturb_brightness, render_view, BrightnessModel};

use crate::curriculum::{BaselineModel, OffsetWindow, SourceId, DEFAULT_STEREO_BASELINE};
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, RigidTransform};
use crate::image::ImageBuffer;
use nalgebra::Vector3;
use std::collections::BTreeMap;
use std::sync::Arc;

/// Analytic scene geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layout {
    /// Single fronto-parallel plane at world depth `depth`.
    TexturedPlane { depth: f64 },
    /// Near plane left of `split_x`, far plane right of it; the ground-truth
    /// depth-edge set is exactly the rasterized boundary.
    TwoPlaneStep { near: f64, far: f64, split_x: f64 },
    /// Background plane tilted along x plus a floating rectangle in front,
    /// giving occlusions and disocclusions under lateral motion.
    RampPlusOccluder { base: f64, slope: f64, occluder_depth: f64, occluder: [f64; 4] },
}

/// Full scene description; everything needed to reproduce the rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub layout: Layout,
    pub texture: TextureSpec,
    pub frames: usize,
    /// Camera translation per frame, world units.
    pub velocity: Vector3<f64>,
    /// Yaw increment per frame, radians.
    pub yaw_rate: f64,
    /// Stereo partner offset along the camera x axis.
    pub stereo_offset: f64,
    pub brightness: BrightnessModel,
    pub intrinsics: Intrinsics,
    /// Unit conversion for reporting.
    pub meters_per_unit: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            layout: Layout::TexturedPlane { depth: 8.0 },
            texture: TextureSpec::default(),
            frames: 15,
            velocity: Vector3::new(0.08, 0.0, 0.0),
            yaw_rate: 0.0,
            stereo_offset: DEFAULT_STEREO_BASELINE,
            brightness: BrightnessModel::default(),
            intrinsics: Intrinsics::new(90.0, 90.0, 48.0, 32.0, 96, 64).unwrap(),
            meters_per_unit: 5.4,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if self.frames == 0 {
            return Err(Error::config("scene needs at least one frame"));
        }
        if !(self.stereo_offset > 0.0) {
            return Err(Error::config("stereo offset must be positive"));
        }
        if !(self.velocity.norm() > 0.0) {
            return Err(Error::config("camera velocity must be nonzero"));
        }
        if !(self.meters_per_unit > 0.0) {
            return Err(Error::config("meters_per_unit must be positive"));
        }
        Ok(())
    }

    /// Camera-to-world pose of frame `i`.
    pub fn camera_pose(&self, i: usize) -> RigidTransform {
        let yaw = RigidTransform::from_axis_angle(Vector3::new(0.0, self.yaw_rate * i as f64, 0.0));
        RigidTransform::from_parts(yaw.rotation, self.velocity * i as f64)
    }

    /// Camera-to-world pose of the stereo partner of frame `i`, displaced
    /// along the camera's x axis.
    pub fn stereo_pose(&self, i: usize) -> RigidTransform {
        self.camera_pose(i)
            .compose(&RigidTransform::from_translation(Vector3::new(self.stereo_offset, 0.0, 0.0)))
    }

    /// Index of the canonical target frame.
    pub fn center(&self) -> usize {
        self.frames / 2
    }
}

/// One rendered camera: image, ground-truth depth, camera-to-world pose.
#[derive(Debug, Clone)]
pub struct FrameData {
    pub image: ImageBuffer,
    pub depth: DepthMap,
    pub world_from_camera: RigidTransform,
}

/// A rendered scene; frames are shared so windows are cheap.
#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub frames: Vec<Arc<FrameData>>,
    pub stereo: Vec<Arc<FrameData>>,
}

impl Scene {
    /// Render all frames and stereo partners. Appearance drift grows with
    /// the temporal distance to the center frame; a stereo partner shares
    /// its frame's capture time and therefore its drift.
    pub fn render(spec: SceneSpec) -> Result<Scene> {
        spec.validate()?;
        let center = spec.center() as i32;
        let mut frames = Vec::with_capacity(spec.frames);
        let mut stereo = Vec::with_capacity(spec.frames);
        for i in 0..spec.frames {
            let sep = i as i32 - center;
            for (pose, out) in [
                (spec.camera_pose(i), &mut frames),
                (spec.stereo_pose(i), &mut stereo),
            ] {
                let (img, depth) = render_view(&spec.layout, &spec.texture, &spec.intrinsics, &pose)?;
                let img = perturb_brightness(&img, sep, &spec.brightness)?;
                out.push(Arc::new(FrameData { image: img, depth, world_from_camera: pose }));
            }
        }
        Ok(Scene { spec, frames, stereo })
    }

    /// Construct a scene from already-loaded frames (scene import).
    pub fn from_parts(spec: SceneSpec, frames: Vec<Arc<FrameData>>, stereo: Vec<Arc<FrameData>>) -> Result<Scene> {
        if frames.len() != spec.frames || stereo.len() != spec.frames {
            return Err(Error::data(format!(
                "scene declares {} frames but carries {}/{}",
                spec.frames,
                frames.len(),
                stereo.len()
            )));
        }
        Ok(Scene { spec, frames, stereo })
    }

    pub fn baseline_model(&self) -> Result<BaselineModel> {
        BaselineModel::new(self.spec.velocity.norm(), self.spec.stereo_offset)
    }

    /// Assemble the optimization window around a target frame.
    pub fn window(&self, target: usize) -> Result<FrameWindow> {
        if target >= self.frames.len() {
            return Err(Error::config(format!(
                "target {} outside scene of {} frames",
                target,
                self.frames.len()
            )));
        }
        let mut frames = BTreeMap::new();
        for (i, f) in self.frames.iter().enumerate() {
            frames.insert(i, Arc::clone(f));
        }
        Ok(FrameWindow {
            target_index: target,
            intrinsics: self.spec.intrinsics,
            frames,
            stereo: Arc::clone(&self.stereo[target]),
        })
    }
}

/// The data a single optimization step sees: one target frame, its temporal
/// neighborhood and the target's stereo partner.
#[derive(Debug, Clone)]
pub struct FrameWindow {
    pub target_index: usize,
    pub intrinsics: Intrinsics,
    /// Absolute frame index to frame, target included.
    pub frames: BTreeMap<usize, Arc<FrameData>>,
    pub stereo: Arc<FrameData>,
}

impl FrameWindow {
    pub fn target(&self) -> &Arc<FrameData> {
        &self.frames[&self.target_index]
    }

    /// Offsets available for source selection.
    pub fn offset_window(&self) -> OffsetWindow {
        let min = *self.frames.keys().next().unwrap() as i32 - self.target_index as i32;
        let max = *self.frames.keys().last().unwrap() as i32 - self.target_index as i32;
        OffsetWindow { min_offset: min, max_offset: max, stereo: true }
    }

    pub fn frame_at_offset(&self, k: i32) -> Result<&Arc<FrameData>> {
        let idx = self.target_index as i64 + k as i64;
        if idx < 0 {
            return Err(Error::data(format!("offset {k} leaves the window")));
        }
        self.frames
            .get(&(idx as usize))
            .ok_or_else(|| Error::data(format!("offset {k} leaves the window")))
    }

    pub fn source_frame(&self, source: SourceId) -> Result<&Arc<FrameData>> {
        match source {
            SourceId::Offset(k) => self.frame_at_offset(k),
            SourceId::Stereo => Ok(&self.stereo),
        }
    }

    /// Ground-truth relative pose mapping frame `from` points into frame
    /// `to`, both absolute indices.
    pub fn gt_relative(&self, from: usize, to: usize) -> Result<RigidTransform> {
        let a = self.frames.get(&from).ok_or_else(|| Error::data(format!("frame {from} not in window")))?;
        let b = self.frames.get(&to).ok_or_else(|| Error::data(format!("frame {to} not in window")))?;
        Ok(RigidTransform::between(&a.world_from_camera, &b.world_from_camera))
    }

    /// Rig pose: target points into the stereo partner's frame.
    pub fn stereo_relative(&self) -> RigidTransform {
        RigidTransform::between(&self.target().world_from_camera, &self.stereo.world_from_camera)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project;

    fn small_spec() -> SceneSpec {
        SceneSpec {
            frames: 7,
            intrinsics: Intrinsics::new(60.0, 60.0, 24.0, 16.0, 48, 32).unwrap(),
            ..SceneSpec::default()
        }
    }

    #[test]
    fn gt_poses_compose_consistently() {
        let scene = Scene::render(small_spec()).unwrap();
        let w = scene.window(3).unwrap();
        let direct = w.gt_relative(3, 6).unwrap();
        let chained = w
            .gt_relative(5, 6)
            .unwrap()
            .compose(&w.gt_relative(4, 5).unwrap())
            .compose(&w.gt_relative(3, 4).unwrap());
        assert!((direct.rotation - chained.rotation).abs().max() < 1e-12);
        assert!((direct.translation - chained.translation).norm() < 1e-12);
    }

    #[test]
    fn per_frame_baseline_matches_the_spec_velocity() {
        let scene = Scene::render(small_spec()).unwrap();
        let model = scene.baseline_model().unwrap();
        assert!((model.per_frame - scene.spec.velocity.norm()).abs() < 1e-12);
        let w = scene.window(3).unwrap();
        let rel = w.gt_relative(3, 4).unwrap();
        assert!((rel.baseline() - model.per_frame).abs() < 1e-12);
    }

    #[test]
    fn stereo_rig_pose_is_a_pure_lateral_shift() {
        let scene = Scene::render(small_spec()).unwrap();
        let w = scene.window(2).unwrap();
        let rel = w.stereo_relative();
        assert!((rel.translation - Vector3::new(-0.1, 0.0, 0.0)).norm() < 1e-12);
        assert!((rel.baseline() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn stereo_disparity_matches_the_pinhole_prediction() {
        let spec = small_spec();
        let scene = Scene::render(spec).unwrap();
        let w = scene.window(3).unwrap();
        let target = w.target();
        let proj = project(&target.depth, &w.intrinsics, &w.stereo_relative()).unwrap();
        let k = w.intrinsics;
        let mut checked = 0;
        for v in (2..30).step_by(5) {
            for u in (2..46).step_by(5) {
                let i = v * 48 + u;
                if !proj.front[i] {
                    continue;
                }
                let expected = k.fx * 0.1 / target.depth.at(u, v);
                let disparity = u as f64 - proj.u.data[i];
                assert!((disparity - expected).abs() < 0.05, "disparity {disparity} vs {expected}");
                checked += 1;
            }
        }
        assert!(checked > 30);
    }

    #[test]
    fn brightness_drift_scales_with_distance_from_center() {
        let spec = SceneSpec {
            brightness: BrightnessModel { gain: 1.05, bias: 0.0 },
            ..small_spec()
        };
        let scene = Scene::render(spec).unwrap();
        // Frame 3 is the center of 7: untouched; frame 6 brightened thrice.
        let mid = 16 * 48 + 24;
        let base = scene.frames[3].image.planes[0].data[mid];
        let far = scene.frames[6].image.planes[0].data[mid];
        assert!(far > base, "drift should brighten; base {base} far {far}");
        // Stereo partners share their frame's capture time: the center
        // partner is untouched while the last one is brightened like frame 6.
        let s6 = scene.stereo[6].image.planes[0].data[mid];
        let s6_flat = Scene::render(small_spec()).unwrap().stereo[6].image.planes[0].data[mid];
        assert!(s6 > s6_flat);
    }

    #[test]
    fn window_clipping_near_sequence_edges() {
        let scene = Scene::render(small_spec()).unwrap();
        let w = scene.window(1).unwrap();
        let ow = w.offset_window();
        assert_eq!(ow.min_offset, -1);
        assert_eq!(ow.max_offset, 5);
        assert!(w.frame_at_offset(-2).is_err());
        assert!(w.frame_at_offset(3).is_ok());
    }
}
