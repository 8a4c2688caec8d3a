//! Projection, bilinear sampling and inverse-warp view synthesis.

use super::{Intrinsics, RigidTransform, Z_MIN};
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::image::ImageBuffer;
use nalgebra::Vector3;

/// Per-pixel projection of a depth map into a source view.
///
/// Besides the sample coordinates this carries everything the optimizer
/// needs for analytic derivatives: the transformed camera-space points and
/// the coordinate sensitivities with respect to the pixel's depth.
#[derive(Debug, Clone)]
pub struct ProjectionMap {
    pub u: Grid,
    pub v: Grid,
    /// In front of the source camera (z > Z_MIN) and the pixel had valid depth.
    pub front: Vec<bool>,
    /// Source-frame point per pixel, flattened (x, y, z) grids.
    pub x_cam: [Grid; 3],
    /// d u' / d depth, d v' / d depth.
    pub du_dd: Grid,
    pub dv_dd: Grid,
}

/// Project every valid pixel of `depth` (seen from the target camera with
/// intrinsics `k`) into the source view reached by `pose`.
pub fn project(depth: &DepthMap, k: &Intrinsics, pose: &RigidTransform) -> Result<ProjectionMap> {
    let (w, h) = (depth.width(), depth.height());
    if w != k.width || h != k.height {
        return Err(Error::config(format!(
            "depth {}x{} does not match intrinsics {}x{}",
            w, h, k.width, k.height
        )));
    }
    let mut out = ProjectionMap {
        u: Grid::new(w, h, 0.0),
        v: Grid::new(w, h, 0.0),
        front: vec![false; w * h],
        x_cam: [Grid::new(w, h, 0.0), Grid::new(w, h, 0.0), Grid::new(w, h, 0.0)],
        du_dd: Grid::new(w, h, 0.0),
        dv_dd: Grid::new(w, h, 0.0),
    };
    let t = pose.translation;
    for vpix in 0..h {
        for upix in 0..w {
            let i = vpix * w + upix;
            if !depth.valid[i] {
                continue;
            }
            let d = depth.values.data[i];
            // x' = d * (R ray) + t; rotation applied to the unit-z ray once.
            let a = pose.rotation * k.ray(upix as f64, vpix as f64);
            let p = a * d + t;
            out.x_cam[0].data[i] = p.x;
            out.x_cam[1].data[i] = p.y;
            out.x_cam[2].data[i] = p.z;
            if p.z <= Z_MIN {
                continue;
            }
            let (us, vs) = k.project_point(&p);
            out.u.data[i] = us;
            out.v.data[i] = vs;
            out.front[i] = true;
            let z2 = p.z * p.z;
            out.du_dd.data[i] = k.fx * (a.x * t.z - a.z * t.x) / z2;
            out.dv_dd.data[i] = k.fy * (a.y * t.z - a.z * t.y) / z2;
        }
    }
    Ok(out)
}

/// Bilinear samples of an image at free coordinates, with spatial gradients
/// of the interpolant.
#[derive(Debug, Clone)]
pub struct SampleResult {
    pub image: ImageBuffer,
    /// All four interpolation corners inside the image.
    pub mask: Vec<bool>,
    /// Per-channel d sample / d u and d sample / d v.
    pub grad_u: Vec<Grid>,
    pub grad_v: Vec<Grid>,
}

/// Sample `img` at coordinates `(u, v)` where `wanted` is set. Samples whose
/// 4-corner footprint leaves the image are masked out and return 0.
pub fn sample_bilinear(img: &ImageBuffer, u: &Grid, v: &Grid, wanted: &[bool]) -> Result<SampleResult> {
    if !u.same_shape(v) {
        return Err(Error::config("coordinate grids differ in shape"));
    }
    if wanted.len() != u.data.len() {
        return Err(Error::config("coordinate mask length mismatch"));
    }
    let (w, h) = (u.width, u.height);
    let c = img.channels();
    let mut out = SampleResult {
        image: ImageBuffer::new(w, h, c, 0.0)?,
        mask: vec![false; w * h],
        grad_u: (0..c).map(|_| Grid::new(w, h, 0.0)).collect(),
        grad_v: (0..c).map(|_| Grid::new(w, h, 0.0)).collect(),
    };
    let (iw, ih) = (img.width, img.height);
    for i in 0..u.data.len() {
        if !wanted[i] {
            continue;
        }
        let (us, vs) = (u.data[i], v.data[i]);
        if !us.is_finite() || !vs.is_finite() {
            continue;
        }
        // Inside the continuous image domain or masked, never clamped.
        if iw < 2 || ih < 2 {
            continue;
        }
        if us < 0.0 || vs < 0.0 || us > (iw - 1) as f64 || vs > (ih - 1) as f64 {
            continue;
        }
        let x0 = (us.floor() as usize).min(iw - 2);
        let y0 = (vs.floor() as usize).min(ih - 2);
        let bx = us - x0 as f64;
        let by = vs - y0 as f64;
        out.mask[i] = true;
        for ch in 0..c {
            let p = &img.planes[ch];
            let v00 = p.at(x0, y0);
            let v10 = p.at(x0 + 1, y0);
            let v01 = p.at(x0, y0 + 1);
            let v11 = p.at(x0 + 1, y0 + 1);
            out.image.planes[ch].data[i] = (1.0 - by) * ((1.0 - bx) * v00 + bx * v10)
                + by * ((1.0 - bx) * v01 + bx * v11);
            out.grad_u[ch].data[i] = (1.0 - by) * (v10 - v00) + by * (v11 - v01);
            out.grad_v[ch].data[i] = (1.0 - bx) * (v01 - v00) + bx * (v11 - v10);
        }
    }
    Ok(out)
}

/// Inverse-warp reconstruction of the target view from one source image.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub image: ImageBuffer,
    /// Projected in front of the source camera and sampled in bounds.
    pub mask: Vec<bool>,
    pub proj: ProjectionMap,
    pub grad_u: Vec<Grid>,
    pub grad_v: Vec<Grid>,
}

impl Reconstruction {
    /// d reconstruction(channel) / d depth at one pixel.
    #[inline]
    pub fn dvalue_dd(&self, ch: usize, i: usize) -> f64 {
        self.grad_u[ch].data[i] * self.proj.du_dd.data[i]
            + self.grad_v[ch].data[i] * self.proj.dv_dd.data[i]
    }
}

/// Reconstruct the target view: project target depth into the source view
/// with `pose`, then sample the source image there.
pub fn synthesize(
    source: &ImageBuffer,
    depth: &DepthMap,
    k: &Intrinsics,
    pose: &RigidTransform,
) -> Result<Reconstruction> {
    if source.width != k.width || source.height != k.height {
        return Err(Error::config("source image does not match intrinsics"));
    }
    let proj = project(depth, k, pose)?;
    let sampled = sample_bilinear(source, &proj.u, &proj.v, &proj.front)?;
    Ok(Reconstruction {
        image: sampled.image,
        mask: sampled.mask,
        proj,
        grad_u: sampled.grad_u,
        grad_v: sampled.grad_v,
    })
}

/// Camera-frame (or `pose`-transformed) 3D points of all valid pixels.
pub fn backproject(depth: &DepthMap, k: &Intrinsics, pose: &RigidTransform) -> Result<Vec<Vector3<f64>>> {
    if depth.width() != k.width || depth.height() != k.height {
        return Err(Error::config("depth map does not match intrinsics"));
    }
    let mut pts = Vec::with_capacity(depth.valid_count());
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            if !depth.is_valid(u, v) {
                continue;
            }
            let p = k.ray(u as f64, v as f64) * depth.at(u, v);
            pts.push(pose.transform_point(&p));
        }
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Z_MIN;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_k() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 64.0, 48.0, 128, 96).unwrap()
    }

    #[test]
    fn principal_pixel_shifts_by_disparity_under_lateral_motion() {
        // Camera moves +1 along x; the relative pose carries -1.
        let k = test_k();
        let depth = DepthMap::constant(128, 96, 10.0);
        let cam_a = RigidTransform::identity();
        let cam_b = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let pose = RigidTransform::between(&cam_a, &cam_b);
        let proj = project(&depth, &k, &pose).unwrap();
        let i = 48 * 128 + 64;
        assert!(proj.front[i]);
        assert!((proj.u.data[i] - 54.0).abs() < 1e-12, "u'={}", proj.u.data[i]);
        assert!((proj.v.data[i] - 48.0).abs() < 1e-12);
    }

    #[test]
    fn identity_pose_projects_onto_the_pixel_grid() {
        let k = test_k();
        let depth = DepthMap::constant(128, 96, 7.0);
        let proj = project(&depth, &k, &RigidTransform::identity()).unwrap();
        for v in 0..96 {
            for u in 0..128 {
                let i = v * 128 + u;
                assert!((proj.u.data[i] - u as f64).abs() < 1e-9);
                assert!((proj.v.data[i] - v as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn behind_camera_points_are_masked() {
        let k = test_k();
        let depth = DepthMap::constant(128, 96, 1.0);
        // Push everything behind the source camera.
        let pose = RigidTransform::from_translation(Vector3::new(0.0, 0.0, -2.0));
        let proj = project(&depth, &k, &pose).unwrap();
        assert!(proj.front.iter().all(|&f| !f));
        assert!(proj.x_cam[2].data.iter().all(|&z| z <= Z_MIN));
    }

    #[test]
    fn round_trip_through_inverse_pose_recovers_the_grid() {
        let k = test_k();
        let depth = DepthMap::constant(128, 96, 8.0);
        let pose = RigidTransform::from_axis_angle(Vector3::new(0.0, 0.02, 0.0))
            .compose(&RigidTransform::from_translation(Vector3::new(0.3, -0.1, 0.2)));
        let proj = project(&depth, &k, &pose).unwrap();
        let inv = pose.inverse();
        for v in (4..92).step_by(7) {
            for u in (4..124).step_by(7) {
                let i = v * 128 + u;
                assert!(proj.front[i]);
                // Treat the projected point as a depth sample in the source
                // view and map it back.
                let z = proj.x_cam[2].data[i];
                let p = k.ray(proj.u.data[i], proj.v.data[i]) * z;
                let back = inv.transform_point(&p);
                let (ub, vb) = k.project_point(&back);
                assert!((ub - u as f64).abs() < 1e-6, "u={u} ub={ub}");
                assert!((vb - v as f64).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn projection_depth_jacobian_matches_finite_differences() {
        let k = test_k();
        let pose = RigidTransform::from_axis_angle(Vector3::new(0.01, -0.015, 0.005))
            .compose(&RigidTransform::from_translation(Vector3::new(0.2, 0.05, -0.1)));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let u = rng.gen_range(0..128);
            let v = rng.gen_range(0..96);
            let d = rng.gen_range(2.0..20.0);
            let h = 1e-4 * d;
            let eval = |dd: f64| {
                let depth = DepthMap::constant(128, 96, dd);
                let proj = project(&depth, &k, &pose).unwrap();
                let i = v * 128 + u;
                (proj.u.data[i], proj.v.data[i], proj.du_dd.data[i], proj.dv_dd.data[i])
            };
            let (u_p, v_p, _, _) = eval(d + h);
            let (u_m, v_m, _, _) = eval(d - h);
            let (_, _, du, dv) = eval(d);
            let fd_u = (u_p - u_m) / (2.0 * h);
            let fd_v = (v_p - v_m) / (2.0 * h);
            assert!((fd_u - du).abs() < 1e-3 * du.abs().max(1e-6) + 1e-7, "du={du} fd={fd_u}");
            assert!((fd_v - dv).abs() < 1e-3 * dv.abs().max(1e-6) + 1e-7, "dv={dv} fd={fd_v}");
        }
    }

    #[test]
    fn sampling_identity_grid_returns_the_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut img = ImageBuffer::new(9, 7, 1, 0.0).unwrap();
        for x in img.planes[0].data.iter_mut() {
            *x = rng.gen();
        }
        let mut u = Grid::new(9, 7, 0.0);
        let mut v = Grid::new(9, 7, 0.0);
        for vv in 0..7 {
            for uu in 0..9 {
                *u.at_mut(uu, vv) = uu as f64;
                *v.at_mut(uu, vv) = vv as f64;
            }
        }
        let res = sample_bilinear(&img, &u, &v, &vec![true; 63]).unwrap();
        for i in 0..63 {
            assert!(res.mask[i]);
            assert_eq!(res.image.planes[0].data[i], img.planes[0].data[i]);
        }
    }

    #[test]
    fn out_of_border_samples_are_masked_never_clamped() {
        let img = ImageBuffer::new(4, 4, 1, 0.5).unwrap();
        let u = Grid::from_vec(3, 1, vec![-0.4, 3.2, 1.0]).unwrap();
        let v = Grid::from_vec(3, 1, vec![1.0, 1.0, 5.0]).unwrap();
        let res = sample_bilinear(&img, &u, &v, &vec![true; 3]).unwrap();
        assert_eq!(res.mask, vec![false, false, false]);
        assert_eq!(res.image.planes[0].data, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn sampling_is_linear_in_the_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rand_img = |rng: &mut ChaCha8Rng| {
            let mut img = ImageBuffer::new(8, 6, 1, 0.0).unwrap();
            for x in img.planes[0].data.iter_mut() {
                *x = rng.gen();
            }
            img
        };
        let i1 = rand_img(&mut rng);
        let i2 = rand_img(&mut rng);
        let (a, b) = (0.3, 0.7);
        let mut blend = ImageBuffer::new(8, 6, 1, 0.0).unwrap();
        for i in 0..48 {
            blend.planes[0].data[i] = a * i1.planes[0].data[i] + b * i2.planes[0].data[i];
        }
        let n = 20;
        let u = Grid::from_vec(n, 1, (0..n).map(|_| rng.gen_range(0.0..6.9)).collect()).unwrap();
        let v = Grid::from_vec(n, 1, (0..n).map(|_| rng.gen_range(0.0..4.9)).collect()).unwrap();
        let wanted = vec![true; n];
        let s1 = sample_bilinear(&i1, &u, &v, &wanted).unwrap();
        let s2 = sample_bilinear(&i2, &u, &v, &wanted).unwrap();
        let sb = sample_bilinear(&blend, &u, &v, &wanted).unwrap();
        for i in 0..n {
            let exp = a * s1.image.planes[0].data[i] + b * s2.image.planes[0].data[i];
            assert!((sb.image.planes[0].data[i] - exp).abs() < 1e-12);
        }
    }

    #[test]
    fn backproject_principal_pixel_lands_on_axis() {
        let k = test_k();
        let mut depth = DepthMap::constant(128, 96, 1.0);
        // Only keep the principal pixel.
        for (i, ok) in depth.valid.iter_mut().enumerate() {
            *ok = i == 48 * 128 + 64;
        }
        let pts = backproject(&depth, &k, &RigidTransform::identity()).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((pts[0] - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }
}
