//! Camera model and rigid motion.
//!
//! Conventions, fixed once for the whole crate:
//! * right-handed camera frame, +z forward, image u to the right, v down;
//! * pixel (u, v) corresponds to the ray ((u - cx)/fx, (v - cy)/fy, 1);
//! * a relative pose for a (target, source) pair maps target-frame points
//!   into the source frame, `x_s = R x_t + t`;
//! * points are in front of a camera when z exceeds [`Z_MIN`];
//! * samples that fall outside the image are masked out, never clamped.

mod warp;

pub use warp::{
    backproject, project, sample_bilinear, synthesize, ProjectionMap, Reconstruction,
    SampleResult,
};

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Rotation3, Vector3};

/// Near-plane threshold: projected points must satisfy z > Z_MIN.
pub const Z_MIN: f64 = 1e-3;

/// Pinhole intrinsics tied to a concrete image size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Intrinsics { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::config(format!("focal lengths must be positive, got {} {}", self.fx, self.fy)));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::config("principal point must be finite"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("image dimensions must be positive"));
        }
        Ok(())
    }

    /// Camera-frame ray through pixel (u, v), unnormalized with z = 1.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Image coordinates of a camera-frame point. Caller checks z > Z_MIN.
    #[inline]
    pub fn project_point(&self, p: &Vector3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

/// Rotation plus translation, acting as `x' = R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Validated constructor; rejects rotation blocks that are not
    /// orthonormal to 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let t = RigidTransform { rotation, translation };
        t.validate()?;
        Ok(t)
    }

    /// For internal compositions where orthonormality is maintained
    /// by construction.
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform { rotation, translation }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        RigidTransform { rotation: Matrix3::identity(), translation: t }
    }

    /// Rotation about `axis_angle` (Rodrigues vector) with zero translation.
    pub fn from_axis_angle(axis_angle: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: Rotation3::from_scaled_axis(axis_angle).into_inner(),
            translation: Vector3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let gram = self.rotation.transpose() * self.rotation;
        let err = (gram - Matrix3::identity()).abs().max();
        if !err.is_finite() || err > 1e-9 {
            return Err(Error::config(format!("rotation not orthonormal, deviation {err:.3e}")));
        }
        if self.rotation.determinant() < 0.0 {
            return Err(Error::config("rotation has negative determinant"));
        }
        if !self.translation.iter().all(|x| x.is_finite()) {
            return Err(Error::config("translation must be finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self` applied after `other`: (self * other)(x) = self(other(x)).
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Relative pose mapping frame-a points into frame b, given both
    /// camera-to-world poses.
    pub fn between(world_from_a: &RigidTransform, world_from_b: &RigidTransform) -> RigidTransform {
        world_from_b.inverse().compose(world_from_a)
    }

    /// Translation norm; the baseline of the camera pair.
    pub fn baseline(&self) -> f64 {
        self.translation.norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform {
        let axis = Vector3::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        let t = Vector3::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        RigidTransform::from_axis_angle(axis).compose(&RigidTransform::from_translation(t))
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let t = random_transform(&mut rng);
            let i = t.compose(&t.inverse());
            assert!((i.rotation - Matrix3::identity()).abs().max() < 1e-12);
            assert!(i.translation.norm() < 1e-12);
        }
    }

    #[test]
    fn orthonormality_drift_stays_small_over_long_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut acc = RigidTransform::identity();
        for _ in 0..100 {
            acc = acc.compose(&random_transform(&mut rng));
        }
        assert!(acc.validate().is_ok());
    }

    #[test]
    fn new_rejects_non_orthonormal() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = 1.1;
        assert!(RigidTransform::new(m, Vector3::zeros()).is_err());
    }

    #[test]
    fn between_maps_points_across_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let wa = random_transform(&mut rng);
        let wb = random_transform(&mut rng);
        let rel = RigidTransform::between(&wa, &wb);
        let p_a = Vector3::new(0.3, -0.2, 2.0);
        let p_world = wa.transform_point(&p_a);
        let p_b = wb.inverse().transform_point(&p_world);
        assert!((rel.transform_point(&p_a) - p_b).norm() < 1e-12);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0, 4, 4).is_err());
        assert!(Intrinsics::new(100.0, 100.0, 2.0, 2.0, 0, 4).is_err());
        assert!(Intrinsics::new(100.0, 100.0, 2.0, 2.0, 4, 4).is_ok());
    }
}
