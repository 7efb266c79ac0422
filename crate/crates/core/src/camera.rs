//! Pinhole camera model.

use nalgebra::{Matrix3, Matrix3x4, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RigidPose;
use crate::scalar::Real;

/// Focal lengths and principal point, all in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics<T: Real> {
    pub fx: T,
    pub fy: T,
    pub u0: T,
    pub v0: T,
}

impl<T: Real> Intrinsics<T> {
    pub fn new(fx: T, fy: T, u0: T, v0: T) -> Result<Self> {
        if !(fx > T::zero() && fy > T::zero()) {
            return Err(Error::InvalidInput("focal lengths must be positive".into()));
        }
        Ok(Self { fx, fy, u0, v0 })
    }

    pub fn matrix(&self) -> Matrix3<T> {
        Matrix3::new(
            self.fx, T::zero(), self.u0, //
            T::zero(), self.fy, self.v0, //
            T::zero(), T::zero(), T::one(),
        )
    }
}

/// Intrinsics plus the world-to-camera motion `X_c = R X_w + T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera<T: Real> {
    pub intrinsics: Intrinsics<T>,
    pub pose: RigidPose<T>,
}

impl<T: Real> Camera<T> {
    pub fn projection_matrix(&self) -> Matrix3x4<T> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.pose.rotation);
        rt.set_column(3, &self.pose.translation);
        self.intrinsics.matrix() * rt
    }

    /// Pixel of a world point; `None` behind or at the camera plane.
    pub fn project(&self, x: &Vector3<T>) -> Option<Vector2<T>> {
        let c = self.pose.transform_point(x);
        if c.z <= T::zero() {
            return None;
        }
        let k = &self.intrinsics;
        Some(Vector2::new(k.fx * c.x / c.z + k.u0, k.fy * c.y / c.z + k.v0))
    }

    /// Image of `x` as a point of the projective plane: points behind the
    /// camera map through the center. `None` only on the camera's depth plane.
    pub fn project_projective(&self, x: &Vector3<T>) -> Option<Vector2<T>> {
        let c = self.pose.transform_point(x);
        if c.z.abs() <= c.norm() * T::default_epsilon() {
            return None;
        }
        let k = &self.intrinsics;
        Some(Vector2::new(k.fx * c.x / c.z + k.u0, k.fy * c.y / c.z + k.v0))
    }

    /// Optical center in world coordinates.
    pub fn center(&self) -> Vector3<T> {
        -(self.pose.rotation.transpose() * self.pose.translation)
    }

    /// Unit world-frame direction of the visual ray through a pixel.
    pub fn ray_direction(&self, pixel: &Vector2<T>) -> Vector3<T> {
        let k = &self.intrinsics;
        let d = Vector3::new((pixel.x - k.u0) / k.fx, (pixel.y - k.v0) / k.fy, T::one());
        (self.pose.rotation.transpose() * d).normalize()
    }
}
