//! Rigid-motion helpers: angle-axis maps, nearest rotations, rigid alignment, RQ.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Rigid transform `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidPose<T: Real> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> RigidPose<T> {
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn transform_point(&self, x: &Vector3<T>) -> Vector3<T> {
        self.rotation * x + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    /// Lifts an in-plane point `(x, y)` of this pose's plane into the parent frame.
    pub fn lift(&self, p: &nalgebra::Vector2<T>) -> Vector3<T> {
        self.transform_point(&Vector3::new(p.x, p.y, T::zero()))
    }
}

fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(
        T::zero(), -v.z, v.y, //
        v.z, T::zero(), -v.x, //
        -v.y, v.x, T::zero(),
    )
}

/// Rotation matrix of an angle-axis vector; second-order series near zero.
pub fn rotation_from_angle_axis<T: Real>(r: &Vector3<T>) -> Matrix3<T> {
    let th2 = r.norm_squared();
    let k = skew(r);
    let (a, b) = if th2 < T::lit(1e-10) {
        (
            T::one() - th2 / T::lit(6.0),
            T::lit(0.5) - th2 / T::lit(24.0),
        )
    } else {
        let th = th2.sqrt();
        (th.sin() / th, (T::one() - th.cos()) / th2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Angle-axis vector of a rotation, with angle in `[0, π]`.
pub fn angle_axis_from_rotation<T: Real>(r: &Matrix3<T>) -> Vector3<T> {
    let half = T::lit(0.5);
    let s = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]) * half;
    let c = (r.trace() - T::one()) * half;
    let sin = s.norm();
    if c < T::zero() {
        // near π the skew part loses the axis
        return nalgebra::Rotation3::from_matrix_unchecked(*r).scaled_axis();
    }
    let angle = sin.atan2(c);
    if sin < T::lit(1e-300) {
        return s;
    }
    s * (angle / sin)
}

/// Closest rotation in Frobenius norm (polar factor with determinant fixed to +1).
pub fn nearest_rotation<T: Real>(a: &Matrix3<T>) -> Matrix3<T> {
    let svd = a.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < T::zero() {
        d[(2, 2)] = -T::one();
    }
    u * d * vt
}

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]` (no scale).
pub fn rigid_align<T: Real>(src: &[Vector3<T>], dst: &[Vector3<T>]) -> Result<RigidPose<T>> {
    if src.len() != dst.len() {
        return Err(Error::CountMismatch(src.len(), dst.len()));
    }
    if src.len() < 3 {
        return Err(Error::TooFewPoints { got: src.len(), need: 3 });
    }
    let n = T::lit(src.len() as f64);
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (d - cd) * (s - cs).transpose();
    }
    let r = nearest_rotation(&h);
    Ok(RigidPose::new(r, cd - r * cs))
}

/// RQ decomposition of a 3×3 matrix: `a = r q` with `r` upper triangular with
/// positive diagonal and `q` orthogonal.
pub fn rq3<T: Real>(a: &Matrix3<T>) -> (Matrix3<T>, Matrix3<T>) {
    // flip rows/cols, QR, flip back
    let p = Matrix3::new(
        T::zero(), T::zero(), T::one(), //
        T::zero(), T::one(), T::zero(), //
        T::one(), T::zero(), T::zero(),
    );
    let qr = (p * a).transpose().qr();
    let (q0, r0) = (qr.q(), qr.r());
    let mut r = p * r0.transpose() * p;
    let mut q = p * q0.transpose();
    for i in 0..3 {
        if r[(i, i)] < T::zero() {
            for k in 0..3 {
                r[(k, i)] = -r[(k, i)];
                q[(i, k)] = -q[(i, k)];
            }
        }
    }
    (r, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_axis_round_trip() {
        for r in [
            Vector3::new(0.1, -0.2, 0.3),
            Vector3::new(1e-7, 2e-7, -1e-7),
            Vector3::new(2.0, 1.0, -0.5),
        ] {
            let m = rotation_from_angle_axis(&r);
            assert!((m.transpose() * m - Matrix3::identity()).norm() < 1e-14);
            assert!((angle_axis_from_rotation(&m) - r).norm() < 1e-12);
        }
    }

    #[test]
    fn series_matches_closed_form_at_the_switch() {
        let r = Vector3::new(7e-6, -3e-6, 5e-6);
        let exact = nalgebra::Rotation3::new(r).into_inner();
        assert!((rotation_from_angle_axis(&r) - exact).norm() < 1e-15);
    }

    #[test]
    fn nearest_rotation_fixes_reflection() {
        let a = Matrix3::from_diagonal(&Vector3::<f64>::new(1.0, 1.0, -1.0));
        let r = nearest_rotation(&a);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rigid_align_recovers_motion() {
        let pts: Vec<_> = (0..10)
            .map(|i| Vector3::new(i as f64, (i * i) as f64 * 0.1, (i as f64).sin()))
            .collect();
        let pose = RigidPose::new(
            rotation_from_angle_axis(&Vector3::new(0.3, -0.1, 0.7)),
            Vector3::new(5.0, -2.0, 1.0),
        );
        let moved: Vec<_> = pts.iter().map(|p| pose.transform_point(p)).collect();
        let est = rigid_align(&pts, &moved).unwrap();
        assert!((est.rotation - pose.rotation).norm() < 1e-12);
        assert!((est.translation - pose.translation).norm() < 1e-12);
    }

    #[test]
    fn rq_reassembles() {
        let k = Matrix3::new(1400.0, 0.0, 640.0, 0.0, 1390.0, 480.0, 0.0, 0.0, 1.0);
        let r = rotation_from_angle_axis(&Vector3::new(0.2, 0.4, -0.1));
        let (kk, rr) = rq3(&(k * r * 3.0));
        assert!((kk / kk[(2, 2)] - k).norm() < 1e-9);
        assert!((rr - r).norm() < 1e-12);
    }
}
