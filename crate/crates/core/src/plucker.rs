//! Plücker line algebra and conversions between point and line projection matrices.
//!
//! A line is stored as the 6-vector `(l1..l6)` with direction `ω = (l3, −l6, l5)`
//! and moment `ν = (l4, −l2, l1)`. Lines are kept unnormalized so that a line
//! spanned by `a, b` keeps `ω = a − b` and `ν = a × b` verbatim. Projection
//! matrices are projective and are stored normalized (unit Frobenius norm,
//! first significant entry positive).

use nalgebra::{Matrix3, Matrix3x4, Matrix3x6, RowVector4, RowVector6, Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A 3D line in Plücker coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PluckerLine<T: Real> {
    raw: Vector6<T>,
}

/// The dual Plücker vector `(l5, l6, l4, l3, l1, l2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualPlucker<T: Real> {
    raw: Vector6<T>,
}

impl<T: Real> PluckerLine<T> {
    /// Wraps a raw 6-vector without checking the self-intersection identity.
    pub fn from_raw_unchecked(raw: Vector6<T>) -> Self {
        Self { raw }
    }

    /// Wraps a raw 6-vector, rejecting zero vectors and vectors that are not lines.
    pub fn from_raw(raw: Vector6<T>) -> Result<Self> {
        let n2 = raw.norm_squared();
        if n2 == T::zero() {
            return Err(Error::InvalidInput("zero Plücker vector".into()));
        }
        let line = Self { raw };
        if line.self_intersection().abs() > T::lit(1e-9) * n2 {
            return Err(Error::InvalidInput(format!(
                "Plücker vector violates ω·ν = 0 (residual {:e})",
                line.self_intersection().to_f64_lossy()
            )));
        }
        Ok(line)
    }

    pub fn from_direction_moment(direction: Vector3<T>, moment: Vector3<T>) -> Self {
        let (w, v) = (direction, moment);
        Self {
            raw: Vector6::new(v.z, -v.y, w.x, v.x, w.z, -w.y),
        }
    }

    pub fn raw(&self) -> &Vector6<T> {
        &self.raw
    }

    /// ω = (l3, −l6, l5).
    pub fn direction(&self) -> Vector3<T> {
        Vector3::new(self.raw[2], -self.raw[5], self.raw[4])
    }

    /// ν = (l4, −l2, l1).
    pub fn moment(&self) -> Vector3<T> {
        Vector3::new(self.raw[3], -self.raw[1], self.raw[0])
    }

    pub fn dual(&self) -> DualPlucker<T> {
        DualPlucker {
            raw: dual_raw(&self.raw),
        }
    }

    /// `l1 l5 + l2 l6 + l3 l4`, zero for every genuine line.
    pub fn self_intersection(&self) -> T {
        let l = &self.raw;
        l[0] * l[4] + l[1] * l[5] + l[2] * l[3]
    }

    /// Point of the line closest to the origin.
    pub fn closest_point_to_origin(&self) -> Vector3<T> {
        let w = self.direction();
        w.cross(&self.moment()) / w.norm_squared()
    }

    /// Euclidean distance from `p` to the line.
    pub fn distance_to_point(&self, p: &Vector3<T>) -> T {
        let w = self.direction();
        // moment of the parallel line through p is w × p; the difference measures offset
        (self.moment() - w.cross(p)).norm() / w.norm()
    }

    /// The same line after the similarity `X ↦ s X + t`.
    pub fn similarity_transformed(&self, s: T, t: &Vector3<T>) -> Self {
        let w = self.direction();
        let v = self.moment();
        Self::from_direction_moment(w * s, v * (s * s) - t.cross(&w) * s)
    }
}

impl<T: Real> DualPlucker<T> {
    pub fn raw(&self) -> &Vector6<T> {
        &self.raw
    }

    pub fn dual(&self) -> PluckerLine<T> {
        PluckerLine {
            raw: dual_raw(&self.raw),
        }
    }
}

fn dual_raw<T: Real>(l: &Vector6<T>) -> Vector6<T> {
    Vector6::new(l[4], l[5], l[3], l[2], l[0], l[1])
}

/// Line through `a` and `b` with direction `a − b` and moment `a × b`.
pub fn line_from_points<T: Real>(a: &Vector3<T>, b: &Vector3<T>) -> Result<PluckerLine<T>> {
    let w = a - b;
    let sep = w.norm();
    if sep <= T::lit(1e-9) {
        return Err(Error::CoincidentPoints {
            separation: sep.to_f64_lossy(),
        });
    }
    Ok(PluckerLine::from_direction_moment(w, a.cross(b)))
}

/// `ω·ν′ + ν·ω′`; zero iff the two lines are coplanar.
pub fn reciprocal_product<T: Real>(l: &PluckerLine<T>, m: &PluckerLine<T>) -> T {
    l.raw.dot(m.dual().raw())
}

/// Scales a projective matrix to unit Frobenius norm with its first significant entry positive.
fn canonical<T: Real, const C: usize>(
    m: nalgebra::SMatrix<T, 3, C>,
) -> nalgebra::SMatrix<T, 3, C> {
    let n = m.norm();
    if n == T::zero() {
        return m;
    }
    let m = m / n;
    let tiny = T::lit(1e-12);
    // row-major scan so "first" matches the p_ij reading order
    for i in 0..3 {
        for j in 0..C {
            let v = m[(i, j)];
            if v.abs() > tiny {
                return if v < T::zero() { -m } else { m };
            }
        }
    }
    m
}

/// A 3×4 point projection matrix, defined up to scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointProjectionMatrix<T: Real> {
    entries: Matrix3x4<T>,
}

impl<T: Real> PointProjectionMatrix<T> {
    /// Normalizes and checks rank 3.
    pub fn new(entries: Matrix3x4<T>) -> Result<Self> {
        let sv = entries.singular_values();
        let max = sv.max();
        if max == T::zero() || sv.min() <= T::lit(1e-10) * max {
            return Err(Error::RankDeficient);
        }
        Ok(Self {
            entries: canonical(entries),
        })
    }

    pub fn entries(&self) -> &Matrix3x4<T> {
        &self.entries
    }

    pub fn project(&self, x: &Vector3<T>) -> Vector3<T> {
        self.entries * Vector4::new(x.x, x.y, x.z, T::one())
    }
}

/// A 3×6 line projection matrix, defined up to scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineProjectionMatrix<T: Real> {
    entries: Matrix3x6<T>,
}

impl<T: Real> LineProjectionMatrix<T> {
    /// Normalizes without enforcing the validity constraint (algebraic estimates).
    pub fn new_unchecked(entries: Matrix3x6<T>) -> Self {
        Self {
            entries: canonical(entries),
        }
    }

    /// Normalizes and checks `𝒫 𝒫̄ᵀ = 0` within `tol` relative to `‖𝒫‖²`.
    pub fn new(entries: Matrix3x6<T>, tol: T) -> Result<Self> {
        let pm = Self::new_unchecked(entries);
        let r = pm.validity_residual();
        if r > tol {
            return Err(Error::InvalidLineMatrix {
                residual: r.to_f64_lossy(),
            });
        }
        Ok(pm)
    }

    pub fn entries(&self) -> &Matrix3x6<T> {
        &self.entries
    }

    /// `𝒫 𝒫̄ᵀ`, with `𝒫̄` the row-wise dual.
    pub fn gram_with_dual(&self) -> Matrix3<T> {
        let p = &self.entries;
        Matrix3::from_fn(|i, j| {
            let rj = Vector6::from_iterator(p.row(j).iter().copied());
            p.row(i).dot(&dual_raw(&rj).transpose())
        })
    }

    /// `‖𝒫 𝒫̄ᵀ‖ / ‖𝒫‖²`.
    pub fn validity_residual(&self) -> T {
        let n2 = self.entries.norm_squared();
        self.gram_with_dual().norm() / n2
    }

    /// Image line `𝒫 L̄` as a homogeneous 3-vector.
    pub fn project_line(&self, l: &PluckerLine<T>) -> Result<Vector3<T>> {
        let out = self.entries * l.dual().raw();
        if out.norm() < T::lit(1e-12) * self.entries.norm() * l.raw().norm() {
            return Err(Error::DegenerateProjection);
        }
        Ok(out)
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            entries: self.entries * s,
        }
    }
}

fn minor_row<T: Real>(pj: &RowVector4<T>, pk: &RowVector4<T>) -> RowVector6<T> {
    let (j1, j2, j3, j4) = (pj[0], pj[1], pj[2], pj[3]);
    let (k1, k2, k3, k4) = (pk[0], pk[1], pk[2], pk[3]);
    RowVector6::new(
        j3 * k4 - j4 * k3,
        j4 * k2 - j2 * k4,
        j2 * k3 - j3 * k2,
        j1 * k4 - j4 * k1,
        j1 * k2 - j2 * k1,
        j1 * k3 - j3 * k1,
    )
}

fn plane_row<T: Real>(rj: &RowVector6<T>, rk: &RowVector6<T>) -> RowVector4<T> {
    let (j1, j2, j3, j4, j5, j6) = (rj[0], rj[1], rj[2], rj[3], rj[4], rj[5]);
    let (_, _, k3, _, k5, k6) = (rk[0], rk[1], rk[2], rk[3], rk[4], rk[5]);
    RowVector4::new(
        j5 * k6 - j6 * k5,
        j5 * k3 - j3 * k5,
        j6 * k3 - j3 * k6,
        j4 * k3 + j2 * k6 + j1 * k5,
    )
}

const ROW_PAIRS: [(usize, usize); 3] = [(1, 2), (0, 2), (0, 1)];

/// Row `i` of the result is the line where the planes of rows `j, k` of `P` meet.
pub fn point_to_line_matrix<T: Real>(p: &PointProjectionMatrix<T>) -> LineProjectionMatrix<T> {
    LineProjectionMatrix::new_unchecked(point_to_line_raw(p.entries()))
}

pub(crate) fn point_to_line_raw<T: Real>(p: &Matrix3x4<T>) -> Matrix3x6<T> {
    let mut out = Matrix3x6::zeros();
    for (i, &(j, k)) in ROW_PAIRS.iter().enumerate() {
        let sign = if i % 2 == 0 { T::one() } else { -T::one() };
        out.set_row(i, &(minor_row(&p.row(j).into_owned(), &p.row(k).into_owned()) * sign));
    }
    out
}

/// Inverse of [`point_to_line_matrix`] up to scale; rejects matrices off the validity manifold.
pub fn line_to_point_matrix<T: Real>(pm: &LineProjectionMatrix<T>) -> Result<PointProjectionMatrix<T>> {
    let r = pm.validity_residual();
    if r > T::lit(1e-6) {
        return Err(Error::InvalidLineMatrix {
            residual: r.to_f64_lossy(),
        });
    }
    PointProjectionMatrix::new(line_to_point_raw(pm.entries()))
}

/// The row-plane formula applied verbatim, with no validity check.
pub fn line_to_point_raw<T: Real>(pm: &Matrix3x6<T>) -> Matrix3x4<T> {
    let mut out = Matrix3x4::zeros();
    for (i, &(j, k)) in ROW_PAIRS.iter().enumerate() {
        let sign = if i % 2 == 0 { T::one() } else { -T::one() };
        out.set_row(i, &(plane_row(&pm.row(j).into_owned(), &pm.row(k).into_owned()) * sign));
    }
    out
}

/// Cosine similarity of two flattened matrices, sign-insensitive.
pub fn projective_similarity<T: Real, const C: usize>(
    a: &nalgebra::SMatrix<T, 3, C>,
    b: &nalgebra::SMatrix<T, 3, C>,
) -> T {
    (a.dot(b) / (a.norm() * b.norm())).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3x4, Vector3};

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn line_from_points_examples() {
        let l = line_from_points(&v(1., 0., 0.), &v(0., 0., 0.)).unwrap();
        assert_eq!(l.direction(), v(1., 0., 0.));
        assert_eq!(l.moment(), v(0., 0., 0.));

        let l = line_from_points(&v(0., 1., 0.), &v(1., 0., 0.)).unwrap();
        assert_eq!(l.direction(), v(-1., 1., 0.));
        assert_eq!(l.moment(), v(0., 0., -1.));

        let p = v(1., 2., 3.);
        assert!(matches!(
            line_from_points(&p, &p),
            Err(Error::CoincidentPoints { .. })
        ));
    }

    #[test]
    fn views_are_consistent_with_raw() {
        let l = line_from_points(&v(0.3, -1.2, 2.0), &v(4.0, 0.5, -1.0)).unwrap();
        let r = l.raw();
        assert_eq!(l.direction(), v(r[2], -r[5], r[4]));
        assert_eq!(l.moment(), v(r[3], -r[1], r[0]));
        assert!(l.self_intersection().abs() < 1e-12);
    }

    #[test]
    fn dual_examples() {
        let l = PluckerLine::from_raw_unchecked(Vector6::new(1., 2., 3., 4., 5., 6.));
        assert_eq!(*l.dual().raw(), Vector6::new(5., 6., 4., 3., 1., 2.));
        assert_eq!(l.dual().dual(), l);

        // a line through the origin has zero moment: slots 1, 2, 4 vanish; the dual moves them up front
        let o = line_from_points(&v(1., 2., 3.), &v(0., 0., 0.)).unwrap();
        let d = o.dual();
        assert_eq!(d.raw()[0], o.raw()[4]);
        assert_eq!(d.raw()[1], o.raw()[5]);
        assert_eq!(d.raw()[3], o.raw()[2]);
        assert_eq!([d.raw()[2], d.raw()[4], d.raw()[5]], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn reciprocal_product_examples() {
        let a = line_from_points(&v(1., 2., 0.), &v(0., 0., 0.)).unwrap();
        let b = line_from_points(&v(-3., 1., 5.), &v(0., 0., 0.)).unwrap();
        assert_eq!(reciprocal_product(&a, &b), 0.0);

        let xaxis = line_from_points(&v(1., 0., 0.), &v(0., 0., 0.)).unwrap();
        let parallel = line_from_points(&v(1., 0., 1.), &v(0., 0., 1.)).unwrap();
        assert_eq!(reciprocal_product(&xaxis, &parallel), 0.0);

        let skew = line_from_points(&v(0., 1., 1.), &v(0., 0., 1.)).unwrap();
        // ω'=(0,1,0), ν'=(0,1,1)×(0,0,1)=(1,0,0) → ω·ν' = 1
        assert_eq!(skew.moment(), v(1., 0., 0.));
        assert_eq!(reciprocal_product(&xaxis, &skew).abs(), 1.0);
    }

    #[test]
    fn identity_camera_conversion() {
        let p = PointProjectionMatrix::new(Matrix3x4::identity()).unwrap();
        let pm = point_to_line_matrix(&p);
        // rows are the x-, y- and z-axes (the y-axis carries the (−1)^{i+1} sign)
        let e = pm.entries() * 3f64.sqrt();
        let expect = Matrix3x6::new(
            0., 0., 1., 0., 0., 0., //
            0., 0., 0., 0., 0., -1., //
            0., 0., 0., 0., 1., 0.,
        );
        assert!((e - expect).norm() < 1e-12, "{e}");
        let back = line_to_point_matrix(&pm).unwrap();
        assert!((projective_similarity(back.entries(), &Matrix3x4::identity()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn line_through_center_is_degenerate() {
        let p = PointProjectionMatrix::new(Matrix3x4::identity()).unwrap();
        let pm = point_to_line_matrix(&p);
        let l = line_from_points(&v(1., 2., 3.), &v(2., 4., 6.)).unwrap();
        assert_eq!(pm.project_line(&l), Err(Error::DegenerateProjection));
    }

    #[test]
    fn project_line_matches_join_of_projected_points() {
        let p = PointProjectionMatrix::new(Matrix3x4::identity()).unwrap();
        let pm = point_to_line_matrix(&p);
        let (x, y) = (v(1., 0., 1.), v(1., 5., 1.));
        let line = pm.project_line(&line_from_points(&x, &y).unwrap()).unwrap();
        let join = p.project(&x).cross(&p.project(&y));
        assert!(projective_similarity(&line, &join) > 1.0 - 1e-12);
        let l5 = pm.scaled(5.0).project_line(&line_from_points(&x, &y).unwrap()).unwrap();
        assert!((l5 - line * 5.0).norm() < 1e-12);
    }

    #[test]
    fn invalid_line_matrix_is_rejected() {
        let p = PointProjectionMatrix::new(Matrix3x4::new(
            800., 0., 320., 10., 0., 790., 240., -5., 0., 0., 1., 2.,
        ))
        .unwrap();
        let mut e = *point_to_line_matrix(&p).entries();
        e[(0, 0)] += 0.1 * e.norm();
        let bad = LineProjectionMatrix::new_unchecked(e);
        assert!(matches!(
            line_to_point_matrix(&bad),
            Err(Error::InvalidLineMatrix { .. })
        ));
    }

    #[test]
    fn rank_deficient_point_matrix() {
        let m = Matrix3x4::new(1., 2., 3., 4., 2., 4., 6., 8., 0., 1., 0., 1.);
        assert_eq!(PointProjectionMatrix::new(m), Err(Error::RankDeficient));
    }

    #[test]
    fn distance_and_transform() {
        let l = line_from_points(&v(0., 0., 1.), &v(1., 0., 1.)).unwrap();
        assert!((l.distance_to_point(&v(5., 2., 1.)) - 2.0).abs() < 1e-12);
        let t = v(1., -2., 3.);
        let m = l.similarity_transformed(2.0, &t);
        let direct = line_from_points(&(v(0., 0., 1.) * 2.0 + t), &(v(1., 0., 1.) * 2.0 + t)).unwrap();
        assert!((m.raw() - direct.raw()).norm() < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let l = line_from_points(&Vector3::new(0f32, 1., 0.), &Vector3::new(1f32, 0., 0.)).unwrap();
        assert_eq!(l.direction(), Vector3::new(-1f32, 1., 0.));
        assert_eq!(reciprocal_product(&l, &l), 0.0);
    }
}
