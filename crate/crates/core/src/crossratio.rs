//! Surface points from the cross-ratio of the incident ray, and joint
//! refinement of the ten camera parameters by reprojection error.
//!
//! On the incident ray the lifted points `X0, X1, X2` and the surface point
//! `M` are collinear, so their cross-ratio equals that of their images
//! `x0, x1, x2, m`. Positions are signed lengths along `u = (X0 − X2)/‖X0 − X2‖`
//! measured from `X2`, and `M = X2 + s u`.

use nalgebra::{DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, Intrinsics};
use crate::error::{Error, Result};
use crate::geometry::{angle_axis_from_rotation, rotation_from_angle_axis, RigidPose};
use crate::lm::{self, LmConfig, LmReport};
use crate::plane_pose::PlanePosePair;
use crate::projection::{CalibrationEstimate, EstimateSource};
use crate::sim::ReflectionTriple;

/// Relative size of the cross-ratio denominator below which `s` is rejected.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-10;

/// Why a triple produced no surface point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Valid,
    DegenerateCrossRatio,
    CoincidentImages,
    CoincidentLift,
    /// A lifted point lies on the camera's depth plane, or `M` is behind the camera.
    BehindCamera,
    DegenerateNormal,
}

impl PointStatus {
    pub fn is_valid(&self) -> bool {
        matches!(self, PointStatus::Valid)
    }
}

/// Reconstructed points and normals, one entry per input triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceEstimate {
    pub pixels: Vec<Vector2<f64>>,
    pub points: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    /// Signed distance from `X2` to `M` along `X2 → X0`, mm.
    pub s_values: Vec<f64>,
    pub valid: Vec<PointStatus>,
}

impl SurfaceEstimate {
    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|v| v.is_valid()).count()
    }
}

/// The 10-vector `(fx, fy, u0, v0, rx, ry, rz, tx, ty, tz)`; rotation as angle-axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationParams {
    pub theta: [f64; 10],
}

impl OptimizationParams {
    pub fn from_estimate(e: &CalibrationEstimate) -> Self {
        let r = angle_axis_from_rotation(&e.rotation);
        let (k, t) = (&e.intrinsics, &e.translation);
        Self { theta: [k.fx, k.fy, k.u0, k.v0, r.x, r.y, r.z, t.x, t.y, t.z] }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let mut theta = [0.0; 10];
        theta.copy_from_slice(&v[..10]);
        Self { theta }
    }

    pub fn camera(&self) -> Camera<f64> {
        let t = &self.theta;
        Camera {
            intrinsics: Intrinsics { fx: t[0], fy: t[1], u0: t[2], v0: t[3] },
            pose: RigidPose::new(
                rotation_from_angle_axis(&Vector3::new(t[4], t[5], t[6])),
                Vector3::new(t[7], t[8], t[9]),
            ),
        }
    }

    pub fn to_estimate(&self, source: EstimateSource) -> CalibrationEstimate {
        let c = self.camera();
        CalibrationEstimate { intrinsics: c.intrinsics, rotation: c.pose.rotation, translation: c.pose.translation, source }
    }
}

/// World points of a triple under the given plane poses.
pub fn lift_triple(t: &ReflectionTriple, poses: &PlanePosePair) -> [Vector3<f64>; 3] {
    [Vector3::new(t.x[0].x, t.x[0].y, 0.0), poses.pose1.lift(&t.x[1]), poses.pose2.lift(&t.x[2])]
}

/// Signed distance `s` of `M` from `X2` along `X2 → X0` such that the
/// cross-ratio of `(M, X0; X1, X2)` equals that of `(m, x0; x1, x2)`.
///
/// `X1` is taken at its orthogonal projection onto the line `X2 X0`.
pub fn cross_ratio_s(lifted: &[Vector3<f64>; 3], images: &[Vector2<f64>; 3], m: &Vector2<f64>) -> Result<f64> {
    let [x0w, x1w, x2w] = lifted;
    let [x0, x1, x2] = images;
    let span = x0w - x2w;
    let d = span.norm();
    if d == 0.0 {
        return Err(Error::InvalidInput("X0 and X2 coincide".into()));
    }
    let a = (x1w - x2w).dot(&span) / d;
    let iu = x0 - x2;
    let t0 = iu.norm();
    if t0 <= 1e-6 || (x1 - x0).norm() <= 1e-6 || (x1 - x2).norm() <= 1e-6 {
        return Err(Error::InvalidInput("image points must be pairwise distinct".into()));
    }
    let t1 = (x1 - x2).dot(&iu) / t0;
    let tm = (m - x2).dot(&iu) / t0;
    // cross-ratio r = ((t1 − tm) t0) / ((t1 − t0) tm); solve (a − s) D / ((a − D) s) = r for s
    let num = a * d * tm * (t1 - t0);
    let p = d * tm * (t1 - t0);
    let q = (t1 - tm) * t0 * (d - a);
    let den = p - q;
    let scale = p.abs() + q.abs();
    if scale == 0.0 {
        return Ok(0.0);
    }
    if den.abs() < DEGENERATE_DENOMINATOR * scale {
        return Err(Error::DegenerateCrossRatio);
    }
    Ok(num / den)
}

/// `M = X2 + s (X0 − X2) / ‖X0 − X2‖`.
pub fn reconstruct_point(lifted: &[Vector3<f64>; 3], s: f64) -> Vector3<f64> {
    let span = lifted[0] - lifted[2];
    lifted[2] + span * (s / span.norm())
}

/// Point, signed distance and status for one triple under a camera.
fn surface_point(cam: &Camera<f64>, t: &ReflectionTriple, poses: &PlanePosePair) -> (Vector3<f64>, f64, PointStatus) {
    let mut lifted = lift_triple(t, poses);
    let span = lifted[0] - lifted[2];
    if span.norm() < 1e-9 {
        return (lifted[2], 0.0, PointStatus::CoincidentLift);
    }
    // noisy lifts are not exactly collinear; X1 is replaced by its foot on X2X0
    // so that its image agrees with the along-line length used in 3D
    let u = span.normalize();
    lifted[1] = lifted[2] + u * (lifted[1] - lifted[2]).dot(&u);
    // the cross-ratio is projective, so lifted points behind the camera still count
    let proj: Option<Vec<Vector2<f64>>> = lifted.iter().map(|x| cam.project_projective(x)).collect();
    let Some(proj) = proj else {
        return (lifted[2], 0.0, PointStatus::BehindCamera);
    };
    match cross_ratio_s(&lifted, &[proj[0], proj[1], proj[2]], &t.pixel) {
        Ok(s) => (reconstruct_point(&lifted, s), s, PointStatus::Valid),
        Err(Error::InvalidInput(_)) => (lifted[2], 0.0, PointStatus::CoincidentImages),
        Err(_) => (lifted[2], 0.0, PointStatus::DegenerateCrossRatio),
    }
}

/// Residuals `m − P(θ) M` (two per triple) with a validity mask; masked entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub values: DVector<f64>,
    pub mask: Vec<bool>,
}

impl Residuals {
    pub fn n_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Only the entries of valid triples, in order.
    pub fn compact(&self) -> DVector<f64> {
        let v: Vec<f64> = self
            .mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .flat_map(|(i, _)| [self.values[2 * i], self.values[2 * i + 1]])
            .collect();
        DVector::from_vec(v)
    }

    pub fn rms(&self) -> f64 {
        let n = self.n_valid();
        if n == 0 {
            return 0.0;
        }
        (self.values.norm_squared() / (2 * n) as f64).sqrt()
    }
}

/// Projects the lifted correspondences with `P(θ)`, solves the cross-ratio for
/// `M` against the observed pixel, and returns `m − P(θ) M`.
pub fn reproject_residuals(theta: &OptimizationParams, triples: &[ReflectionTriple], poses: &PlanePosePair) -> Residuals {
    let cam = theta.camera();
    let mut values = DVector::zeros(2 * triples.len());
    let mut mask = vec![false; triples.len()];
    for (i, t) in triples.iter().enumerate() {
        let (m, _, status) = surface_point(&cam, t, poses);
        if !status.is_valid() {
            continue;
        }
        if let Some(p) = cam.project(&m) {
            let r = t.pixel - p;
            values[2 * i] = r.x;
            values[2 * i + 1] = r.y;
            mask[i] = true;
        }
    }
    Residuals { values, mask }
}

/// `normalize(normalize(C − M) + normalize(X0 − M))`, facing the camera.
pub fn bisector_normal(m: &Vector3<f64>, camera_center: &Vector3<f64>, x0: &Vector3<f64>) -> Option<Vector3<f64>> {
    let a = (camera_center - m).normalize();
    let b = (x0 - m).normalize();
    let s = a + b;
    if s.norm() < 1e-9 {
        return None;
    }
    let n = s.normalize();
    Some(if n.dot(&a) < 0.0 { -n } else { n })
}

/// Fills the normals of a surface estimate from the camera center and the lifted pose-0 points.
pub fn estimate_normals(surface: &mut SurfaceEstimate, camera_center: &Vector3<f64>, triples: &[ReflectionTriple]) {
    for (i, t) in triples.iter().enumerate() {
        if !surface.valid[i].is_valid() {
            continue;
        }
        let x0 = Vector3::new(t.x[0].x, t.x[0].y, 0.0);
        match bisector_normal(&surface.points[i], camera_center, &x0) {
            Some(n) => surface.normals[i] = n,
            None => surface.valid[i] = PointStatus::DegenerateNormal,
        }
    }
}

/// Reconstructs every triple under a calibrated camera.
pub fn reconstruct_surface(est: &CalibrationEstimate, triples: &[ReflectionTriple], poses: &PlanePosePair) -> SurfaceEstimate {
    let cam = est.camera();
    let n = triples.len();
    let mut surface = SurfaceEstimate {
        pixels: triples.iter().map(|t| t.pixel).collect(),
        points: Vec::with_capacity(n),
        normals: vec![Vector3::zeros(); n],
        s_values: Vec::with_capacity(n),
        valid: Vec::with_capacity(n),
    };
    for t in triples {
        let (m, s, status) = surface_point(&cam, t, poses);
        surface.points.push(m);
        surface.s_values.push(s);
        surface.valid.push(status);
    }
    estimate_normals(&mut surface, &cam.center(), triples);
    surface
}

/// Levenberg-Marquardt over θ starting from `init`; plane poses stay fixed.
pub fn refine(
    init: &CalibrationEstimate,
    triples: &[ReflectionTriple],
    poses: &PlanePosePair,
    cfg: &LmConfig,
) -> Result<(CalibrationEstimate, SurfaceEstimate, LmReport)> {
    let theta0 = OptimizationParams::from_estimate(init);
    let f = |x: &DVector<f64>| reproject_residuals(&OptimizationParams::from_slice(x.as_slice()), triples, poses).values;
    let (x, report) = lm::minimize(f, &DVector::from_column_slice(&theta0.theta), cfg)?;
    let est = OptimizationParams::from_slice(x.as_slice()).to_estimate(EstimateSource::Refined);
    let surface = reconstruct_surface(&est, triples, poses);
    Ok((est, surface, report))
}
