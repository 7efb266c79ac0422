//! Camera recovery from pixel / 3D-line incidences.
//!
//! Each triple gives a pixel `x` and the 3D line `L` through its lifted pose-0
//! and pose-2 points; the line projection matrix satisfies `xᵀ 𝒫 L̄ = 0`.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x4, Matrix3x6, Matrix6, Vector2, Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, Intrinsics};
use crate::error::{Error, Result};
use crate::geometry::{nearest_rotation, rotation_from_angle_axis, rq3, RigidPose};
use crate::lm::{minimize, LmConfig};
use crate::linalg::svd_ascending;
use crate::plane_pose::PlanePosePair;
use crate::plucker::{line_from_points, line_to_point_raw, point_to_line_raw, LineProjectionMatrix, PluckerLine};
use crate::sim::ReflectionTriple;

/// Lifts closer than this (mm) do not define a line.
pub const MIN_LIFT_SEPARATION: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineObservation {
    /// `(u, v, 1)`.
    pub pixel: Vector3<f64>,
    pub line: PluckerLine<f64>,
    /// Lifted pose-0 and pose-2 points spanning the line.
    pub endpoints: [Vector3<f64>; 2],
    /// Index of the source triple.
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineObservationSet {
    pub items: Vec<LineObservation>,
    pub skipped: usize,
}

/// Where a calibration estimate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateSource {
    /// Decomposition of the unconstrained linear `𝒫`.
    Linear,
    /// Focal sweep over the constrained solve.
    Constrained,
    /// Reprojection-error refinement.
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEstimate {
    pub intrinsics: Intrinsics<f64>,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub source: EstimateSource,
}

impl CalibrationEstimate {
    pub fn camera(&self) -> Camera<f64> {
        Camera { intrinsics: self.intrinsics, pose: RigidPose::new(self.rotation, self.translation) }
    }

    pub fn line_projection(&self) -> LineProjectionMatrix<f64> {
        LineProjectionMatrix::new_unchecked(point_to_line_raw(&self.camera().projection_matrix()))
    }
}

/// One `(pixel, line)` item per triple, using the lifted pose-0 and pose-2 points.
pub fn build_observations(triples: &[ReflectionTriple], poses: &PlanePosePair) -> LineObservationSet {
    let mut items = Vec::with_capacity(triples.len());
    let mut skipped = 0;
    for (k, t) in triples.iter().enumerate() {
        let a = Vector3::new(t.x[0].x, t.x[0].y, 0.0);
        let b = poses.pose2.lift(&t.x[2]);
        if (a - b).norm() < MIN_LIFT_SEPARATION {
            skipped += 1;
            continue;
        }
        let line = line_from_points(&a, &b).expect("separation checked");
        items.push(LineObservation {
            pixel: Vector3::new(t.pixel.x, t.pixel.y, 1.0),
            line,
            endpoints: [a, b],
            source: k,
        });
    }
    LineObservationSet { items, skipped }
}

/// Similarity `X ↦ s (X − c)` bringing the line endpoints to unit RMS spread.
fn world_normalization(obs: &LineObservationSet) -> (f64, Vector3<f64>) {
    let pts = obs.items.iter().flat_map(|o| o.endpoints.iter());
    let n = 2.0 * obs.items.len() as f64;
    let c = pts.clone().fold(Vector3::zeros(), |a, p| a + p) / n;
    let ms = pts.map(|p| (p - c).norm_squared()).sum::<f64>() / n;
    let s = if ms > 0.0 { (3.0 / ms).sqrt() } else { 1.0 };
    (s, c)
}

/// Matrix `G` with `dual(L') = G dual(L)` for the line `L'` mapped by `X ↦ s (X − c)`.
fn dual_transform(s: f64, c: &Vector3<f64>) -> Matrix6<f64> {
    let t = -c * s;
    let perm = |v: &Vector6<f64>| Vector6::new(v[4], v[5], v[3], v[2], v[0], v[1]);
    let mut g = Matrix6::zeros();
    for k in 0..6 {
        // column k: image of the k-th dual basis vector
        let mut e = Vector6::zeros();
        e[k] = 1.0;
        let l = PluckerLine::from_raw_unchecked(perm(&e)).similarity_transformed(s, &t);
        g.set_column(k, &perm(l.raw()));
    }
    g
}

/// Least right singular vector of the stacked incidences `x̂ᵀ ⊗ L̄ᵀ` reshaped to 3×6, plus `σ_min`.
fn incidence_nullvector(rows: &[(Vector3<f64>, Vector6<f64>)]) -> Result<(Matrix3x6<f64>, f64)> {
    let mut z = DMatrix::zeros(rows.len(), 18);
    for (r, (x, l)) in rows.iter().enumerate() {
        for i in 0..3 {
            for j in 0..6 {
                z[(r, 6 * i + j)] = x[i] * l[j];
            }
        }
    }
    let (sv, v) = svd_ascending(&z);
    let max = sv.last().copied().unwrap_or(0.0);
    if !(sv[1] > 1e-12 * max) {
        return Err(Error::RankDeficientZ);
    }
    Ok((Matrix3x6::from_fn(|i, j| v[(6 * i + j, 0)]), sv[0]))
}

/// Algebraic least-squares `𝒫` (unit norm), without the validity constraint.
///
/// Pixels and 3D endpoints are conditioned by similarities before assembling
/// `Z`; the solution is mapped back to the original coordinates.
pub fn solve_linear(obs: &LineObservationSet) -> Result<LineProjectionMatrix<f64>> {
    if obs.items.len() < 17 {
        return Err(Error::TooFewObservations { got: obs.items.len(), need: 17 });
    }
    let n = obs.items.len() as f64;
    let cpx = obs.items.iter().fold(Vector2::zeros(), |a, o| a + o.pixel.xy()) / n;
    let mpx = obs.items.iter().map(|o| (o.pixel.xy() - cpx).norm_squared()).sum::<f64>() / n;
    let k = if mpx > 0.0 { (2.0 / mpx).sqrt() } else { 1.0 };
    let tpx = Matrix3::new(k, 0.0, -k * cpx.x, 0.0, k, -k * cpx.y, 0.0, 0.0, 1.0);
    let (s, c) = world_normalization(obs);
    let g = dual_transform(s, &c);
    let rows: Vec<_> = obs
        .items
        .iter()
        .map(|o| (tpx * o.pixel, g * o.line.dual().raw()))
        .collect();
    let (pn, _) = incidence_nullvector(&rows)?;
    Ok(LineProjectionMatrix::new_unchecked(tpx.transpose() * pn * g))
}

/// Sum of squared pixel distances from each pixel to its projected line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineCost {
    pub cost: f64,
    /// Items whose image line has no direction (excluded from the sum).
    pub degenerate: usize,
}

pub fn point_line_cost(pm: &LineProjectionMatrix<f64>, obs: &LineObservationSet) -> LineCost {
    let mut cost = 0.0;
    let mut degenerate = 0;
    for o in &obs.items {
        let l = pm.entries() * o.line.dual().raw();
        let ab = l.x * l.x + l.y * l.y;
        if ab < 1e-20 * l.norm_squared() || ab == 0.0 {
            degenerate += 1;
            continue;
        }
        let r = o.pixel.dot(&l);
        cost += r * r / ab;
    }
    LineCost { cost, degenerate }
}

/// Result of the constrained solve at fixed intrinsics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedSolution {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    /// Recovered scale `λ` of `λ [R T]` (after fixing `t3 > 0`).
    pub lambda: f64,
    /// Largest relative deviation of a rotation-row norm from `|λ|`.
    pub row_norm_spread: f64,
    /// `det` of the rotation block before projection is positive.
    pub proper: bool,
}

impl ConstrainedSolution {
    /// Row norms deviate by more than 10% from a common scale.
    pub fn non_rotation(&self) -> bool {
        self.row_norm_spread > 0.1
    }
}

/// Recovers `[R T]` for known `(fx, fy, u0, v0)`.
///
/// With the image origin moved to the principal point, `𝒫 = D' 𝒫'` where
/// `D' = diag(fy, fx, fx fy)` acts on rows, so `Z 𝒫 = Z D p'`. Row scaling by
/// `fx fy` turns each row of `Z D` into `x̂ ⊗ L̄` with `x̂ = K⁻¹ x`, which is
/// what is assembled here.
pub fn solve_constrained(intr: &Intrinsics<f64>, obs: &LineObservationSet) -> Result<ConstrainedSolution> {
    if obs.items.len() < 17 {
        return Err(Error::TooFewObservations { got: obs.items.len(), need: 17 });
    }
    let (s, c) = world_normalization(obs);
    let g = dual_transform(s, &c);
    let rows: Vec<_> = obs
        .items
        .iter()
        .map(|o| {
            let x = Vector3::new((o.pixel.x - intr.u0) / intr.fx, (o.pixel.y - intr.v0) / intr.fy, 1.0);
            (x, g * o.line.dual().raw())
        })
        .collect();
    let (pn, _) = incidence_nullvector(&rows)?;
    let p_line = pn * g;
    let p: Matrix3x4<f64> = line_to_point_raw(&p_line);
    let block = p.fixed_view::<3, 3>(0, 0).into_owned();
    let norms = [block.row(0).norm(), block.row(1).norm(), block.row(2).norm()];
    let mean = (norms[0] + norms[1] + norms[2]) / 3.0;
    if !(mean > 0.0) {
        return Err(Error::RankDeficientZ);
    }
    let t = p.column(3) / mean;
    if t.z.abs() <= 1e-12 * t.norm() {
        return Err(Error::CheiralityUnresolvable { t3: t.z });
    }
    let sign = t.z.signum();
    let r_raw = block * (sign / mean);
    let spread = norms.iter().map(|n| (n / mean - 1.0).abs()).fold(0.0, f64::max);
    Ok(ConstrainedSolution {
        rotation: nearest_rotation(&r_raw),
        translation: t * sign,
        lambda: mean * sign,
        row_norm_spread: spread,
        proper: r_raw.determinant() > 0.0,
    })
}

/// Splits a linear `𝒫` into intrinsics and pose via the point projection
/// matrix and an RQ decomposition (skew discarded).
pub fn decompose_linear(pm: &LineProjectionMatrix<f64>) -> Result<CalibrationEstimate> {
    let mut p = line_to_point_raw(pm.entries());
    let (_, q) = rq3(&p.fixed_view::<3, 3>(0, 0).into_owned());
    if q.determinant() < 0.0 {
        p = -p;
    }
    let (k, q) = rq3(&p.fixed_view::<3, 3>(0, 0).into_owned());
    if !(k[(2, 2)] > 0.0) {
        return Err(Error::RankDeficient);
    }
    let t = k.try_inverse().ok_or(Error::RankDeficient)? * p.column(3);
    let k = k / k[(2, 2)];
    Ok(CalibrationEstimate {
        intrinsics: Intrinsics::new(k[(0, 0)], k[(1, 1)], k[(0, 2)], k[(1, 2)])?,
        rotation: nearest_rotation(&q),
        translation: t,
        source: EstimateSource::Linear,
    })
}

/// Focal sweep settings; the range is relative to the image diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub min_factor: f64,
    pub max_factor: f64,
    pub samples: usize,
    pub rel_tol: f64,
    /// Refine `R, T` at each sampled focal length by minimizing the point-to-line cost.
    pub polish_pose: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { min_factor: 0.15, max_factor: 10.0, samples: 120, rel_tol: 1e-3, polish_pose: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub focal: Vec<f64>,
    /// Point-to-line cost per sample; infinite where the solve failed.
    pub cost: Vec<f64>,
    pub best_index: usize,
    pub refined_focal: f64,
    pub refined_cost: f64,
    pub solution: ConstrainedSolution,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("focal,cost\n");
        for (f, c) in self.focal.iter().zip(&self.cost) {
            s.push_str(&format!("{f:.16e},{c:.16e}\n"));
        }
        s
    }
}

/// Signed pixel distances from each observation to the image of its line; zero where the image line degenerates.
pub fn point_line_residuals(pm: &LineProjectionMatrix<f64>, obs: &LineObservationSet) -> DVector<f64> {
    DVector::from_iterator(
        obs.items.len(),
        obs.items.iter().map(|o| {
            let l = pm.entries() * o.line.dual().raw();
            let ab = l.x * l.x + l.y * l.y;
            if ab < 1e-20 * l.norm_squared() || ab == 0.0 {
                0.0
            } else {
                o.pixel.dot(&l) / ab.sqrt()
            }
        }),
    )
}

fn polish_pose(intr: &Intrinsics<f64>, sol: &mut ConstrainedSolution, obs: &LineObservationSet) {
    let r0 = sol.rotation;
    let pose = |x: &DVector<f64>| {
        let r = r0 * rotation_from_angle_axis(&Vector3::new(x[0], x[1], x[2]));
        CalibrationEstimate {
            intrinsics: *intr,
            rotation: r,
            translation: Vector3::new(x[3], x[4], x[5]),
            source: EstimateSource::Constrained,
        }
    };
    let t = sol.translation;
    let x0 = DVector::from_vec(vec![0.0, 0.0, 0.0, t.x, t.y, t.z]);
    let cfg = LmConfig { max_iterations: 10, ..LmConfig::default() };
    if let Ok((x, _)) = minimize(|x| point_line_residuals(&pose(x).line_projection(), obs), &x0, &cfg) {
        let est = pose(&x);
        sol.rotation = est.rotation;
        sol.translation = est.translation;
    }
}

fn evaluate_focal(f: f64, center: (f64, f64), obs: &LineObservationSet, polish: bool) -> Option<(f64, ConstrainedSolution)> {
    let intr = Intrinsics { fx: f, fy: f, u0: center.0, v0: center.1 };
    let mut sol = solve_constrained(&intr, obs).ok()?;
    if polish {
        polish_pose(&intr, &mut sol, obs);
    }
    let est = CalibrationEstimate {
        intrinsics: intr,
        rotation: sol.rotation,
        translation: sol.translation,
        source: EstimateSource::Constrained,
    };
    let c = point_line_cost(&est.line_projection(), obs);
    c.cost.is_finite().then_some((c.cost, sol))
}

/// Principal point of an image of the given size.
pub fn image_center(image_size: (u32, u32)) -> (f64, f64) {
    ((image_size.0 as f64 - 1.0) / 2.0, (image_size.1 as f64 - 1.0) / 2.0)
}

/// Log-spaced search over a common focal length with the principal point at
/// the image center, then golden-section refinement around the best sample.
pub fn focal_sweep(
    obs: &LineObservationSet,
    image_size: (u32, u32),
    cfg: &SweepConfig,
) -> Result<(CalibrationEstimate, SweepReport)> {
    if cfg.samples < 3 || !(cfg.min_factor > 0.0 && cfg.max_factor > cfg.min_factor) {
        return Err(Error::InvalidInput("sweep range needs ≥ 3 samples and 0 < min < max".into()));
    }
    let center = image_center(image_size);
    let diag = ((image_size.0 as f64).powi(2) + (image_size.1 as f64).powi(2)).sqrt();
    let (lo, hi) = ((cfg.min_factor * diag).ln(), (cfg.max_factor * diag).ln());
    let focal: Vec<f64> = (0..cfg.samples)
        .map(|i| (lo + (hi - lo) * i as f64 / (cfg.samples - 1) as f64).exp())
        .collect();
    let evals: Vec<Option<(f64, ConstrainedSolution)>> =
        focal.par_iter().map(|&f| evaluate_focal(f, center, obs, cfg.polish_pose)).collect();
    let cost: Vec<f64> = evals.iter().map(|e| e.map_or(f64::INFINITY, |e| e.0)).collect();
    // first minimum wins ties (lowest f)
    let best = (0..cost.len()).fold(0, |b, i| if cost[i] < cost[b] { i } else { b });
    if !cost[best].is_finite() || best == 0 || best == cost.len() - 1 {
        return Err(Error::SweepNoMinimum);
    }
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (focal[best - 1].ln(), focal[best + 1].ln());
    let g = |x: f64| evaluate_focal(x.exp(), center, obs, cfg.polish_pose).map_or(f64::INFINITY, |e| e.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (g(x1), g(x2));
    while (b - a) > cfg.rel_tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = g(x2);
        }
    }
    let mut f_star = ((a + b) / 2.0).exp();
    let mut eval = evaluate_focal(f_star, center, obs, cfg.polish_pose);
    if eval.is_none_or(|e| e.0 > cost[best]) {
        f_star = focal[best];
        eval = evals[best];
    }
    let (c_star, sol) = eval.expect("best sample is finite");
    let est = CalibrationEstimate {
        intrinsics: Intrinsics { fx: f_star, fy: f_star, u0: center.0, v0: center.1 },
        rotation: sol.rotation,
        translation: sol.translation,
        source: EstimateSource::Constrained,
    };
    Ok((
        est,
        SweepReport { focal, cost, best_index: best, refined_focal: f_star, refined_cost: c_star, solution: sol },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_from_angle_axis;

    fn camera() -> Camera<f64> {
        Camera {
            intrinsics: Intrinsics { fx: 1400.0, fy: 1380.0, u0: 650.0, v0: 470.0 },
            pose: RigidPose::new(rotation_from_angle_axis(&Vector3::new(0.2, -0.3, 0.1)), Vector3::new(30.0, -20.0, 900.0)),
        }
    }

    /// Lines through random points, each paired with the projection of a point on the line.
    fn synthetic_obs(cam: &Camera<f64>, n: usize) -> LineObservationSet {
        let mut items = Vec::new();
        for k in 0..n {
            let f = k as f64;
            let a = Vector3::new((f * 0.7).sin() * 400.0, (f * 1.3).cos() * 300.0, (f * 0.37).sin() * 100.0);
            let b = a + Vector3::new((f * 2.1).cos() * 200.0, (f * 0.9).sin() * 150.0, -250.0 - 50.0 * (f * 0.5).cos());
            let on = a * 0.3 + b * 0.7;
            let px = cam.project(&on).unwrap();
            items.push(LineObservation {
                pixel: Vector3::new(px.x, px.y, 1.0),
                line: line_from_points(&a, &b).unwrap(),
                endpoints: [a, b],
                source: k,
            });
        }
        LineObservationSet { items, skipped: 0 }
    }

    #[test]
    fn linear_solution_is_exact_on_clean_data() {
        let cam = camera();
        let obs = synthetic_obs(&cam, 60);
        let pm = solve_linear(&obs).unwrap();
        let gt = LineProjectionMatrix::new_unchecked(point_to_line_raw(&cam.projection_matrix()));
        assert!((pm.entries() - gt.entries()).norm() < 1e-8);
        assert!(point_line_cost(&pm, &obs).cost < 1e-14);
        let est = decompose_linear(&pm).unwrap();
        assert!((est.intrinsics.fx / 1400.0 - 1.0).abs() < 1e-8);
        assert!((est.translation - cam.pose.translation).norm() < 1e-6);
    }

    #[test]
    fn duplicated_observations_give_the_same_solution() {
        let obs = synthetic_obs(&camera(), 40);
        let mut dup = obs.clone();
        dup.items.extend(obs.items.clone());
        let (a, b) = (solve_linear(&obs).unwrap(), solve_linear(&dup).unwrap());
        assert!((a.entries() - b.entries()).norm() < 1e-10);
    }

    #[test]
    fn cost_is_scale_invariant_and_minimal_at_truth() {
        let cam = camera();
        let obs = synthetic_obs(&cam, 40);
        let gt = LineProjectionMatrix::new_unchecked(point_to_line_raw(&cam.projection_matrix()));
        let c0 = point_line_cost(&gt, &obs).cost;
        assert!(c0 < 1e-14);
        assert!((point_line_cost(&gt.scaled(-3.5), &obs).cost - c0).abs() < 1e-14);
        for k in 0..10 {
            let dir = Matrix3x6::from_fn(|i, j| ((k * 31 + i * 7 + j * 3) as f64).sin());
            let moved = LineProjectionMatrix::new_unchecked(gt.entries() + dir * 1e-4);
            assert!(point_line_cost(&moved, &obs).cost > c0);
        }
    }

    #[test]
    fn constrained_solution_recovers_pose() {
        let cam = camera();
        let obs = synthetic_obs(&cam, 60);
        let sol = solve_constrained(&cam.intrinsics, &obs).unwrap();
        assert!(sol.proper && sol.translation.z > 0.0);
        assert!((sol.rotation - cam.pose.rotation).norm() < 1e-10);
        assert!((sol.translation - cam.pose.translation).norm() / cam.pose.translation.norm() < 1e-10);
    }

    #[test]
    fn too_few_observations() {
        let obs = synthetic_obs(&camera(), 10);
        assert!(matches!(solve_linear(&obs), Err(Error::TooFewObservations { .. })));
    }
}
