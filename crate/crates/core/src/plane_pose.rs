//! Closed-form relative poses of the reference plane from reflection triples.
//!
//! For a pixel, the lifted points `X0 = (x0, y0, 0)`, `X1 = 𝓜 X̄1`, `X2 = 𝓝 X̄2`
//! lie on the incident ray, where `𝓜 = [R¹*1 R¹*2 T¹]` and `𝓝 = [R²*1 R²*2 T²]`.
//! Colinearity is bilinear in the entries of `𝓜, 𝓝` and becomes `E W = 0` with
//!
//! ```text
//! W = (𝒜 row-major, ℬ row-major, 𝓝3*, 𝓜3*),  𝒜 = 𝓝3*ᵀ𝓜1* − 𝓝1*ᵀ𝓜3*,  ℬ = 𝓝3*ᵀ𝓜2* − 𝓝2*ᵀ𝓜3*.
//! ```
//!
//! `E` has a two-dimensional nullspace `W = α (d1 + β d2)`. `β` is a root of a
//! cubic, `α` follows from the orthonormality of the rotation columns, and the
//! remaining rows of `𝓜, 𝓝` are read off `W`.

use nalgebra::{DMatrix, DVector, Matrix3, SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, RankCause, Result};
use crate::geometry::{nearest_rotation, rotation_from_angle_axis, RigidPose};
use crate::lm;
use crate::linalg::svd_ascending;
use crate::poly;
use crate::sim::{colinearity_residual, ReflectionTriple, MIN_TRIPLES};

pub type Vector24 = SVector<f64, 24>;

/// `[R*1 R*2 T]` of one plane motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneMotionMatrix(pub Matrix3<f64>);

impl PlaneMotionMatrix {
    pub fn from_pose(p: &RigidPose<f64>) -> Self {
        Self(Matrix3::from_columns(&[
            p.rotation.column(0).into_owned(),
            p.rotation.column(1).into_owned(),
            p.translation,
        ]))
    }

    /// Largest deviation of the first two columns from an orthonormal pair.
    pub fn orthogonality_residual(&self) -> f64 {
        let (c1, c2) = (self.0.column(0), self.0.column(1));
        (c1.norm() - 1.0).abs().max((c2.norm() - 1.0).abs()).max(c1.dot(&c2).abs())
    }

    /// Completes the rotation by `c1 × c2` and projects it to SO(3).
    pub fn to_pose(&self) -> Option<RigidPose<f64>> {
        let (c1, c2) = (self.0.column(0).into_owned(), self.0.column(1).into_owned());
        let r = Matrix3::from_columns(&[c1, c2, c1.cross(&c2)]);
        if !(r.determinant() > 0.0) {
            return None;
        }
        Some(RigidPose::new(nearest_rotation(&r), self.0.column(2).into_owned()))
    }
}

/// Poses 1 and 2 of the plane relative to pose 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePosePair {
    pub pose1: RigidPose<f64>,
    pub pose2: RigidPose<f64>,
}

impl PlanePosePair {
    pub fn motions(&self) -> [RigidPose<f64>; 2] {
        [self.pose1, self.pose2]
    }

    fn swapped(&self) -> Self {
        Self { pose1: self.pose2, pose2: self.pose1 }
    }
}

/// Packs `W` from the two motions.
pub fn pack_w(pair: &PlanePosePair) -> Vector24 {
    let m = PlaneMotionMatrix::from_pose(&pair.pose1).0;
    let n = PlaneMotionMatrix::from_pose(&pair.pose2).0;
    let a = n.row(2).transpose() * m.row(0) - n.row(0).transpose() * m.row(2);
    let b = n.row(2).transpose() * m.row(1) - n.row(1).transpose() * m.row(2);
    let mut w = Vector24::zeros();
    for i in 0..3 {
        for j in 0..3 {
            w[3 * i + j] = a[(i, j)];
            w[9 + 3 * i + j] = b[(i, j)];
        }
        w[18 + i] = n[(2, i)];
        w[21 + i] = m[(2, i)];
    }
    w
}

/// `𝒜` and `ℬ` from the first 18 slots of `W`.
pub fn unpack_ab(w: &Vector24) -> (Matrix3<f64>, Matrix3<f64>) {
    (
        Matrix3::from_fn(|i, j| w[3 * i + j]),
        Matrix3::from_fn(|i, j| w[9 + 3 * i + j]),
    )
}

/// The same vector with the roles of poses 1 and 2 exchanged.
pub fn swap_roles(w: &Vector24) -> Vector24 {
    let (a, b) = unpack_ab(w);
    let (a, b) = (-a.transpose(), -b.transpose());
    let mut out = Vector24::zeros();
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] = a[(i, j)];
            out[9 + 3 * i + j] = b[(i, j)];
        }
        out[18 + i] = w[21 + i];
        out[21 + i] = w[18 + i];
    }
    out
}

/// Two rows per triple. For `X̄1 = (x1, y1, 1)`, `X̄2 = (x2, y2, 1)`:
///
/// ```text
/// [ X̄2 ⊗ X̄1, 0,          −x0 X̄2, x0 X̄1 ]
/// [ 0,          X̄2 ⊗ X̄1, −y0 X̄2, y0 X̄1 ]
/// ```
pub fn build_design_matrix(triples: &[ReflectionTriple]) -> Result<DMatrix<f64>> {
    if triples.len() < MIN_TRIPLES {
        return Err(Error::TooFewCorrespondences { got: triples.len(), need: MIN_TRIPLES });
    }
    let mut e = DMatrix::zeros(2 * triples.len(), 24);
    for (k, t) in triples.iter().enumerate() {
        let [x0, x1, x2] = t.x;
        let h1 = Vector3::new(x1.x, x1.y, 1.0);
        let h2 = Vector3::new(x2.x, x2.y, 1.0);
        for (r, c0) in [(2 * k, x0.x), (2 * k + 1, x0.y)] {
            let off = if r % 2 == 0 { 0 } else { 9 };
            for a in 0..3 {
                for b in 0..3 {
                    e[(r, off + 3 * a + b)] = h2[a] * h1[b];
                }
                e[(r, 18 + a)] = -c0 * h2[a];
                e[(r, 21 + a)] = c0 * h1[a];
            }
        }
    }
    Ok(e)
}

/// Ascending singular values and the corresponding right singular vectors.
pub fn singular_spectrum(e: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    svd_ascending(e)
}

/// Nullspace basis `(d1, d2)` with the gap ratio `σ3 / σ2` (third over second smallest).
pub fn nullspace_basis(e: &DMatrix<f64>, min_gap_ratio: f64) -> Result<(Vector24, Vector24, f64)> {
    let (sv, v) = svd_ascending(e);
    let gap = if sv[1] > 0.0 { sv[2] / sv[1] } else { f64::INFINITY };
    if !(gap >= min_gap_ratio) {
        return Err(Error::RankAmbiguous { cause: RankCause::SingularGap, value: gap, threshold: min_gap_ratio });
    }
    let col = |k: usize| Vector24::from_iterator(v.column(k).iter().copied());
    Ok((col(0), col(1), gap))
}

/// Largest share of a unit vector in span{d1, d2} that falls on the
/// `m31, m32, n31, n32` slots. These vanish for every `W` when the three plane
/// poses are parallel; the depth travel then scales freely with `α`.
pub fn tilt_content(d1: &Vector24, d2: &Vector24) -> f64 {
    let basis = DMatrix::from_columns(&[DVector::from_column_slice(d1.as_slice()), DVector::from_column_slice(d2.as_slice())]).qr().q();
    let sub = DMatrix::from_fn(4, 2, |r, c| basis[([18, 19, 21, 22][r], c)]);
    sub.singular_values().max()
}

/// Real roots of the cubic in `β` obtained after `α` cancels.
pub fn beta_cubic(d1: &Vector24, d2: &Vector24) -> [f64; 4] {
    // factor (d1_i + β d2_i), 1-based slot i
    let f = |i: usize| [d2[i - 1], d1[i - 1]];
    let terms: [(f64, usize, usize, usize); 4] =
        [(1.0, 19, 7, 24), (-1.0, 19, 9, 22), (-1.0, 21, 1, 24), (1.0, 21, 3, 22)];
    let mut acc = vec![0.0; 4];
    for (s, a, b, c) in terms {
        let p = poly::mul(&poly::mul(&f(a), &f(b)), &f(c));
        acc = poly::add(&acc, &poly::scale(&p, s));
    }
    [acc[0], acc[1], acc[2], acc[3]]
}

pub fn solve_beta(d1: &Vector24, d2: &Vector24) -> Result<Vec<f64>> {
    let roots = poly::real_roots(&beta_cubic(d1, d2));
    if roots.is_empty() {
        return Err(Error::AllComplexRoots);
    }
    Ok(roots)
}

/// Linear forms in `m11` (as `[slope, intercept]`) for `n11, n12, n13, m21, n21, n22, n23`.
struct Elimination {
    n11: [f64; 2],
    n12: [f64; 2],
    n13: [f64; 2],
    m21: [f64; 2],
    n21: [f64; 2],
    n22: [f64; 2],
    n23: [f64; 2],
}

fn eliminate(d: &Vector24) -> Elimination {
    let s = |i: usize| d[i - 1];
    let den = s(22);
    let m21 = [
        -s(1) / s(10),
        (s(1) * s(1) + s(10) * s(10) + s(19) * s(19) - den * den) / (2.0 * s(10) * s(19)),
    ];
    let via_m11 = |a: usize, b: usize| [s(a) / den, -s(b) / den];
    let via_m21 = |a: usize, b: usize| [s(a) * m21[0] / den, (s(a) * m21[1] - s(b)) / den];
    Elimination {
        n11: via_m11(19, 1),
        n12: via_m11(20, 4),
        n13: via_m11(21, 7),
        m21,
        n21: via_m21(19, 10),
        n22: via_m21(20, 13),
        n23: via_m21(21, 16),
    }
}

fn eval(l: &[f64; 2], x: f64) -> f64 {
    l[0] * x + l[1]
}

fn branch_guard(d: &Vector24) -> Result<()> {
    if d[21].abs() < 1e-8 * d.norm() {
        return Err(Error::BranchM31Zero);
    }
    Ok(())
}

/// One admissible scale: `W = alpha · d`, with the `m11` root that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaCandidate {
    pub alpha: f64,
    pub m11: f64,
}

/// Solves for `α` (both signs) given `d = d1 + β d2`.
pub fn solve_alpha(d: &Vector24) -> Result<Vec<AlphaCandidate>> {
    branch_guard(d)?;
    let s = |i: usize| d[i - 1];
    let el = eliminate(d);
    // n11 n12 + n21 n22 + α² d19 d20 = 0 fixes α² as a quadratic in m11
    let q = poly::add(&poly::mul(&el.n11, &el.n12), &poly::mul(&el.n21, &el.n22));
    // n12² + n22² + α² d20² = 1
    let g = poly::add(
        &poly::add(&poly::mul(&el.n12, &el.n12), &poly::mul(&el.n22, &el.n22)),
        &poly::scale(&q, -s(20) / s(19)),
    );
    let g = poly::add(&g, &[-1.0]);
    let mut out = Vec::new();
    for m11 in poly::real_roots(&g) {
        let u = -poly::eval(&q, m11) / (s(19) * s(20));
        if u > 0.0 && u.is_finite() {
            let a = u.sqrt();
            out.push(AlphaCandidate { alpha: a, m11 });
            out.push(AlphaCandidate { alpha: -a, m11 });
        }
    }
    if out.is_empty() {
        return Err(Error::NoRealAlpha);
    }
    Ok(out)
}

/// One candidate pose pair with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseCandidate {
    pub pair: PlanePosePair,
    pub orthogonality_residual: f64,
}

/// Recovers `𝓜, 𝓝` from `W`. Each root of the orthogonality quadratic in
/// `m11` yields one candidate; reflections and candidates whose first two
/// columns are further than `max_orth` from orthonormal are dropped.
pub fn extract_poses_with(w: &Vector24, max_orth: f64) -> Result<Vec<PoseCandidate>> {
    branch_guard(w)?;
    let s = |i: usize| w[i - 1];
    let el = eliminate(w);
    let q = poly::add(&poly::mul(&el.n11, &el.n12), &poly::mul(&el.n21, &el.n22));
    let q = poly::add(&q, &[s(19) * s(20)]);
    let (a, b) = unpack_ab(w);
    let n3 = Vector3::new(s(19), s(20), s(21));
    let m3 = Vector3::new(s(22), s(23), s(24));
    let mut out = Vec::new();
    for m11 in poly::real_roots(&q) {
        let m21 = eval(&el.m21, m11);
        let n1 = Vector3::new(eval(&el.n11, m11), eval(&el.n12, m11), eval(&el.n13, m11));
        let n2 = Vector3::new(eval(&el.n21, m11), eval(&el.n22, m11), eval(&el.n23, m11));
        // 𝒜_i j = n3i m1j − n1i m3j for j = 2, 3 in the least-squares sense over i
        let nn = n3.norm_squared();
        let m1j = |j: usize| n3.dot(&(a.column(j) + n1 * m3[j])) / nn;
        let m2j = |j: usize| n3.dot(&(b.column(j) + n2 * m3[j])) / nn;
        let m = Matrix3::new(
            m11, m1j(1), m1j(2), //
            m21, m2j(1), m2j(2), //
            m3[0], m3[1], m3[2],
        );
        let n = Matrix3::from_rows(&[n1.transpose(), n2.transpose(), n3.transpose()]);
        let (mm, nm) = (PlaneMotionMatrix(m), PlaneMotionMatrix(n));
        let orth = mm.orthogonality_residual().max(nm.orthogonality_residual());
        if !(orth <= max_orth) {
            continue;
        }
        if let (Some(pose1), Some(pose2)) = (mm.to_pose(), nm.to_pose()) {
            let pair = polish(w, &PlanePosePair { pose1, pose2 });
            out.push(PoseCandidate { pair, orthogonality_residual: orth });
        }
    }
    if out.is_empty() {
        return Err(Error::NoValidCandidate);
    }
    Ok(out)
}

/// Least-squares fit of the 12 pose parameters to `W` itself, starting from
/// the closed-form candidate. Removes the cancellation error of the `m21`
/// expression; the correspondences are not revisited.
fn polish(w: &Vector24, pair: &PlanePosePair) -> PlanePosePair {
    fit_pair(pair, |v| v - w)
}

/// Pose pair minimizing `‖residual(pack_w(pair))‖` by Gauss-Newton from `pair`.
pub fn fit_pair(pair: &PlanePosePair, residual: impl Fn(&Vector24) -> Vector24) -> PlanePosePair {
    let at = |x: &DVector<f64>| PlanePosePair {
        pose1: RigidPose::new(
            rotation_from_angle_axis(&Vector3::new(x[0], x[1], x[2])) * pair.pose1.rotation,
            Vector3::new(x[3], x[4], x[5]),
        ),
        pose2: RigidPose::new(
            rotation_from_angle_axis(&Vector3::new(x[6], x[7], x[8])) * pair.pose2.rotation,
            Vector3::new(x[9], x[10], x[11]),
        ),
    };
    let (t1, t2) = (pair.pose1.translation, pair.pose2.translation);
    let mut x = DVector::from_vec(vec![0.0, 0.0, 0.0, t1.x, t1.y, t1.z, 0.0, 0.0, 0.0, t2.x, t2.y, t2.z]);
    let f = |x: &DVector<f64>| DVector::from_column_slice(residual(&pack_w(&at(x))).as_slice());
    let mut r = f(&x);
    for _ in 0..20 {
        let j = lm::numeric_jacobian(&f, &x, 1e-6);
        let Ok(step) = j.svd(true, true).solve(&(-&r), 1e-14) else {
            break;
        };
        let x_new = &x + step;
        let r_new = f(&x_new);
        if !(r_new.norm() < r.norm()) {
            break;
        }
        x = x_new;
        r = r_new;
    }
    at(&x)
}

/// Pose pair whose packed `W` is closest to `span(d1, d2)`, starting from `pair`.
///
/// With noisy data the closed form reads the poses off a few entries of one
/// vector in the span; this uses all 24 entries and the whole span.
pub fn fit_to_span(d1: &Vector24, d2: &Vector24, pair: &PlanePosePair) -> PlanePosePair {
    let q1 = d1.normalize();
    let q2 = (d2 - q1 * q1.dot(d2)).normalize();
    fit_pair(pair, |v| v - q1 * q1.dot(v) - q2 * q2.dot(v))
}

/// [`extract_poses_with`] at the default orthogonality tolerance `1e-3`.
pub fn extract_poses(w: &Vector24) -> Result<Vec<PoseCandidate>> {
    extract_poses_with(w, 1e-3)
}

/// Tunables of [`estimate_plane_poses`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSolverConfig {
    /// Minimum `σ3 / σ2` of the design matrix.
    pub min_gap_ratio: f64,
    /// Minimum [`tilt_content`] of the nullspace; below it the planes count as parallel.
    pub min_tilt: f64,
    /// Maximum orthogonality residual of an accepted candidate.
    pub max_orthogonality_residual: f64,
    /// Relative residual difference below which the best two candidates count as ambiguous.
    pub ambiguity_ratio: f64,
    /// Refit each candidate so that its `W` lies closest to the nullspace span.
    pub fit_to_nullspace: bool,
}

impl Default for PoseSolverConfig {
    fn default() -> Self {
        Self { min_gap_ratio: 10.0, min_tilt: 1e-2, max_orthogonality_residual: 1e-3, ambiguity_ratio: 0.01, fit_to_nullspace: true }
    }
}

impl PoseSolverConfig {
    /// Thresholds suited to noisy correspondences.
    pub fn noisy() -> Self {
        Self { min_gap_ratio: 1.5, max_orthogonality_residual: 0.25, ..Self::default() }
    }
}

/// A scored candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub pair: PlanePosePair,
    /// Mean colinearity residual over all triples, mm.
    pub residual: f64,
    pub orthogonality_residual: f64,
    pub beta: f64,
    pub alpha: f64,
}

/// Solver intermediates.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSolverState {
    pub e: DMatrix<f64>,
    pub d1: Vector24,
    pub d2: Vector24,
    /// Centroids of the in-plane coordinates per pose and the common scale used to condition `E`.
    pub centroids: [Vector2<f64>; 3],
    pub scale: f64,
}

/// Report of a pose estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseDiagnostics {
    pub n_triples: usize,
    /// Ascending singular values of the conditioned design matrix.
    pub singular_values: Vec<f64>,
    pub gap_ratio: f64,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    /// All surviving candidates, best first.
    pub candidates: Vec<ScoredCandidate>,
    /// The two best candidates have residuals within `ambiguity_ratio`.
    pub ambiguous: bool,
    /// Whether the pose roles were swapped because the `m31` divisor vanished.
    pub swapped_branch: bool,
}

/// Centering and global scaling of the in-plane coordinates.
fn conditioning(triples: &[ReflectionTriple]) -> ([Vector2<f64>; 3], f64) {
    let n = triples.len() as f64;
    let mut c = [Vector2::zeros(); 3];
    for t in triples {
        for i in 0..3 {
            c[i] += t.x[i] / n;
        }
    }
    let mut ss = 0.0;
    for t in triples {
        for i in 0..3 {
            ss += (t.x[i] - c[i]).norm_squared();
        }
    }
    let k = (ss / (3.0 * n)).sqrt();
    (c, if k > 0.0 { k } else { 1.0 })
}

fn conditioned(triples: &[ReflectionTriple], c: &[Vector2<f64>; 3], k: f64) -> Vec<ReflectionTriple> {
    triples
        .iter()
        .map(|t| {
            let mut u = *t;
            for i in 0..3 {
                u.x[i] = (t.x[i] - c[i]) / k;
            }
            u
        })
        .collect()
}

/// Maps poses between conditioned frames back to the metric plane frames.
fn decondition(pair: &PlanePosePair, c: &[Vector2<f64>; 3], k: f64) -> PlanePosePair {
    let lift = |v: &Vector2<f64>| Vector3::new(v.x, v.y, 0.0);
    let fix = |p: &RigidPose<f64>, i: usize| {
        RigidPose::new(p.rotation, p.translation * k + lift(&c[0]) - p.rotation * lift(&c[i]))
    };
    PlanePosePair { pose1: fix(&pair.pose1, 1), pose2: fix(&pair.pose2, 2) }
}

/// Mean colinearity residual of all triples under a pose pair, mm.
pub fn mean_colinearity_residual(triples: &[ReflectionTriple], pair: &PlanePosePair) -> f64 {
    let m = pair.motions();
    triples.iter().map(|t| colinearity_residual(t, &m)).sum::<f64>() / triples.len() as f64
}

/// Builds the solver state (conditioned design matrix and its nullspace).
pub fn solver_state(triples: &[ReflectionTriple], cfg: &PoseSolverConfig) -> Result<(PoseSolverState, Vec<f64>, f64)> {
    if triples.len() < MIN_TRIPLES {
        return Err(Error::TooFewCorrespondences { got: triples.len(), need: MIN_TRIPLES });
    }
    let (c, k) = conditioning(triples);
    let e = build_design_matrix(&conditioned(triples, &c, k))?;
    let (sv, _) = svd_ascending(&e);
    let (d1, d2, gap) = nullspace_basis(&e, cfg.min_gap_ratio)?;
    let tilt = tilt_content(&d1, &d2);
    if !(tilt >= cfg.min_tilt) {
        return Err(Error::RankAmbiguous { cause: RankCause::ParallelPlanes, value: tilt, threshold: cfg.min_tilt });
    }
    Ok((PoseSolverState { e, d1, d2, centroids: c, scale: k }, sv, gap))
}

/// Full chain: design matrix, nullspace, `β` roots, `α` roots, extraction and
/// scoring by mean colinearity residual.
pub fn estimate_plane_poses(
    triples: &[ReflectionTriple],
    cfg: &PoseSolverConfig,
) -> Result<(PlanePosePair, PoseDiagnostics)> {
    let (state, sv, gap) = solver_state(triples, cfg)?;
    let betas = solve_beta(&state.d1, &state.d2)?;
    let mut alphas = Vec::new();
    let mut cands: Vec<ScoredCandidate> = Vec::new();
    let mut swapped_branch = false;
    let mut last_err = Error::NoValidCandidate;
    for &beta in &betas {
        let d = state.d1 + state.d2 * beta;
        let (d, swapped) = match branch_guard(&d) {
            Ok(()) => (d, false),
            Err(_) => {
                let s = swap_roles(&d);
                if branch_guard(&s).is_err() {
                    last_err = Error::BranchM31Zero;
                    continue;
                }
                (s, true)
            }
        };
        swapped_branch |= swapped;
        let found = match solve_alpha(&d) {
            Ok(a) => a,
            Err(e) => {
                last_err = e;
                continue;
            }
        };
        for ac in found {
            alphas.push(ac.alpha);
            let w = d * ac.alpha;
            let Ok(poses) = extract_poses_with(&w, cfg.max_orthogonality_residual) else {
                continue;
            };
            for pc in poses {
                let pair = if swapped { pc.pair.swapped() } else { pc.pair };
                let pair = if cfg.fit_to_nullspace { fit_to_span(&state.d1, &state.d2, &pair) } else { pair };
                let pair = decondition(&pair, &state.centroids, state.scale);
                let residual = mean_colinearity_residual(triples, &pair);
                if residual.is_finite() {
                    cands.push(ScoredCandidate {
                        pair,
                        residual,
                        orthogonality_residual: pc.orthogonality_residual,
                        beta,
                        alpha: ac.alpha,
                    });
                }
            }
        }
    }
    if cands.is_empty() {
        return Err(match last_err {
            Error::BranchM31Zero => Error::BranchM31Zero,
            Error::NoRealAlpha if alphas.is_empty() => Error::NoRealAlpha,
            _ => Error::NoValidCandidate,
        });
    }
    // stable sort keeps the deterministic root order for exact ties
    cands.sort_by(|a, b| a.residual.total_cmp(&b.residual));
    let ambiguous = cands.len() > 1
        && (cands[1].residual - cands[0].residual) <= cfg.ambiguity_ratio * cands[1].residual.max(f64::MIN_POSITIVE);
    let best = cands[0].pair;
    Ok((
        best,
        PoseDiagnostics {
            n_triples: triples.len(),
            singular_values: sv,
            gap_ratio: gap,
            betas,
            alphas,
            candidates: cands,
            ambiguous,
            swapped_branch,
        },
    ))
}

/// Principal angles (radians) between the spans of two pairs of vectors.
pub fn principal_angles(a: [&Vector24; 2], b: [&Vector24; 2]) -> [f64; 2] {
    let orth = |v: [&Vector24; 2]| {
        let m = DMatrix::from_columns(&[DVector::from_column_slice(v[0].as_slice()), DVector::from_column_slice(v[1].as_slice())]);
        m.qr().q()
    };
    let (qa, qb) = (orth(a), orth(b));
    let sv = (qa.transpose() * qb).singular_values();
    let mut angles = [sv[0].min(1.0).acos(), sv[1].min(1.0).acos()];
    angles.sort_by(|x, y| x.total_cmp(y));
    angles
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_from_angle_axis;

    fn pair() -> PlanePosePair {
        PlanePosePair {
            pose1: RigidPose::new(rotation_from_angle_axis(&Vector3::new(0.2, -0.1, 0.05)), Vector3::new(80.0, -60.0, -150.0)),
            pose2: RigidPose::new(rotation_from_angle_axis(&Vector3::new(-0.15, 0.25, -0.1)), Vector3::new(-120.0, 50.0, -300.0)),
        }
    }

    #[test]
    fn pack_then_extract_recovers_poses() {
        let p = pair();
        let w = pack_w(&p);
        let cands = extract_poses(&w).unwrap();
        let best = cands
            .iter()
            .map(|c| (c.pair.pose1.rotation - p.pose1.rotation).norm() + (c.pair.pose2.translation - p.pose2.translation).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-9, "{best}");
    }

    #[test]
    fn rank_of_a_and_b_is_at_most_two() {
        let (a, b) = unpack_ab(&pack_w(&pair()));
        for m in [a, b] {
            let sv = m.singular_values();
            assert!(sv.min() < 1e-12 * sv.max());
        }
    }

    #[test]
    fn swap_roles_is_pose_exchange() {
        let p = pair();
        assert!((swap_roles(&pack_w(&p)) - pack_w(&p.swapped())).norm() < 1e-12);
    }

    #[test]
    fn branch_guard_fires_on_zero_m31() {
        let mut w = pack_w(&pair());
        w[21] = 0.0;
        assert_eq!(solve_alpha(&w), Err(Error::BranchM31Zero));
    }

    #[test]
    fn alpha_flips_with_d() {
        let w = pack_w(&pair());
        let d = w * 0.37;
        let a: Vec<f64> = solve_alpha(&d).unwrap().iter().map(|c| c.alpha).collect();
        let b: Vec<f64> = solve_alpha(&(-d)).unwrap().iter().map(|c| c.alpha).collect();
        assert!(a.iter().any(|x| (x - 1.0 / 0.37).abs() < 1e-9));
        assert!(b.iter().any(|x| (x + 1.0 / 0.37).abs() < 1e-9));
    }

    #[test]
    fn degenerate_columns_are_filtered() {
        let degenerate = PlaneMotionMatrix(Matrix3::new(1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 5.0));
        assert!(degenerate.to_pose().is_none());
    }

    #[test]
    fn parallel_planes_are_rank_ambiguous() {
        use crate::sim::{generate_dataset, MirrorScene, NoiseSpec};
        let cfg = PoseSolverConfig::default();
        let tilted = MirrorScene::sphere_cluster();
        let set = generate_dataset(&tilted, 16.0, &NoiseSpec::default()).unwrap();
        assert!(solver_state(&set.triples, &cfg).is_ok());

        let mut spun = tilted.with_translation_only();
        spun.plane_motions[1].rotation = rotation_from_angle_axis(&Vector3::new(0.0, 0.0, 0.4));
        for scene in [tilted.with_translation_only(), spun] {
            let set = generate_dataset(&scene, 16.0, &NoiseSpec::default()).unwrap();
            match solver_state(&set.triples, &cfg) {
                Err(Error::RankAmbiguous { cause: RankCause::ParallelPlanes, value, .. }) => assert!(value < 1e-10),
                other => panic!("{other:?}"),
            }
        }
    }
}
