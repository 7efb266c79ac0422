//! End-to-end chain: plane poses, linear and constrained calibration,
//! cross-ratio refinement, surface and evaluation.

use std::fmt;
use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossratio::{reconstruct_surface, refine, SurfaceEstimate};
use crate::error::Error;
use crate::io::{self, CorrespondenceSet, GroundTruth};
use crate::lm::{LmConfig, LmReport};
use crate::metrics::{rotation_error, translation_errors, ErrorReport, ReportTable};
use crate::plane_pose::{estimate_plane_poses, PlanePosePair, PoseDiagnostics, PoseSolverConfig};
use crate::projection::{
    build_observations, decompose_linear, focal_sweep, solve_linear, CalibrationEstimate, SweepConfig, SweepReport,
};
use crate::sim::{generate_dataset, MirrorScene, NoiseSpec, ReflectionTriple};

/// A stage failure, tagged with the stage name.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{stage}: {source}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub source: Error,
}

impl PipelineError {
    fn at(stage: &'static str) -> impl FnOnce(Error) -> Self {
        move |source| Self { stage, source }
    }
}

pub type PipelineResult<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub pose: PoseSolverConfig,
    pub sweep: SweepConfig,
    pub lm: LmConfig,
    /// Best pose candidates (by colinearity residual) tried during calibration.
    pub max_pose_candidates: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_noise(&NoiseSpec::default())
    }
}

impl PipelineConfig {
    /// Default settings, with the noisy pose thresholds when `noise` is non-zero.
    pub fn for_noise(noise: &NoiseSpec) -> Self {
        Self {
            pose: if noise.is_zero() { PoseSolverConfig::default() } else { PoseSolverConfig::noisy() },
            sweep: SweepConfig::default(),
            lm: LmConfig::default(),
            max_pose_candidates: 4,
        }
    }
}

/// Poses plus the constrained calibration that selected them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub poses: PlanePosePair,
    /// Index of the chosen candidate in the pose diagnostics.
    pub candidate: usize,
    pub linear: Option<CalibrationEstimate>,
    pub linear_error: Option<String>,
    pub constrained: CalibrationEstimate,
    pub sweep: SweepReport,
}

/// Pose and stage errors against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Rotation errors of plane poses 1 and 2, degrees.
    pub pose_rot_deg: [f64; 2],
    /// `‖T_gt − T‖ / ‖T_gt‖` for plane poses 1 and 2.
    pub pose_t_rel: [f64; 2],
    /// Rows for the linear, constrained and refined estimates, in that order.
    pub stages: Vec<ErrorReport>,
}

impl Evaluation {
    pub fn stage(&self, name: &str) -> Option<&ErrorReport> {
        self.stages.iter().find(|r| r.stage == name)
    }
}

impl fmt::Display for Evaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "plane pose 1: R {:.4e} deg, T {:.4e} rel\nplane pose 2: R {:.4e} deg, T {:.4e} rel",
            self.pose_rot_deg[0], self.pose_t_rel[0], self.pose_rot_deg[1], self.pose_t_rel[1]
        )?;
        write!(f, "{}", ReportTable(&self.stages))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub pose_diagnostics: PoseDiagnostics,
    pub calibration: Calibration,
    pub refined: CalibrationEstimate,
    pub convergence: LmReport,
    pub surface: SurfaceEstimate,
    pub evaluation: Option<Evaluation>,
}

/// Plane pose estimation.
pub fn estimate_poses(set: &CorrespondenceSet, cfg: &PipelineConfig) -> PipelineResult<(PlanePosePair, PoseDiagnostics)> {
    estimate_plane_poses(&set.triples, &cfg.pose).map_err(PipelineError::at("estimate-poses"))
}

/// Runs the focal sweep for the leading pose candidates and keeps the one whose
/// constrained solution is a proper rotation with the lowest point-to-line cost.
///
/// Reflecting the whole configuration through the pose-0 plane leaves the
/// colinearity residual unchanged; only a proper camera rotation tells the two apart.
pub fn calibrate(set: &CorrespondenceSet, diag: &PoseDiagnostics, cfg: &PipelineConfig) -> PipelineResult<Calibration> {
    let stage = "calibrate";
    let best_residual = diag.candidates.first().map_or(0.0, |c| c.residual);
    let mut chosen: Option<(bool, f64, usize, CalibrationEstimate, SweepReport)> = None;
    let mut last_err = Error::NoValidCandidate;
    for (k, cand) in diag.candidates.iter().enumerate().take(cfg.max_pose_candidates.max(1)) {
        if k > 0 && cand.residual > 2.0 * best_residual + 1e-9 {
            break;
        }
        let obs = build_observations(&set.triples, &cand.pair);
        match focal_sweep(&obs, set.meta.image_size, &cfg.sweep) {
            Ok((est, rep)) => {
                let proper = rep.solution.proper;
                let better = match &chosen {
                    None => true,
                    Some((p, c, ..)) => (proper && !p) || (proper == *p && rep.refined_cost < *c),
                };
                if better {
                    chosen = Some((proper, rep.refined_cost, k, est, rep));
                }
            }
            Err(e) => last_err = e,
        }
    }
    let (_, _, k, constrained, sweep) = chosen.ok_or_else(|| PipelineError { stage, source: last_err })?;
    let poses = diag.candidates[k].pair;
    let obs = build_observations(&set.triples, &poses);
    let (linear, linear_error) = match solve_linear(&obs).and_then(|pm| decompose_linear(&pm)) {
        Ok(l) => (Some(l), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(Calibration { poses, candidate: k, linear, linear_error, constrained, sweep })
}

/// Pose, intrinsic and surface errors of each calibration stage.
pub fn evaluate(
    triples: &[ReflectionTriple],
    gt: &GroundTruth,
    poses: &PlanePosePair,
    stages: &[(&str, &CalibrationEstimate, &SurfaceEstimate)],
) -> Result<Evaluation, Error> {
    let est_motions = poses.motions();
    let mut pose_rot_deg = [0.0; 2];
    let mut pose_t_rel = [0.0; 2];
    for i in 0..2 {
        let g = &gt.plane_motions[i];
        pose_rot_deg[i] = rotation_error(&est_motions[i].rotation, &g.rotation);
        pose_t_rel[i] = translation_errors(&est_motions[i].translation, &g.translation)?.1 / g.translation.norm();
    }
    let cam = &gt.camera;
    let mut rows = Vec::new();
    for (name, est, surface) in stages {
        let (e, g): (Vec<Vector3<f64>>, Vec<Vector3<f64>>) = triples
            .iter()
            .enumerate()
            .filter_map(|(i, t)| (surface.valid[i].is_valid()).then_some((surface.points[i], t.gt_point?)))
            .unzip();
        let pts = (e.len() >= 3).then_some((e.as_slice(), g.as_slice()));
        rows.push(ErrorReport::evaluate(
            name,
            &est.intrinsics,
            &est.rotation,
            &est.translation,
            &cam.intrinsics,
            &cam.pose.rotation,
            &cam.pose.translation,
            pts,
        )?);
    }
    Ok(Evaluation { pose_rot_deg, pose_t_rel, stages: rows })
}

/// All stages on a correspondence set.
pub fn run(set: &CorrespondenceSet, cfg: &PipelineConfig) -> PipelineResult<PipelineOutput> {
    let (_, pose_diagnostics) = estimate_poses(set, cfg)?;
    let calibration = calibrate(set, &pose_diagnostics, cfg)?;
    let poses = calibration.poses;
    let (refined, surface, convergence) =
        refine(&calibration.constrained, &set.triples, &poses, &cfg.lm).map_err(PipelineError::at("reconstruct"))?;
    let evaluation = match &set.meta.ground_truth {
        Some(gt) => {
            let mut stages = Vec::new();
            let lin_surface = calibration.linear.map(|l| (l, reconstruct_surface(&l, &set.triples, &poses)));
            if let Some((l, s)) = &lin_surface {
                stages.push(("L", l, s));
            }
            let el_surface = reconstruct_surface(&calibration.constrained, &set.triples, &poses);
            stages.push(("EL", &calibration.constrained, &el_surface));
            stages.push(("CR", &refined, &surface));
            Some(evaluate(&set.triples, gt, &poses, &stages).map_err(PipelineError::at("evaluate"))?)
        }
        None => None,
    };
    Ok(PipelineOutput { pose_diagnostics, calibration, refined, convergence, surface, evaluation })
}

/// Simulates a dataset and runs the pipeline on it.
pub fn run_scene(scene: &MirrorScene, grid_step: f64, noise: &NoiseSpec, cfg: &PipelineConfig) -> PipelineResult<PipelineOutput> {
    let set = generate_dataset(scene, grid_step, noise).map_err(PipelineError::at("simulate"))?;
    run(&set, cfg)
}

/// Angle between estimated and ground-truth normals per valid point, degrees.
pub fn normal_errors_csv(set: &CorrespondenceSet, surface: &SurfaceEstimate) -> String {
    let mut s = String::from("u,v,angle_deg\n");
    for (i, t) in set.triples.iter().enumerate() {
        if let (true, Some(n)) = (surface.valid[i].is_valid(), t.gt_normal) {
            let a = surface.normals[i].dot(&n).clamp(-1.0, 1.0).acos().to_degrees();
            s.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", t.pixel.x, t.pixel.y, a));
        }
    }
    s
}

/// Writes the reports, point cloud and CSV logs of a run into `dir`.
pub fn write_outputs(set: &CorrespondenceSet, out: &PipelineOutput, dir: &Path) -> crate::error::Result<()> {
    io::write_json(&dir.join("poses.json"), &out.pose_diagnostics)?;
    io::write_json(&dir.join("calibration.json"), &out.calibration)?;
    io::write_json(&dir.join("camera.json"), &out.refined)?;
    io::write_text(&dir.join("sweep.csv"), &out.calibration.sweep.to_csv())?;
    io::write_text(&dir.join("convergence.csv"), &out.convergence.to_csv())?;
    io::write_point_cloud(&out.surface, &dir.join("surface.ply"))?;
    if let Some(ev) = &out.evaluation {
        io::write_json(&dir.join("report.json"), ev)?;
        io::write_text(&dir.join("report.txt"), &ev.to_string())?;
        io::write_text(&dir.join("normal_errors.csv"), &normal_errors_csv(set, &out.surface))?;
    }
    Ok(())
}

/// One run of a noise sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub level: f64,
    pub seed: u64,
    pub evaluation: Option<Evaluation>,
    pub error: Option<String>,
}

/// Which noise parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Sigma,
    Gamma,
    K1,
}

impl SweepParameter {
    pub fn apply(&self, base: &NoiseSpec, level: f64, seed: u64) -> NoiseSpec {
        let mut n = NoiseSpec { seed, ..*base };
        match self {
            SweepParameter::Sigma => n.gaussian_sigma = level,
            SweepParameter::Gamma => n.quantization_gamma = level,
            SweepParameter::K1 => n.k1 = level,
        }
        n
    }
}

/// Runs every `(level, seed)` pair; results are sorted by `(level, seed)`.
pub fn noise_sweep(
    scene: &MirrorScene,
    grid_step: f64,
    base: &NoiseSpec,
    param: SweepParameter,
    levels: &[f64],
    seeds: &[u64],
    cfg: Option<&PipelineConfig>,
) -> Vec<SweepRun> {
    let jobs: Vec<(f64, u64)> = levels.iter().flat_map(|&l| seeds.iter().map(move |&s| (l, s))).collect();
    let mut runs: Vec<SweepRun> = jobs
        .par_iter()
        .map(|&(level, seed)| {
            let noise = param.apply(base, level, seed);
            let c = cfg.copied().unwrap_or_else(|| PipelineConfig::for_noise(&noise));
            match run_scene(scene, grid_step, &noise, &c) {
                Ok(out) => SweepRun { level, seed, evaluation: out.evaluation, error: None },
                Err(e) => SweepRun { level, seed, evaluation: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    runs.sort_by(|a, b| a.level.total_cmp(&b.level).then(a.seed.cmp(&b.seed)));
    runs
}

/// Mean errors of one sweep level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub level: f64,
    pub runs: usize,
    pub failures: usize,
    pub pose_rot_deg: f64,
    pub pose_t_rel: f64,
    /// Mean rows per stage (`L`, `EL`, `CR`) over successful runs.
    pub stages: Vec<ErrorReport>,
}

pub fn summarize(runs: &[SweepRun]) -> Vec<SweepSummary> {
    let mut levels: Vec<f64> = runs.iter().map(|r| r.level).collect();
    levels.dedup();
    levels
        .into_iter()
        .map(|level| {
            let at: Vec<&SweepRun> = runs.iter().filter(|r| r.level == level).collect();
            let ok: Vec<&Evaluation> = at.iter().filter_map(|r| r.evaluation.as_ref()).collect();
            let n = ok.len().max(1) as f64;
            let mut stages: Vec<ErrorReport> = Vec::new();
            for name in ["L", "EL", "CR"] {
                let rows: Vec<&ErrorReport> = ok.iter().filter_map(|e| e.stage(name)).collect();
                if rows.is_empty() {
                    continue;
                }
                let m = rows.len() as f64;
                let mean = |f: &dyn Fn(&ErrorReport) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / m;
                let s_rms: Vec<f64> = rows.iter().filter_map(|r| r.s_rms).collect();
                stages.push(ErrorReport {
                    stage: name.to_string(),
                    rot_deg: mean(&|r| r.rot_deg),
                    t_deg: mean(&|r| r.t_deg),
                    t_scale: mean(&|r| r.t_scale),
                    t_scale_percent: mean(&|r| r.t_scale_percent),
                    intrinsic_errors: std::array::from_fn(|k| mean(&|r| r.intrinsic_errors[k])),
                    s_rms: (!s_rms.is_empty()).then(|| s_rms.iter().sum::<f64>() / s_rms.len() as f64),
                    n_points: rows.iter().map(|r| r.n_points).sum::<usize>() / rows.len(),
                });
            }
            SweepSummary {
                level,
                runs: at.len(),
                failures: at.len() - ok.len(),
                pose_rot_deg: ok.iter().map(|e| (e.pose_rot_deg[0] + e.pose_rot_deg[1]) / 2.0).sum::<f64>() / n,
                pose_t_rel: ok.iter().map(|e| (e.pose_t_rel[0] + e.pose_t_rel[1]) / 2.0).sum::<f64>() / n,
                stages,
            }
        })
        .collect()
}

/// One CSV row per level and stage.
pub fn summary_csv(summaries: &[SweepSummary]) -> String {
    let mut s = String::from(
        "level,runs,failures,pose_rot_deg,pose_t_rel,stage,fu_pct,fv_pct,u0_pct,v0_pct,rot_deg,t_deg,t_scale_mm,s_rms_mm\n",
    );
    for sm in summaries {
        for r in &sm.stages {
            s.push_str(&format!(
                "{},{},{},{:.10e},{:.10e},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{}\n",
                sm.level,
                sm.runs,
                sm.failures,
                sm.pose_rot_deg,
                sm.pose_t_rel,
                r.stage,
                r.intrinsic_errors[0],
                r.intrinsic_errors[1],
                r.intrinsic_errors[2],
                r.intrinsic_errors[3],
                r.rot_deg,
                r.t_deg,
                r.t_scale,
                r.s_rms.map_or_else(String::new, |v| format!("{v:.10e}"))
            ));
        }
    }
    s
}
