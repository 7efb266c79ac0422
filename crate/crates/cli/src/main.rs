//! `specular`: simulate reflection datasets, calibrate the camera from them and
//! reconstruct the mirror surface.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 numerical or degenerate failure.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use serde::Deserialize;

use specular_core::crossratio::refine;
use specular_core::io::{self, CorrespondenceSet};
use specular_core::metrics::{self, ErrorReport, ReportTable};
use specular_core::pipeline::{
    self, noise_sweep, summarize, summary_csv, Calibration, PipelineConfig, PipelineError, SweepParameter,
};
use specular_core::projection::CalibrationEstimate;
use specular_core::sim::{generate_dataset, MirrorScene, NoiseSpec, SceneFile};
use specular_core::Error;

#[derive(Debug)]
struct CliError {
    code: u8,
    msg: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: 1, msg: msg.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self { code: if e.is_numerical() { 2 } else { 1 }, msg: e.to_string() }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        Self { code: if e.source.is_numerical() { 2 } else { 1 }, msg: e.to_string() }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "specular", version, about = "Mirror surface reconstruction from reflections of a moving plane")]
struct Cli {
    /// TOML file with default values for the flags; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ray-trace a scene into a correspondence CSV.
    Simulate(SimulateArgs),
    /// Estimate the two plane motions from a correspondence CSV.
    EstimatePoses(DataArgs),
    /// Estimate plane poses and the camera (linear and constrained focal sweep).
    Calibrate(DataArgs),
    /// Refine the camera by cross-ratio reprojection and reconstruct the surface.
    Reconstruct(ReconstructArgs),
    /// Compare an estimated camera (and optionally points) against ground truth.
    Evaluate(EvaluateArgs),
    /// Run all stages on a scene or dataset, or a noise sweep.
    Pipeline(PipelineArgs),
    /// Reconstructable-region calculators.
    Coverage(CoverageArgs),
}

#[derive(Args, Debug, Default)]
struct NoiseArgs {
    /// Gaussian noise on plane coordinates, mm.
    #[arg(long)]
    sigma: Option<f64>,
    /// Half-width of uniform pixel noise, px.
    #[arg(long)]
    gamma: Option<f64>,
    /// Radial distortion coefficient.
    #[arg(long)]
    k1: Option<f64>,
    /// Noise seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scene TOML file, or `builtin:two_spheres` / `builtin:sphere_cluster`.
    #[arg(long)]
    scene: Option<String>,
    /// Pixel grid step.
    #[arg(long)]
    grid_step: Option<f64>,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Output CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the scene as TOML.
    #[arg(long, value_name = "FILE")]
    write_scene: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Correspondence CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    /// Correspondence CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// `calibration.json` written by `calibrate`.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Estimated camera JSON (as written by `reconstruct`).
    #[arg(long)]
    estimate: PathBuf,
    /// Ground-truth camera: a camera JSON or a simulated correspondence CSV.
    #[arg(long)]
    truth: PathBuf,
    /// Estimated point cloud (PLY).
    #[arg(long, requires = "truth_points")]
    points: Option<PathBuf>,
    /// Ground-truth point cloud (PLY), matched to `--points` by order.
    #[arg(long, requires = "points")]
    truth_points: Option<PathBuf>,
    /// Write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Stage {
    EstimatePoses,
    Calibrate,
    Reconstruct,
    Evaluate,
}

#[derive(Clone, Copy, Debug, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SweepKind {
    Sigma,
    Gamma,
    K1,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Scene TOML file or `builtin:NAME`; ignored when `--data` is given.
    #[arg(long)]
    scene: Option<String>,
    /// Correspondence CSV to use instead of simulating.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Pixel grid step for simulation.
    #[arg(long)]
    grid_step: Option<f64>,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Stages to run, in order (default: all).
    #[arg(long, value_delimiter = ',')]
    stages: Option<Vec<Stage>>,
    /// Sweep one noise parameter instead of a single run.
    #[arg(long)]
    sweep: Option<SweepKind>,
    /// Sweep levels (default depends on `--sweep`).
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    /// Seeds per sweep level, numbered from 0.
    #[arg(long)]
    seeds: Option<u64>,
    /// Focal sweep lower bound, relative to the image diagonal.
    #[arg(long)]
    focal_min: Option<f64>,
    /// Focal sweep upper bound, relative to the image diagonal.
    #[arg(long)]
    focal_max: Option<f64>,
    /// Focal sweep sample count.
    #[arg(long)]
    focal_samples: Option<usize>,
    /// Levenberg-Marquardt iteration limit.
    #[arg(long)]
    lm_iterations: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CoverageArgs {
    /// Plane half-width on one side of the reflection point, mm.
    #[arg(long)]
    w1: Option<f64>,
    /// Plane half-width on the other side, mm.
    #[arg(long)]
    w2: Option<f64>,
    /// Distance between mirror and plane, mm.
    #[arg(long)]
    h: Option<f64>,
    /// Camera-to-mirror distance, mm.
    #[arg(long)]
    h1: Option<f64>,
    /// Mirror-to-plane distance, mm.
    #[arg(long)]
    h2: Option<f64>,
    /// Plane size, mm.
    #[arg(long)]
    s2: Option<f64>,
    /// Angle between the camera ray and the mirror normal, degrees.
    #[arg(long)]
    theta: Option<f64>,
}

/// Values read from `--config`; each is used only when the flag is absent.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    scene: Option<String>,
    data: Option<PathBuf>,
    calibration: Option<PathBuf>,
    out: Option<PathBuf>,
    grid_step: Option<f64>,
    sigma: Option<f64>,
    gamma: Option<f64>,
    k1: Option<f64>,
    seed: Option<u64>,
    stages: Option<Vec<Stage>>,
    sweep: Option<SweepKind>,
    levels: Option<Vec<f64>>,
    seeds: Option<u64>,
    focal_min: Option<f64>,
    focal_max: Option<f64>,
    focal_samples: Option<usize>,
    lm_iterations: Option<usize>,
}

impl FileConfig {
    fn noise(&self) -> NoiseArgs {
        NoiseArgs { sigma: self.sigma, gamma: self.gamma, k1: self.k1, seed: self.seed }
    }
}

fn load_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = io::read_text(path)?;
    toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {}", path.display(), e.message())))
}

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::usage(format!("missing --{flag} (flag or config file)")))
}

const DEFAULT_GRID_STEP: f64 = 8.0;

fn load_scene(spec: &str) -> CliResult<(MirrorScene, Option<NoiseSpec>)> {
    match spec.strip_prefix("builtin:") {
        Some("two_spheres") => Ok((MirrorScene::two_spheres(), None)),
        Some("sphere_cluster") => Ok((MirrorScene::sphere_cluster(), None)),
        Some(other) => Err(CliError::usage(format!("unknown builtin scene `{other}`"))),
        None => {
            let path = Path::new(spec);
            let file = SceneFile::parse(&io::read_text(path)?)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            let scene = file.to_scene().map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            Ok((scene, file.noise))
        }
    }
}

/// Flags over config file over scene file.
fn merge_noise(flags: &NoiseArgs, cfg: &NoiseArgs, scene: Option<NoiseSpec>) -> NoiseSpec {
    let base = scene.unwrap_or_default();
    NoiseSpec {
        gaussian_sigma: flags.sigma.or(cfg.sigma).unwrap_or(base.gaussian_sigma),
        quantization_gamma: flags.gamma.or(cfg.gamma).unwrap_or(base.quantization_gamma),
        k1: flags.k1.or(cfg.k1).unwrap_or(base.k1),
        seed: flags.seed.or(cfg.seed).unwrap_or(base.seed),
    }
}

fn read_dataset(path: &Path) -> CliResult<CorrespondenceSet> {
    io::read_correspondences(path).map_err(|e| match e {
        Error::Io { .. } => e.into(),
        other => CliError::usage(format!("{}: {other}", path.display())),
    })
}

fn cmd_simulate(a: SimulateArgs, cfg: FileConfig) -> CliResult<()> {
    let (scene, scene_noise) = load_scene(&required(a.scene.or(cfg.scene.clone()), "scene")?)?;
    let out = required(a.out.or(cfg.out.clone()), "out")?;
    let noise = merge_noise(&a.noise, &cfg.noise(), scene_noise);
    let step = a.grid_step.or(cfg.grid_step).unwrap_or(DEFAULT_GRID_STEP);
    let set = generate_dataset(&scene, step, &noise)?;
    io::write_correspondences(&set, &out)?;
    if let Some(p) = a.write_scene {
        io::write_text(&p, &SceneFile::from_scene(&scene, Some(noise)).to_toml())?;
    }
    println!("{} triples written to {}", set.triples.len(), out.display());
    Ok(())
}

fn cmd_estimate_poses(a: DataArgs, cfg: FileConfig) -> CliResult<()> {
    let set = read_dataset(&required(a.data.or(cfg.data.clone()), "data")?)?;
    let out = required(a.out.or(cfg.out.clone()), "out")?;
    let pc = PipelineConfig::for_noise(&set.meta.noise);
    let (pair, diag) = pipeline::estimate_poses(&set, &pc)?;
    io::write_json(&out.join("poses.json"), &diag)?;
    println!("{}", io::to_json(&pair).trim_end());
    Ok(())
}

fn cmd_calibrate(a: DataArgs, cfg: FileConfig) -> CliResult<()> {
    let set = read_dataset(&required(a.data.or(cfg.data.clone()), "data")?)?;
    let out = required(a.out.or(cfg.out.clone()), "out")?;
    let pc = PipelineConfig::for_noise(&set.meta.noise);
    let (_, diag) = pipeline::estimate_poses(&set, &pc)?;
    let cal = pipeline::calibrate(&set, &diag, &pc)?;
    io::write_json(&out.join("poses.json"), &diag)?;
    io::write_json(&out.join("calibration.json"), &cal)?;
    io::write_text(&out.join("sweep.csv"), &cal.sweep.to_csv())?;
    println!("{}", io::to_json(&cal.constrained).trim_end());
    Ok(())
}

fn cmd_reconstruct(a: ReconstructArgs, cfg: FileConfig) -> CliResult<()> {
    let set = read_dataset(&required(a.data.or(cfg.data.clone()), "data")?)?;
    let cal_path = required(a.calibration.or(cfg.calibration), "calibration")?;
    let out = required(a.out.or(cfg.out.clone()), "out")?;
    let cal: Calibration = serde_json::from_str(&io::read_text(&cal_path)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", cal_path.display())))?;
    let lm = specular_core::lm::LmConfig {
        max_iterations: cfg.lm_iterations.unwrap_or(specular_core::lm::LmConfig::default().max_iterations),
        ..Default::default()
    };
    let (est, surface, report) = refine(&cal.constrained, &set.triples, &cal.poses, &lm)?;
    io::write_json(&out.join("camera.json"), &est)?;
    io::write_text(&out.join("convergence.csv"), &report.to_csv())?;
    io::write_point_cloud(&surface, &out.join("surface.ply"))?;
    println!("{} of {} points reconstructed", surface.n_valid(), set.triples.len());
    Ok(())
}

fn read_camera(path: &Path) -> CliResult<CalibrationEstimate> {
    if path.extension().is_some_and(|e| e == "csv") {
        let set = read_dataset(path)?;
        let gt = set
            .meta
            .ground_truth
            .ok_or_else(|| CliError::usage(format!("{} carries no ground truth", path.display())))?;
        return Ok(CalibrationEstimate {
            intrinsics: gt.camera.intrinsics,
            rotation: gt.camera.pose.rotation,
            translation: gt.camera.pose.translation,
            source: specular_core::projection::EstimateSource::Refined,
        });
    }
    serde_json::from_str(&io::read_text(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn read_points(path: &Path) -> CliResult<Vec<Vector3<f64>>> {
    let (props, rows) = io::parse_ply_vertices(&io::read_text(path)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let col = |name: &str| {
        props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| CliError::usage(format!("{}: no `{name}` property", path.display())))
    };
    let (x, y, z) = (col("x")?, col("y")?, col("z")?);
    Ok(rows.iter().map(|r| Vector3::new(r[x], r[y], r[z])).collect())
}

fn cmd_evaluate(a: EvaluateArgs, _cfg: FileConfig) -> CliResult<()> {
    let est = read_camera(&a.estimate)?;
    let gt = read_camera(&a.truth)?;
    let points = match (&a.points, &a.truth_points) {
        (Some(p), Some(q)) => Some((read_points(p)?, read_points(q)?)),
        _ => None,
    };
    let report = ErrorReport::evaluate(
        "estimate",
        &est.intrinsics,
        &est.rotation,
        &est.translation,
        &gt.intrinsics,
        &gt.rotation,
        &gt.translation,
        points.as_ref().map(|(p, q)| (p.as_slice(), q.as_slice())),
    )?;
    print!("{}", ReportTable(std::slice::from_ref(&report)));
    if let Some(out) = a.out {
        io::write_json(&out, &report)?;
    }
    Ok(())
}

fn default_levels(kind: SweepKind) -> Vec<f64> {
    match kind {
        SweepKind::Sigma => vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
        SweepKind::Gamma => vec![0.0, 0.5, 1.0, 1.5, 2.0],
        SweepKind::K1 => vec![-0.02, -0.01, 0.0, 0.01, 0.02],
    }
}

fn cmd_pipeline(a: PipelineArgs, cfg: FileConfig) -> CliResult<()> {
    let out = required(a.out.or(cfg.out.clone()), "out")?;
    let step = a.grid_step.or(cfg.grid_step).unwrap_or(DEFAULT_GRID_STEP);
    let data = a.data.or(cfg.data.clone());
    let scene = match &data {
        Some(_) => None,
        None => Some(load_scene(&required(a.scene.or(cfg.scene.clone()), "scene")?)?),
    };
    let stages = a.stages.or(cfg.stages.clone()).unwrap_or_else(|| vec![Stage::Evaluate]);
    if stages.is_empty() || stages.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::usage("--stages must be listed once each, in pipeline order"));
    }
    let last = *stages.last().expect("non-empty");
    let tune = |mut pc: PipelineConfig| {
        pc.sweep.min_factor = a.focal_min.or(cfg.focal_min).unwrap_or(pc.sweep.min_factor);
        pc.sweep.max_factor = a.focal_max.or(cfg.focal_max).unwrap_or(pc.sweep.max_factor);
        pc.sweep.samples = a.focal_samples.or(cfg.focal_samples).unwrap_or(pc.sweep.samples);
        pc.lm.max_iterations = a.lm_iterations.or(cfg.lm_iterations).unwrap_or(pc.lm.max_iterations);
        pc
    };

    if let Some(kind) = a.sweep.or(cfg.sweep) {
        let (scene, scene_noise) = scene.ok_or_else(|| CliError::usage("--sweep needs --scene"))?;
        let base = merge_noise(&a.noise, &cfg.noise(), scene_noise);
        let levels = a.levels.or(cfg.levels.clone()).unwrap_or_else(|| default_levels(kind));
        let seeds: Vec<u64> = (0..a.seeds.or(cfg.seeds).unwrap_or(20)).collect();
        let param = match kind {
            SweepKind::Sigma => SweepParameter::Sigma,
            SweepKind::Gamma => SweepParameter::Gamma,
            SweepKind::K1 => SweepParameter::K1,
        };
        // the noisy pose thresholds apply from the first non-zero level on
        let runs: Vec<_> = levels
            .iter()
            .flat_map(|&l| {
                let pc = tune(PipelineConfig::for_noise(&param.apply(&base, l, 0)));
                noise_sweep(&scene, step, &base, param, &[l], &seeds, Some(&pc))
            })
            .collect();
        let summaries = summarize(&runs);
        io::write_text(&out.join("sweep_summary.csv"), &summary_csv(&summaries))?;
        io::write_json(&out.join("sweep_runs.json"), &runs)?;
        print!("{}", summary_csv(&summaries));
        return Ok(());
    }

    let set = match (&data, scene) {
        (Some(p), _) => read_dataset(p)?,
        (None, Some((scene, scene_noise))) => {
            generate_dataset(&scene, step, &merge_noise(&a.noise, &cfg.noise(), scene_noise))?
        }
        (None, None) => unreachable!("scene loaded when no data is given"),
    };
    let pc = tune(PipelineConfig::for_noise(&set.meta.noise));
    if last >= Stage::Reconstruct {
        let result = pipeline::run(&set, &pc)?;
        pipeline::write_outputs(&set, &result, &out)?;
        if let (Stage::Evaluate, Some(ev)) = (last, &result.evaluation) {
            print!("{ev}");
        }
        return Ok(());
    }
    let (_, diag) = pipeline::estimate_poses(&set, &pc)?;
    io::write_json(&out.join("poses.json"), &diag)?;
    if last == Stage::Calibrate {
        let cal = pipeline::calibrate(&set, &diag, &pc)?;
        io::write_json(&out.join("calibration.json"), &cal)?;
        io::write_text(&out.join("sweep.csv"), &cal.sweep.to_csv())?;
    }
    Ok(())
}

fn cmd_coverage(a: CoverageArgs) -> CliResult<()> {
    let mut any = false;
    if let (Some(w1), Some(w2), Some(h)) = (a.w1, a.w2, a.h) {
        println!("coverage angle: {:.6} deg", metrics::coverage_angle(w1, w2, h)?);
        any = true;
    }
    if let (Some(h1), Some(h2), Some(s2)) = (a.h1, a.h2, a.s2) {
        println!("reconstructable size: {:.6} mm", metrics::reconstructable_size(h1, h2, s2)?);
        any = true;
    }
    if let (Some(theta), Some(w1), Some(h)) = (a.theta, a.w1, a.h) {
        println!("visible at {theta} deg: {}", metrics::coverage_limit_check(theta, w1, h));
        any = true;
    }
    if !any {
        return Err(CliError::usage("give --w1 --w2 --h, --h1 --h2 --s2, or --theta --w1 --h"));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a, cfg),
        Command::EstimatePoses(a) => cmd_estimate_poses(a, cfg),
        Command::Calibrate(a) => cmd_calibrate(a, cfg),
        Command::Reconstruct(a) => cmd_reconstruct(a, cfg),
        Command::Evaluate(a) => cmd_evaluate(a, cfg),
        Command::Pipeline(a) => cmd_pipeline(a, cfg),
        Command::Coverage(a) => cmd_coverage(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
