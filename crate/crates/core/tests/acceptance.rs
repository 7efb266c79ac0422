//! One line per acceptance criterion. Criteria that are not met are printed as
//! FAIL without failing the test.

use std::io::Write;
use std::time::Instant;

use nalgebra::{Matrix3x4, Matrix4, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use specular_core::crossratio::{cross_ratio_s, lift_triple, reconstruct_surface, refine};
use specular_core::geometry::{rotation_from_angle_axis, RigidPose};
use specular_core::io;
use specular_core::lm::LmConfig;
use specular_core::metrics::{coverage_angle, reconstructable_size};
use specular_core::pipeline::{
    estimate_poses, noise_sweep, run, run_scene, summarize, write_outputs, PipelineConfig, SweepParameter, SweepSummary,
};
use specular_core::plane_pose::PlanePosePair;
use specular_core::plucker::{
    line_from_points, line_to_point_matrix, point_to_line_matrix, projective_similarity, reciprocal_product,
    PointProjectionMatrix,
};
use specular_core::projection::{CalibrationEstimate, EstimateSource};
use specular_core::camera::{Camera, Intrinsics};
use specular_core::sim::{generate_dataset, MirrorScene, NoiseSpec};
use specular_core::Error;

const NOISY_STEP: f64 = 4.0;
const SEEDS: u64 = 20;

// written to the stdout handle directly so the lines survive libtest's capture
fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn report(n: u32, pass: bool, detail: &str) -> bool {
    say(&format!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" }));
    pass
}

fn stage<'a>(s: &'a SweepSummary, name: &str) -> &'a specular_core::metrics::ErrorReport {
    s.stages.iter().find(|r| r.stage == name).expect("stage present")
}

fn sweep(param: SweepParameter, levels: &[f64]) -> Vec<SweepSummary> {
    let seeds: Vec<u64> = (0..SEEDS).collect();
    let runs = noise_sweep(&MirrorScene::sphere_cluster(), NOISY_STEP, &NoiseSpec::default(), param, levels, &seeds, None);
    summarize(&runs)
}

fn criterion_1() -> bool {
    let t = Instant::now();
    let scene = MirrorScene::two_spheres();
    let out = match run_scene(&scene, 8.0, &NoiseSpec::default(), &PipelineConfig::default()) {
        Ok(o) => o,
        Err(e) => return report(1, false, &format!("pipeline error: {e}")),
    };
    let secs = t.elapsed().as_secs_f64();
    let n = out.surface.pixels.len();
    let ev = out.evaluation.expect("simulated data has ground truth");
    let cr = ev.stage("CR").expect("refined stage");
    let pose_rot = ev.pose_rot_deg[0].max(ev.pose_rot_deg[1]);
    let pose_t = ev.pose_t_rel[0].max(ev.pose_t_rel[1]);
    // percent, so 1e-4 relative is 1e-2
    let intr = cr.intrinsic_errors.iter().fold(0.0f64, |a, &b| a.max(b));
    let s_rms = cr.s_rms.unwrap_or(f64::INFINITY);
    let pass = n >= 2000 && pose_rot < 1e-5 && pose_t < 1e-6 && intr < 1e-2 && s_rms < 1e-4 && secs < 30.0;
    report(
        1,
        pass,
        &format!(
            "triples {n}, pose R {pose_rot:.2e} deg, pose T {pose_t:.2e} rel, intrinsics {:.2e} rel, S_rms {s_rms:.2e} mm, {secs:.1} s",
            intr / 100.0
        ),
    )
}

fn criterion_2() -> bool {
    let s = &sweep(SweepParameter::Sigma, &[2.0])[0];
    let (l, el, cr) = (stage(s, "L"), stage(s, "EL"), stage(s, "CR"));
    let key = |r: &specular_core::metrics::ErrorReport| [r.intrinsic_errors[0], r.intrinsic_errors[1], r.rot_deg];
    let (kl, kel, kcr) = (key(l), key(el), key(cr));
    let ordered = (0..3).all(|i| kcr[i] <= kel[i] && kel[i] <= kl[i]);
    let pass = s.failures == 0 && ordered && cr.rot_deg < 0.5 && cr.intrinsic_errors[0] < 1.0;
    report(
        2,
        pass,
        &format!(
            "sigma 2, {} runs, {} failed; (fu %, fv %, R deg) L {:.3?} EL {:.3?} CR {:.3?}",
            s.runs, s.failures, kl, kel, kcr
        ),
    )
}

fn criterion_3() -> bool {
    let sums = sweep(SweepParameter::Sigma, &[0.5, 1.5, 3.0]);
    let rows: Vec<[f64; 5]> = sums
        .iter()
        .map(|s| {
            let cr = stage(s, "CR");
            let e = cr.intrinsic_errors;
            [s.pose_rot_deg, e[0], e[1], e[2], e[3]]
        })
        .collect();
    let monotone = (0..5).all(|k| rows[0][k] <= rows[1][k] && rows[1][k] <= rows[2][k]);
    let last = &rows[2];
    let failures: usize = sums.iter().map(|s| s.failures).sum();
    let pass = failures == 0 && monotone && last[1..].iter().all(|&e| e < 5.0);
    report(
        3,
        pass,
        &format!("(pose R deg, fu %, fv %, u0 %, v0 %) at sigma 0.5 {:.3?}, 1.5 {:.3?}, 3.0 {:.3?}; {failures} failed", rows[0], rows[1], rows[2]),
    )
}

fn criterion_4() -> bool {
    let s = &sweep(SweepParameter::Gamma, &[2.0])[0];
    let cr = stage(s, "CR");
    let pass = s.failures == 0 && cr.intrinsic_errors[0] < 1.0 && cr.rot_deg < 1.0;
    report(4, pass, &format!("gamma 2 px: fu {:.3} %, R {:.3} deg, {} failed", cr.intrinsic_errors[0], cr.rot_deg, s.failures))
}

fn criterion_5() -> bool {
    let sums = sweep(SweepParameter::K1, &[-0.02, 0.02]);
    let mut pass = true;
    let mut parts = Vec::new();
    for s in &sums {
        let cr = stage(s, "CR");
        pass &= s.failures == 0 && cr.intrinsic_errors[0] < 5.0 && cr.rot_deg < 3.0;
        parts.push(format!("k1 {:+}: fu {:.3} %, R {:.3} deg, {} failed", s.level, cr.intrinsic_errors[0], cr.rot_deg, s.failures));
    }
    report(5, pass, &parts.join("; "))
}

fn random_point(rng: &mut ChaCha8Rng, r: f64) -> Vector3<f64> {
    Vector3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r))
}

fn random_camera(rng: &mut ChaCha8Rng) -> Camera<f64> {
    let intrinsics = Intrinsics {
        fx: rng.random_range(300.0..3000.0),
        fy: rng.random_range(300.0..3000.0),
        u0: rng.random_range(100.0..900.0),
        v0: rng.random_range(100.0..700.0),
    };
    let rotation = rotation_from_angle_axis(&random_point(rng, 1.5));
    let translation = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(8.0..15.0));
    Camera { intrinsics, pose: RigidPose::new(rotation, translation) }
}

fn criterion_6() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = [0.0f64; 6];

    for _ in 0..10_000 {
        let (a, b, c, d) = (random_point(&mut rng, 10.0), random_point(&mut rng, 10.0), random_point(&mut rng, 10.0), random_point(&mut rng, 10.0));
        let (l, m) = (line_from_points(&a, &b).unwrap(), line_from_points(&c, &d).unwrap());
        let scale = l.raw().norm() * m.raw().norm();
        worst[0] = worst[0].max((l.self_intersection() / l.raw().norm_squared()).abs());
        let det = Matrix4::from_rows(&[a.push(1.0).transpose(), b.push(1.0).transpose(), c.push(1.0).transpose(), d.push(1.0).transpose()]).determinant();
        worst[0] = worst[0].max((reciprocal_product(&l, &m) - det).abs() / scale);
    }

    for _ in 0..1_000 {
        let cam = random_camera(&mut rng);
        let p: Matrix3x4<f64> = cam.projection_matrix();
        let pp = PointProjectionMatrix::new(p).unwrap();
        let back = line_to_point_matrix(&point_to_line_matrix(&pp)).unwrap();
        worst[1] = worst[1].max(1.0 - projective_similarity(back.entries(), pp.entries()));
        let (a, b) = (random_point(&mut rng, 3.0), random_point(&mut rng, 3.0));
        let img = point_to_line_matrix(&pp).project_line(&line_from_points(&a, &b).unwrap()).unwrap();
        for x in [pp.project(&a), pp.project(&b)] {
            worst[1] = worst[1].max((img.dot(&x) / (img.norm() * x.norm())).abs());
        }
    }

    for _ in 0..1_000 {
        let cam = random_camera(&mut rng);
        let x2 = random_point(&mut rng, 2.0);
        let u = random_point(&mut rng, 1.0).normalize();
        let (d, a, s) = (rng.random_range(1.0..4.0), rng.random_range(0.2..0.8), rng.random_range(-3.0..-0.1));
        let pts = [x2 + u * d, x2 + u * (a * d), x2];
        let m = x2 + u * s;
        let img: Vec<Vector2<f64>> = pts.iter().map(|p| cam.project(p).unwrap()).collect();
        let got = cross_ratio_s(&pts, &[img[0], img[1], img[2]], &cam.project(&m).unwrap()).unwrap();
        worst[2] = worst[2].max((got - s).abs() / d);
    }

    // every reconstructed point lies on its X2 X0 line, noise or not
    let scene = MirrorScene::sphere_cluster();
    let set = generate_dataset(&scene, 12.0, &NoiseSpec { gaussian_sigma: 2.0, seed: 3, ..Default::default() }).unwrap();
    let poses = PlanePosePair { pose1: scene.plane_motions[0], pose2: scene.plane_motions[1] };
    let est = CalibrationEstimate {
        intrinsics: scene.camera.intrinsics,
        rotation: scene.camera.pose.rotation,
        translation: scene.camera.pose.translation,
        source: EstimateSource::Refined,
    };
    let surf = reconstruct_surface(&est, &set.triples, &poses);
    for (i, t) in set.triples.iter().enumerate() {
        if surf.valid[i].is_valid() {
            let l = lift_triple(t, &poses);
            worst[3] = worst[3].max(line_from_points(&l[0], &l[2]).unwrap().distance_to_point(&surf.points[i]));
        }
    }

    let start = CalibrationEstimate {
        intrinsics: Intrinsics { fx: 1330.0, fy: 1470.0, u0: 610.0, v0: 500.0 },
        rotation: est.rotation * rotation_from_angle_axis(&Vector3::new(0.02, -0.01, 0.015)),
        translation: est.translation + Vector3::new(20.0, -15.0, 30.0),
        source: EstimateSource::Constrained,
    };
    let (_, _, lm) = refine(&start, &set.triples, &poses, &LmConfig::default()).unwrap();
    let mut last = lm.initial_cost;
    let mut monotone = lm.final_cost <= lm.initial_cost;
    for it in &lm.iterations {
        monotone &= it.cost <= last;
        last = it.cost;
    }
    worst[4] = if monotone { 0.0 } else { 1.0 };

    let h = 1234.5;
    worst[5] = (coverage_angle(h, h, h).unwrap() - 90.0).abs() + (reconstructable_size(h, h, 800.0).unwrap() - 400.0).abs();

    let pass = worst[0] < 1e-12 && worst[1] < 1e-9 && worst[2] < 1e-8 && worst[3] < 1e-6 && worst[4] == 0.0 && worst[5] < 1e-12;
    report(
        6,
        pass,
        &format!(
            "plucker {:.1e}, projection {:.1e}, cross-ratio {:.1e}, on-line {:.1e} mm, LM monotone {monotone}, coverage {:.1e}",
            worst[0], worst[1], worst[2], worst[3], worst[5]
        ),
    )
}

fn criterion_7() -> bool {
    let scene = MirrorScene::sphere_cluster().with_translation_only();
    let mut hits = 0;
    for seed in 0..10 {
        let noise = NoiseSpec { gaussian_sigma: 1.0, seed, ..Default::default() };
        let set = generate_dataset(&scene, 12.0, &noise).unwrap();
        if let Err(e) = estimate_poses(&set, &PipelineConfig::for_noise(&noise)) {
            hits += matches!(e.source, Error::RankAmbiguous { .. }) as u32;
        }
    }
    report(7, hits == 10, &format!("pure translation: RankAmbiguous on {hits}/10 seeds"))
}

fn outputs(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let noise = NoiseSpec { gaussian_sigma: 1.0, seed: 42, ..Default::default() };
    let set = generate_dataset(&MirrorScene::sphere_cluster(), 12.0, &noise).unwrap();
    std::fs::create_dir_all(dir).unwrap();
    io::write_correspondences(&set, &dir.join("correspondences.csv")).unwrap();
    let out = run(&set, &PipelineConfig::for_noise(&noise)).unwrap();
    write_outputs(&set, &out, dir).unwrap();
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn criterion_8() -> bool {
    let root = std::path::PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance_determinism");
    let _ = std::fs::remove_dir_all(&root);
    let (a, b) = (outputs(&root.join("a")), outputs(&root.join("b")));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    report(8, !a.is_empty() && a == b, &format!("{} files compared: {}", a.len(), names.join(", ")))
}

#[test]
fn acceptance() {
    let results = [criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_5(), criterion_6(), criterion_7(), criterion_8()];
    let passed = results.iter().filter(|&&p| p).count();
    say(&format!("acceptance: {passed}/8 criteria met"));
}
