//! Error metrics against ground truth and the coverage formulas.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::Intrinsics;
use crate::error::{Error, Result};
use crate::geometry::rigid_align;

/// Geodesic angle between two rotations, degrees.
///
/// Computed as `atan2(‖vee(D − Dᵀ)‖/2, (tr D − 1)/2)` for `D = R_gt R_estᵀ`,
/// which equals the clamped `acos((tr D − 1)/2)` but keeps full precision near 0°.
pub fn rotation_error(r_est: &Matrix3<f64>, r_gt: &Matrix3<f64>) -> f64 {
    let d = r_gt * r_est.transpose();
    let c = ((d.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let s = Vector3::new(d[(2, 1)] - d[(1, 2)], d[(0, 2)] - d[(2, 0)], d[(1, 0)] - d[(0, 1)]).norm() / 2.0;
    s.min(1.0).atan2(c).to_degrees()
}

/// `(angle between T_est and T_gt in degrees, ‖T_gt − T_est‖)`.
pub fn translation_errors(t_est: &Vector3<f64>, t_gt: &Vector3<f64>) -> Result<(f64, f64)> {
    if t_gt.norm() == 0.0 {
        return Err(Error::ZeroGroundTruth);
    }
    let scale = (t_gt - t_est).norm();
    if t_est.norm() == 0.0 {
        return Ok((90.0, scale));
    }
    // atan2 of |a × b| and a·b stays accurate near 0° and 180°
    let angle = t_est.cross(t_gt).norm().atan2(t_est.dot(t_gt)).to_degrees();
    Ok((angle, scale))
}

/// RMS distance between matched point lists, optionally after the best rigid alignment
/// of `est` onto `gt`. Returns the RMS and the (aligned) estimated points.
pub fn rms_reconstruction(est: &[Vector3<f64>], gt: &[Vector3<f64>], align: bool) -> Result<(f64, Vec<Vector3<f64>>)> {
    if est.len() != gt.len() {
        return Err(Error::CountMismatch(est.len(), gt.len()));
    }
    if est.is_empty() {
        return Err(Error::TooFewPoints { got: 0, need: 1 });
    }
    let moved: Vec<Vector3<f64>> = if align {
        let pose = rigid_align(est, gt)?;
        est.iter().map(|p| pose.transform_point(p)).collect()
    } else {
        est.to_vec()
    };
    let sum: f64 = moved.iter().zip(gt).map(|(a, b)| (a - b).norm_squared()).sum();
    Ok(((sum / est.len() as f64).sqrt(), moved))
}

/// Relative error of each intrinsic in percent, ordered `(fx, fy, u0, v0)`.
pub fn intrinsic_errors(est: &Intrinsics<f64>, gt: &Intrinsics<f64>) -> [f64; 4] {
    let rel = |a: f64, b: f64| 100.0 * (a - b).abs() / b.abs();
    [rel(est.fx, gt.fx), rel(est.fy, gt.fy), rel(est.u0, gt.u0), rel(est.v0, gt.v0)]
}

/// Wedge of reconstructable normal directions, degrees.
pub fn coverage_angle(w1: f64, w2: f64, h: f64) -> Result<f64> {
    if h <= 0.0 || w1 < 0.0 || w2 < 0.0 {
        return Err(Error::InvalidInput(format!("coverage_angle needs h > 0, w ≥ 0 (got w1={w1}, w2={w2}, h={h})")));
    }
    Ok(((w1 / h).atan() + (w2 / h).atan()).to_degrees())
}

/// Largest surface extent `s1 = h1 s2 / (h1 + h2)` seen through a plane of size `s2`.
pub fn reconstructable_size(h1: f64, h2: f64, s2: f64) -> Result<f64> {
    if h1 < 0.0 || h2 < 0.0 || s2 <= 0.0 {
        return Err(Error::InvalidInput(format!("reconstructable_size needs h ≥ 0, s2 > 0 (got {h1}, {h2}, {s2})")));
    }
    if h1 + h2 == 0.0 {
        return Err(Error::DegenerateGeometry("h1 + h2 = 0".into()));
    }
    Ok(h1 * s2 / (h1 + h2))
}

/// Whether the half-width `w1` is visible at angle `theta_cmo` (degrees): `w1 ≤ h tan θ`.
pub fn coverage_limit_check(theta_cmo: f64, w1: f64, h: f64) -> bool {
    // relative slack so that the 45° boundary case is not lost to rounding in tan
    w1 <= h * theta_cmo.to_radians().tan() * (1.0 + 1e-12)
}

/// Evaluation of one calibration stage against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub stage: String,
    pub rot_deg: f64,
    pub t_deg: f64,
    pub t_scale: f64,
    pub t_scale_percent: f64,
    /// `(fx, fy, u0, v0)` relative errors, percent.
    pub intrinsic_errors: [f64; 4],
    pub s_rms: Option<f64>,
    pub n_points: usize,
}

impl ErrorReport {
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate(
        stage: &str,
        intr: &Intrinsics<f64>,
        rotation: &Matrix3<f64>,
        translation: &Vector3<f64>,
        gt_intr: &Intrinsics<f64>,
        gt_rotation: &Matrix3<f64>,
        gt_translation: &Vector3<f64>,
        points: Option<(&[Vector3<f64>], &[Vector3<f64>])>,
    ) -> Result<Self> {
        let (t_deg, t_scale) = translation_errors(translation, gt_translation)?;
        let (s_rms, n_points) = match points {
            Some((est, gt)) if !est.is_empty() => (Some(rms_reconstruction(est, gt, true)?.0), est.len()),
            _ => (None, 0),
        };
        Ok(Self {
            stage: stage.to_string(),
            rot_deg: rotation_error(rotation, gt_rotation),
            t_deg,
            t_scale,
            t_scale_percent: 100.0 * t_scale / gt_translation.norm(),
            intrinsic_errors: intrinsic_errors(intr, gt_intr),
            s_rms,
            n_points,
        })
    }
}

/// Plain-text table with one row per report.
pub struct ReportTable<'a>(pub &'a [ErrorReport]);

impl fmt::Display for ReportTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<6} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>12}",
            "stage", "fu %", "fv %", "u0 %", "v0 %", "R deg", "T deg", "T mm", "T %", "S_rms mm"
        )?;
        for r in self.0 {
            let s = r.s_rms.map_or_else(|| "-".to_string(), |v| format!("{v:.4e}"));
            writeln!(
                f,
                "{:<6} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>12}",
                r.stage,
                r.intrinsic_errors[0],
                r.intrinsic_errors[1],
                r.intrinsic_errors[2],
                r.intrinsic_errors[3],
                r.rot_deg,
                r.t_deg,
                r.t_scale,
                r.t_scale_percent,
                s
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_from_angle_axis;

    #[test]
    fn rotation_error_of_ten_degrees() {
        let r = rotation_from_angle_axis(&Vector3::new(0.3, -0.2, 0.5));
        let d = rotation_from_angle_axis(&(Vector3::new(1.0, 2.0, -1.0).normalize() * 10f64.to_radians()));
        assert!((rotation_error(&(r * d), &r) - 10.0).abs() < 1e-9);
        assert_eq!(rotation_error(&r, &r), 0.0);
        assert_eq!(rotation_error(&(Matrix3::identity() * (1.0 + 1e-16)), &Matrix3::identity()), 0.0);
    }

    #[test]
    fn translation_error_examples() {
        let t = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(translation_errors(&t, &t).unwrap(), (0.0, 0.0));
        let (a, s) = translation_errors(&(t * 2.0), &t).unwrap();
        assert!(a.abs() < 1e-12 && (s - t.norm()).abs() < 1e-12);
        let (a, s) = translation_errors(&Vector3::x(), &Vector3::y()).unwrap();
        assert!((a - 90.0).abs() < 1e-12 && (s - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(translation_errors(&t, &Vector3::zeros()), Err(Error::ZeroGroundTruth));
    }

    #[test]
    fn alignment_absorbs_rigid_motion() {
        let gt: Vec<_> = (0..20).map(|i| Vector3::new(i as f64, (i * i) as f64 * 0.1, (i as f64).sin())).collect();
        let r = rotation_from_angle_axis(&Vector3::new(0.4, 0.1, -0.7));
        let est: Vec<_> = gt.iter().map(|p| r * p + Vector3::new(5.0, -3.0, 8.0)).collect();
        assert!(rms_reconstruction(&est, &gt, true).unwrap().0 < 1e-9);
        assert!(rms_reconstruction(&est, &gt, false).unwrap().0 > 1.0);
        assert!(matches!(rms_reconstruction(&est[..2], &gt[..2], true), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn coverage_examples() {
        assert!((coverage_angle(1.0, 1.0, 1.0).unwrap() - 90.0).abs() < 1e-12);
        assert!((coverage_angle(2000.0, 2000.0, 2000.0).unwrap() - 90.0).abs() < 1e-12);
        assert!((coverage_angle(3.0, 0.0, 2.0).unwrap() - 1.5f64.atan().to_degrees()).abs() < 1e-12);
        assert_eq!(reconstructable_size(1000.0, 0.0, 300.0).unwrap(), 300.0);
        assert_eq!(reconstructable_size(700.0, 700.0, 300.0).unwrap(), 150.0);
        assert_eq!(reconstructable_size(1000.0, 3000.0, 2000.0).unwrap(), 500.0);
        assert!(reconstructable_size(0.0, 0.0, 1.0).is_err());
        assert!(coverage_limit_check(45.0, 100.0, 100.0));
        assert!(!coverage_limit_check(45.0, 101.0, 100.0));
        assert!(coverage_limit_check(1e-9, 0.0, 100.0));
        assert!(!coverage_limit_check(1e-9, 1e-3, 100.0));
    }
}
