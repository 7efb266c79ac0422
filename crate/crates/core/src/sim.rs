//! Synthetic mirror scenes: single-bounce ray tracing and noise models.
//!
//! The world frame is the reference plane's local frame at pose 0. Plane
//! poses 1 and 2 are rigid motions `X_w = R X_local + T` relative to it; the
//! plane itself is the local `z = 0` plane. The camera stores the world to
//! camera motion. Occlusion of the mirror by the reference plane is not
//! modelled.

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, Intrinsics};
use crate::error::{Error, Result};
use crate::geometry::{angle_axis_from_rotation, rotation_from_angle_axis, RigidPose};
use crate::io::{CorrespondenceSet, DatasetMeta, GroundTruth};
use crate::scalar::Real;

/// Minimum number of triples the plane pose solver accepts.
pub const MIN_TRIPLES: usize = 12;

const HIT_EPS: f64 = 1e-6;

/// Analytic mirror surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Mirror {
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    /// `z' = (x'² + y'²) / (4 focal)` in a frame with origin at `vertex` and `z'` along `axis`.
    Paraboloid {
        vertex: Vector3<f64>,
        axis: Vector3<f64>,
        focal: f64,
    },
}

impl Mirror {
    /// Nearest intersection with `t > HIT_EPS` and the unit normal facing the ray.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        let (t, n) = match *self {
            Mirror::Sphere { center, radius } => {
                let oc = origin - center;
                let b = dir.dot(&oc);
                let c = oc.norm_squared() - radius * radius;
                let a = dir.norm_squared();
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = [(-b - sq) / a, (-b + sq) / a]
                    .into_iter()
                    .find(|&t| t > HIT_EPS)?;
                let p = origin + dir * t;
                (t, (p - center) / radius)
            }
            Mirror::Paraboloid { vertex, axis, focal } => {
                let w = axis.normalize();
                // squared distance from the axis minus 4 f (height along the axis)
                let o = origin - vertex;
                let (oz, dz) = (o.dot(&w), dir.dot(&w));
                let (op, dp) = (o - w * oz, dir - w * dz);
                let a = dp.norm_squared();
                let b = 2.0 * op.dot(&dp) - 4.0 * focal * dz;
                let c = op.norm_squared() - 4.0 * focal * oz;
                let roots = if a.abs() < 1e-15 {
                    if b.abs() < 1e-15 {
                        return None;
                    }
                    vec![-c / b]
                } else {
                    let disc = b * b - 4.0 * a * c;
                    if disc < 0.0 {
                        return None;
                    }
                    let sq = disc.sqrt();
                    let mut r = vec![(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)];
                    r.sort_by(|x, y| x.total_cmp(y));
                    r
                };
                let t = roots.into_iter().find(|&t| t > HIT_EPS)?;
                let p = o + dir * t;
                let pz = p.dot(&w);
                let grad = (p - w * pz) * 2.0 - w * (4.0 * focal);
                (t, grad.normalize())
            }
        };
        let n = if n.dot(dir) > 0.0 { -n } else { n };
        Some((t, n))
    }
}

/// Reflects `d` about the unit normal `n`.
pub fn reflect(d: &Vector3<f64>, n: &Vector3<f64>) -> Vector3<f64> {
    d - n * (2.0 * d.dot(n))
}

/// Camera, mirrors and the three reference-plane poses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorScene {
    pub mirrors: Vec<Mirror>,
    pub camera: Camera<f64>,
    /// Poses 1 and 2 of the plane relative to pose 0.
    pub plane_motions: [RigidPose<f64>; 2],
    /// Half-widths `(w1, w2)` of the plane in mm.
    pub plane_extent: (f64, f64),
    /// `(width, height)` in pixels.
    pub image_size: (u32, u32),
}

/// One image pixel and its three reference-plane correspondences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectionTriple {
    pub pixel: Vector2<f64>,
    /// In-plane points for poses 0, 1, 2.
    pub x: [Vector2<f64>; 3],
    pub gt_point: Option<Vector3<f64>>,
    pub gt_normal: Option<Vector3<f64>>,
}

/// Perturbations applied by [`generate_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Gaussian std-dev on plane coordinates, mm.
    pub gaussian_sigma: f64,
    /// Half-width of the uniform pixel noise, px.
    pub quantization_gamma: f64,
    /// One-parameter radial distortion coefficient.
    pub k1: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian_sigma >= 0.0 && self.quantization_gamma >= 0.0 && self.k1.is_finite()) {
            return Err(Error::InvalidInput("noise levels must be non-negative".into()));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.gaussian_sigma == 0.0 && self.quantization_gamma == 0.0 && self.k1 == 0.0
    }
}

impl MirrorScene {
    pub fn plane_pose(&self, i: usize) -> RigidPose<f64> {
        match i {
            0 => RigidPose::identity(),
            _ => self.plane_motions[i - 1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rot_ok = |r: &Matrix3<f64>| {
            (r.transpose() * r - Matrix3::identity()).norm() < 1e-12 && (r.determinant() - 1.0).abs() < 1e-12
        };
        if !rot_ok(&self.camera.pose.rotation) || !self.plane_motions.iter().all(|p| rot_ok(&p.rotation)) {
            return Err(Error::InvalidInput("rotation is not in SO(3)".into()));
        }
        if !(self.plane_extent.0 > 0.0 && self.plane_extent.1 > 0.0) {
            return Err(Error::InvalidInput("plane extent must be positive".into()));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(Error::InvalidInput("image size must be positive".into()));
        }
        for m in &self.mirrors {
            match *m {
                Mirror::Sphere { radius, .. } if radius <= 0.0 => {
                    return Err(Error::InvalidInput("sphere radius must be positive".into()))
                }
                Mirror::Paraboloid { focal, axis, .. } if focal <= 0.0 || axis.norm() == 0.0 => {
                    return Err(Error::InvalidInput("invalid paraboloid".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn nearest_hit(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        self.mirrors
            .iter()
            .filter_map(|m| m.intersect(origin, dir))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Builds a scene from a layout expressed in the camera frame (camera at the
    /// origin looking down +z): `plane_poses[i]` maps plane-local points into
    /// camera coordinates and the mirrors are given in camera coordinates.
    pub fn from_camera_layout(
        intrinsics: Intrinsics<f64>,
        image_size: (u32, u32),
        plane_poses: [RigidPose<f64>; 3],
        plane_extent: (f64, f64),
        mirrors: Vec<Mirror>,
    ) -> Self {
        let p0 = plane_poses[0];
        let to_world = p0.inverse();
        let mirrors = mirrors
            .into_iter()
            .map(|m| match m {
                Mirror::Sphere { center, radius } => Mirror::Sphere {
                    center: to_world.transform_point(&center),
                    radius,
                },
                Mirror::Paraboloid { vertex, axis, focal } => Mirror::Paraboloid {
                    vertex: to_world.transform_point(&vertex),
                    axis: to_world.rotation * axis,
                    focal,
                },
            })
            .collect();
        Self {
            mirrors,
            camera: Camera { intrinsics, pose: p0 },
            plane_motions: [to_world.compose(&plane_poses[1]), to_world.compose(&plane_poses[2])],
            plane_extent,
            image_size,
        }
    }

    /// Two spheres of radius 300 mm side by side, 2000×2000 mm plane, f = 1400 px.
    pub fn two_spheres() -> Self {
        let r0 = facing(&Vector3::new(0.0, -0.3, 1.0));
        let t0 = Vector3::new(0.0, 0.0, 700.0);
        let poses = [
            RigidPose::new(r0, t0),
            RigidPose::new(rot_deg(12.0, -8.0, 5.0) * r0, t0 + Vector3::new(80.0, -60.0, -150.0)),
            RigidPose::new(rot_deg(-10.0, 15.0, -6.0) * r0, t0 + Vector3::new(-120.0, 50.0, -300.0)),
        ];
        let mirrors = vec![
            Mirror::Sphere { center: Vector3::new(-330.0, 0.0, 1300.0), radius: 300.0 },
            Mirror::Sphere { center: Vector3::new(330.0, 0.0, 1300.0), radius: 300.0 },
        ];
        Self::from_camera_layout(default_intrinsics(), (1280, 960), poses, (1000.0, 1000.0), mirrors)
    }

    /// Four spheres of different radii at different depths seen through a
    /// 3000×3000 mm plane placed between the camera and the mirrors. The plane
    /// moves 500 and 1000 mm towards the camera with 25° rotations, so the
    /// reflected rays are sampled far apart along their length.
    pub fn sphere_cluster() -> Self {
        let r0 = facing(&Vector3::new(0.0, 0.0, 1.0));
        let t0 = Vector3::new(0.0, 0.0, 1200.0);
        let a = Vector3::<f64>::new(12.0, -8.0, 5.0);
        let b = Vector3::<f64>::new(-10.0, 15.0, -6.0);
        let ra = a * (25.0 / a.norm());
        let rb = b * (25.0 / b.norm());
        let poses = [
            RigidPose::new(r0, t0),
            RigidPose::new(rot_deg(ra.x, ra.y, ra.z) * r0, t0 + Vector3::new(80.0, -60.0, -500.0)),
            RigidPose::new(rot_deg(rb.x, rb.y, rb.z) * r0, t0 + Vector3::new(-120.0, 50.0, -1000.0)),
        ];
        let mirrors = vec![
            Mirror::Sphere { center: Vector3::new(-500.0, -300.0, 1900.0), radius: 350.0 },
            Mirror::Sphere { center: Vector3::new(500.0, -300.0, 1700.0), radius: 300.0 },
            Mirror::Sphere { center: Vector3::new(-250.0, 350.0, 1500.0), radius: 250.0 },
            Mirror::Sphere { center: Vector3::new(400.0, 350.0, 2100.0), radius: 400.0 },
        ];
        Self::from_camera_layout(default_intrinsics(), (1280, 960), poses, (1500.0, 1500.0), mirrors)
    }

    /// The same scene with the plane rotations removed (translation-only motion).
    pub fn with_translation_only(&self) -> Self {
        let mut s = self.clone();
        for m in &mut s.plane_motions {
            m.rotation = Matrix3::identity();
        }
        s
    }
}

/// Intrinsics used by the built-in scenes: f = 1400 px, principal point at the
/// center of a 1280×960 image.
pub fn default_intrinsics() -> Intrinsics<f64> {
    Intrinsics { fx: 1400.0, fy: 1400.0, u0: 639.5, v0: 479.5 }
}

fn rot_deg(x: f64, y: f64, z: f64) -> Matrix3<f64> {
    rotation_from_angle_axis(&Vector3::new(x, y, z).map(f64::to_radians))
}

/// Rotation whose third column is `normal` and whose first column is horizontal.
fn facing(normal: &Vector3<f64>) -> Matrix3<f64> {
    let z = normal.normalize();
    let x = Vector3::y().cross(&z).normalize();
    let y = z.cross(&x);
    Matrix3::from_columns(&[x, y, z])
}

/// Casts the visual ray through `pixel`, reflects it once and intersects the
/// plane at all three poses. `None` marks a miss.
pub fn trace_reflection(scene: &MirrorScene, pixel: &Vector2<f64>) -> Option<ReflectionTriple> {
    let (w, h) = scene.image_size;
    if pixel.x < 0.0 || pixel.y < 0.0 || pixel.x > (w - 1) as f64 || pixel.y > (h - 1) as f64 {
        return None;
    }
    let c = scene.camera.center();
    let d = scene.camera.ray_direction(pixel);
    let (t, n) = scene.nearest_hit(&c, &d)?;
    let m = c + d * t;
    let r = reflect(&d, &n);
    if scene.nearest_hit(&m, &r).is_some() {
        return None;
    }
    let (w1, w2) = scene.plane_extent;
    let mut x = [Vector2::zeros(); 3];
    for (i, xi) in x.iter_mut().enumerate() {
        let pose = scene.plane_pose(i);
        let nz = pose.rotation.column(2).into_owned();
        let den = r.dot(&nz);
        if den.abs() < 1e-12 {
            return None;
        }
        let s = (pose.translation - m).dot(&nz) / den;
        if s <= 0.0 {
            return None;
        }
        let local = pose.inverse().transform_point(&(m + r * s));
        if local.x.abs() > w1 || local.y.abs() > w2 {
            return None;
        }
        *xi = Vector2::new(local.x, local.y);
    }
    Some(ReflectionTriple { pixel: *pixel, x, gt_point: Some(m), gt_normal: Some(n) })
}

/// `(x, y)(1 + k1 r²)` on normalized image coordinates.
pub fn apply_radial_distortion<T: Real>(p: &Vector2<T>, k1: T) -> Vector2<T> {
    p * (T::one() + k1 * p.norm_squared())
}

/// Center and scale mapping pixels to normalized coordinates in `[−1, 1]`
/// along the longer image side.
pub fn normalization(image_size: (u32, u32)) -> (Vector2<f64>, f64) {
    let (w, h) = (image_size.0 as f64, image_size.1 as f64);
    (Vector2::new((w - 1.0) / 2.0, (h - 1.0) / 2.0), w.max(h) / 2.0)
}

/// Regular pixel grid `(i·step, j·step)` in row-major order.
pub fn pixel_grid(image_size: (u32, u32), step: f64) -> Vec<Vector2<f64>> {
    let (w, h) = (image_size.0 as f64 - 1.0, image_size.1 as f64 - 1.0);
    let nu = (w / step).floor() as usize + 1;
    let nv = (h / step).floor() as usize + 1;
    (0..nv)
        .flat_map(|j| (0..nu).map(move |i| Vector2::new(i as f64 * step, j as f64 * step)))
        .collect()
}

/// Per-triple random stream derived from `(seed, pixel index)`.
fn triple_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn perturb(scene: &MirrorScene, noise: &NoiseSpec, index: u64, t: &ReflectionTriple) -> Option<ReflectionTriple> {
    let mut out = *t;
    out.gt_point = t.gt_point;
    let mut rng = triple_rng(noise.seed, index);
    if noise.gaussian_sigma > 0.0 {
        let g = Normal::new(0.0, noise.gaussian_sigma).expect("finite sigma");
        for x in out.x.iter_mut() {
            x.x += g.sample(&mut rng);
            x.y += g.sample(&mut rng);
        }
    }
    if noise.k1 != 0.0 {
        let (c, s) = normalization(scene.image_size);
        let p = apply_radial_distortion(&((out.pixel - c) / s), noise.k1);
        out.pixel = p * s + c;
    }
    if noise.quantization_gamma > 0.0 {
        let g = noise.quantization_gamma;
        out.pixel.x += rng.random_range(-g..=g);
        out.pixel.y += rng.random_range(-g..=g);
    }
    let (w, h) = scene.image_size;
    let inside = out.pixel.x >= 0.0
        && out.pixel.y >= 0.0
        && out.pixel.x <= (w - 1) as f64
        && out.pixel.y <= (h - 1) as f64;
    inside.then_some(out)
}

/// Traces a pixel grid and applies noise. Ground truth stays unperturbed.
///
/// Pixels pushed outside the image by distortion or quantization are dropped.
pub fn generate_dataset(scene: &MirrorScene, grid_step: f64, noise: &NoiseSpec) -> Result<CorrespondenceSet> {
    if !(grid_step >= 1.0) {
        return Err(Error::InvalidInput("grid step must be at least one pixel".into()));
    }
    scene.validate()?;
    noise.validate()?;
    let grid = pixel_grid(scene.image_size, grid_step);
    let triples: Vec<ReflectionTriple> = grid
        .par_iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let t = trace_reflection(scene, p)?;
            if noise.is_zero() {
                Some(t)
            } else {
                perturb(scene, noise, i as u64, &t)
            }
        })
        .collect();
    if triples.len() < MIN_TRIPLES {
        return Err(Error::EmptyDataset { got: triples.len(), need: MIN_TRIPLES });
    }
    Ok(CorrespondenceSet {
        triples,
        meta: DatasetMeta {
            image_size: scene.image_size,
            plane_extent: scene.plane_extent,
            noise: *noise,
            grid_step,
            ground_truth: Some(GroundTruth {
                plane_motions: scene.plane_motions,
                camera: scene.camera,
            }),
        },
    })
}

/// Distance of the lifted pose-1 point from the line through the lifted pose-0 and pose-2 points.
pub fn colinearity_residual(t: &ReflectionTriple, motions: &[RigidPose<f64>; 2]) -> f64 {
    let x0 = Vector3::new(t.x[0].x, t.x[0].y, 0.0);
    let x1 = motions[0].lift(&t.x[1]);
    let x2 = motions[1].lift(&t.x[2]);
    let u = x0 - x2;
    let n = u.norm();
    if n == 0.0 {
        return (x1 - x0).norm();
    }
    (x1 - x2).cross(&u).norm() / n
}

/// Serialized scene description (`format_version = 1`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub format_version: u32,
    /// `[width, height]` pixels.
    pub image_size: [u32; 2],
    /// Half-widths `[w1, w2]` mm.
    pub plane_extent: [f64; 2],
    pub camera: CameraEntry,
    /// Exactly two entries: plane poses 1 and 2 relative to pose 0.
    pub plane_motion: Vec<PoseEntry>,
    pub mirror: Vec<Mirror>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraEntry {
    pub fx: f64,
    pub fy: f64,
    pub u0: f64,
    pub v0: f64,
    /// World-to-camera rotation, angle-axis radians.
    pub rotation: [f64; 3],
    /// World-to-camera translation, mm.
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseEntry {
    /// Angle-axis radians.
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

impl PoseEntry {
    fn to_pose(&self) -> RigidPose<f64> {
        RigidPose::new(
            rotation_from_angle_axis(&Vector3::from(self.rotation)),
            Vector3::from(self.translation),
        )
    }

    fn from_pose(p: &RigidPose<f64>) -> Self {
        Self {
            rotation: angle_axis_from_rotation(&p.rotation).into(),
            translation: p.translation.into(),
        }
    }
}

impl SceneFile {
    pub fn from_scene(scene: &MirrorScene, noise: Option<NoiseSpec>) -> Self {
        let cam = &scene.camera;
        let pose = PoseEntry::from_pose(&cam.pose);
        Self {
            format_version: 1,
            image_size: [scene.image_size.0, scene.image_size.1],
            plane_extent: [scene.plane_extent.0, scene.plane_extent.1],
            camera: CameraEntry {
                fx: cam.intrinsics.fx,
                fy: cam.intrinsics.fy,
                u0: cam.intrinsics.u0,
                v0: cam.intrinsics.v0,
                rotation: pose.rotation,
                translation: pose.translation,
            },
            plane_motion: scene.plane_motions.iter().map(PoseEntry::from_pose).collect(),
            mirror: scene.mirrors.clone(),
            noise,
        }
    }

    pub fn to_scene(&self) -> Result<MirrorScene> {
        if self.format_version != 1 {
            return Err(Error::SchemaMismatch(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        if self.plane_motion.len() != 2 {
            return Err(Error::SchemaMismatch(format!(
                "expected 2 plane_motion entries, found {}",
                self.plane_motion.len()
            )));
        }
        let c = &self.camera;
        let scene = MirrorScene {
            mirrors: self.mirror.clone(),
            camera: Camera {
                intrinsics: Intrinsics::new(c.fx, c.fy, c.u0, c.v0)?,
                pose: PoseEntry { rotation: c.rotation, translation: c.translation }.to_pose(),
            },
            plane_motions: [self.plane_motion[0].to_pose(), self.plane_motion[1].to_pose()],
            plane_extent: (self.plane_extent[0], self.plane_extent[1]),
            image_size: (self.image_size[0], self.image_size[1]),
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::ParseError { line, msg: e.message().to_string() }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis_scene() -> MirrorScene {
        // camera at the origin on the sphere's axis, plane behind the camera
        let poses = [
            RigidPose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, -100.0)),
            RigidPose::new(rot_deg(5.0, 0.0, 0.0), Vector3::new(0.0, 0.0, -200.0)),
            RigidPose::new(rot_deg(0.0, 5.0, 0.0), Vector3::new(0.0, 0.0, -300.0)),
        ];
        MirrorScene::from_camera_layout(
            default_intrinsics(),
            (1280, 960),
            poses,
            (1000.0, 1000.0),
            vec![Mirror::Sphere { center: Vector3::new(0.0, 0.0, 1000.0), radius: 300.0 }],
        )
    }

    #[test]
    fn normal_incidence_returns_along_the_view_ray() {
        let scene = axis_scene();
        let t = trace_reflection(&scene, &Vector2::new(639.5, 479.5)).unwrap();
        let c = scene.camera.center();
        let pole = t.gt_point.unwrap();
        let motions = scene.plane_motions;
        let x0 = Vector3::new(t.x[0].x, t.x[0].y, 0.0);
        let pts = [x0, motions[0].lift(&t.x[1]), motions[1].lift(&t.x[2])];
        let axis = (pole - c).normalize();
        for p in pts {
            assert!((p - c).cross(&axis).norm() < 1e-9);
        }
        assert!((t.gt_normal.unwrap() + axis).norm() < 1e-12);
    }

    #[test]
    fn law_of_reflection_holds() {
        let d = Vector3::new(0.3, -0.2, 1.0);
        let n = Vector3::new(0.1, 0.2, -1.0).normalize();
        let r = reflect(&d, &n);
        assert!((r.norm() - d.norm()).abs() < 1e-12);
        assert!((d.dot(&n) + r.dot(&n)).abs() < 1e-12);
    }

    #[test]
    fn noise_free_triples_are_colinear() {
        let scene = MirrorScene::two_spheres();
        let set = generate_dataset(&scene, 20.0, &NoiseSpec::default()).unwrap();
        assert!(set.triples.len() > 100);
        for t in &set.triples {
            assert!(colinearity_residual(t, &scene.plane_motions) < 1e-9);
        }
    }

    #[test]
    fn paraboloid_hit_lies_on_surface() {
        let m = Mirror::Paraboloid {
            vertex: Vector3::new(0.0, 0.0, 1000.0),
            axis: Vector3::new(0.0, 0.0, -1.0),
            focal: 400.0,
        };
        let dir = Vector3::new(0.1, 0.05, 1.0).normalize();
        let (t, n) = m.intersect(&Vector3::zeros(), &dir).unwrap();
        let p = dir * t - Vector3::new(0.0, 0.0, 1000.0);
        let z = -p.z;
        assert!((p.x * p.x + p.y * p.y - 4.0 * 400.0 * z).abs() < 1e-6);
        assert!((n.norm() - 1.0).abs() < 1e-12 && n.dot(&dir) < 0.0);
    }

    #[test]
    fn radial_distortion_examples() {
        assert_eq!(apply_radial_distortion(&Vector2::new(0.0, 0.0), 0.3), Vector2::zeros());
        let p = apply_radial_distortion(&Vector2::new(1.0, 0.0), 0.02);
        assert!((p - Vector2::new(1.02, 0.0)).norm() < 1e-15);
        let q = Vector2::new(0.4, -0.7);
        assert_eq!(apply_radial_distortion(&q, 0.0), q);
    }

    #[test]
    fn zero_noise_is_identity_and_noise_is_deterministic() {
        let scene = MirrorScene::two_spheres();
        let clean = generate_dataset(&scene, 25.0, &NoiseSpec::default()).unwrap();
        for t in &clean.triples {
            assert_eq!(*t, trace_reflection(&scene, &t.pixel).unwrap());
        }
        let noise = NoiseSpec { gaussian_sigma: 2.0, seed: 7, ..Default::default() };
        let a = generate_dataset(&scene, 25.0, &noise).unwrap();
        let b = generate_dataset(&scene, 25.0, &noise).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.triples, clean.triples);
    }

    #[test]
    fn scene_file_round_trip() {
        let scene = MirrorScene::sphere_cluster();
        let text = SceneFile::from_scene(&scene, None).to_toml();
        let back = SceneFile::parse(&text).unwrap().to_scene().unwrap();
        assert_eq!(back.mirrors, scene.mirrors);
        assert!((back.camera.pose.rotation - scene.camera.pose.rotation).norm() < 1e-12);
        assert!((back.plane_motions[1].translation - scene.plane_motions[1].translation).norm() < 1e-9);
    }

    #[test]
    fn bad_scene_file_reports_line() {
        let err = SceneFile::parse("format_version = 1\nimage_size = \"x\"\n").unwrap_err();
        assert!(matches!(err, Error::ParseError { line: 2, .. }), "{err:?}");
    }
}
