use nalgebra::{Matrix4, Vector2, Vector3};
use proptest::prelude::*;

use specular_core::camera::{Camera, Intrinsics};
use specular_core::crossratio::{cross_ratio_s, reconstruct_point};
use specular_core::geometry::{rigid_align, rotation_from_angle_axis, RigidPose};
use specular_core::plucker::{line_from_points, point_to_line_matrix, reciprocal_product, PointProjectionMatrix};

fn point(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn camera() -> impl Strategy<Value = Camera<f64>> {
    (300.0..3000.0f64, 300.0..3000.0f64, 100.0..900.0f64, 100.0..700.0f64, point(1.5), point(2.0), 8.0..15.0f64).prop_map(
        |(fx, fy, u0, v0, w, t, z)| Camera {
            intrinsics: Intrinsics { fx, fy, u0, v0 },
            pose: RigidPose::new(rotation_from_angle_axis(&w), Vector3::new(t.x, t.y, z)),
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn joined_lines_satisfy_the_klein_quadric(a in point(100.0), b in point(100.0)) {
        prop_assume!((a - b).norm() > 1e-3);
        let l = line_from_points(&a, &b).unwrap();
        prop_assert!(l.self_intersection().abs() <= 1e-12 * l.raw().norm_squared());
        prop_assert!(l.distance_to_point(&a) <= 1e-9 * (1.0 + a.norm()));
        prop_assert!(l.distance_to_point(&(a * 0.3 + b * 0.7)) <= 1e-9 * (1.0 + a.norm() + b.norm()));
    }

    #[test]
    fn reciprocal_product_is_the_coplanarity_determinant(a in point(10.0), b in point(10.0), c in point(10.0), d in point(10.0)) {
        prop_assume!((a - b).norm() > 1e-3 && (c - d).norm() > 1e-3);
        let (l, m) = (line_from_points(&a, &b).unwrap(), line_from_points(&c, &d).unwrap());
        let det = Matrix4::from_rows(&[a.push(1.0).transpose(), b.push(1.0).transpose(), c.push(1.0).transpose(), d.push(1.0).transpose()]).determinant();
        prop_assert!((reciprocal_product(&l, &m) - det).abs() <= 1e-9 * l.raw().norm() * m.raw().norm());
        prop_assert!((reciprocal_product(&l, &m) - reciprocal_product(&m, &l)).abs() <= 1e-9 * l.raw().norm() * m.raw().norm());
    }

    #[test]
    fn projected_line_passes_through_projected_points(cam in camera(), a in point(3.0), b in point(3.0)) {
        prop_assume!((a - b).norm() > 1e-2);
        let p = PointProjectionMatrix::new(cam.projection_matrix()).unwrap();
        let img = point_to_line_matrix(&p).project_line(&line_from_points(&a, &b).unwrap()).unwrap();
        for x in [p.project(&a), p.project(&b)] {
            prop_assert!(img.dot(&x).abs() <= 1e-9 * img.norm() * x.norm());
        }
    }

    #[test]
    fn cross_ratio_recovers_points_on_the_line(cam in camera(), x2 in point(2.0), u in point(1.0), d in 1.0..4.0f64, a in 0.2..0.8f64, s in -3.0..-0.1f64) {
        prop_assume!(u.norm() > 0.1);
        let u = u.normalize();
        let pts = [x2 + u * d, x2 + u * (a * d), x2];
        let img: Vec<Vector2<f64>> = pts.iter().map(|p| cam.project(p).unwrap()).collect();
        let got = cross_ratio_s(&pts, &[img[0], img[1], img[2]], &cam.project(&(x2 + u * s)).unwrap()).unwrap();
        prop_assert!((got - s).abs() <= 1e-8 * d);
        prop_assert!((reconstruct_point(&pts, got) - (x2 + u * s)).norm() <= 1e-7 * d);
    }

    #[test]
    fn rigid_alignment_undoes_a_motion(w in point(3.0), t in point(50.0), pts in prop::collection::vec(point(10.0), 4..30)) {
        let r = rotation_from_angle_axis(&w);
        let moved: Vec<Vector3<f64>> = pts.iter().map(|p| r * p + t).collect();
        let c = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
        let spread = pts.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
        prop_assume!(spread > 1.0);
        let pose = rigid_align(&pts, &moved).unwrap();
        for (p, q) in pts.iter().zip(&moved) {
            prop_assert!((pose.transform_point(p) - q).norm() <= 1e-6);
        }
    }
}
