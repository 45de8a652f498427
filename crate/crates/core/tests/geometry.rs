mod common;

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use functional_grasp::geometry::{load_mesh, shapes, MeshFormat, TriangleMesh};

const CUBE_OBJ: &str = "\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
";

#[test]
fn canonical_cube_obj() {
    let mesh = load_mesh(CUBE_OBJ.as_bytes(), MeshFormat::Obj).unwrap();
    assert_eq!(mesh.vertices().len(), 8);
    assert_eq!(mesh.faces().len(), 12);
    assert!(mesh.is_closed());
    assert!((mesh.signed_volume() - 1.0).abs() < 1e-12);
    let centre = Point3::new(0.5, 0.5, 0.5);
    for f in 0..12 {
        let outward = mesh.face_centroid(f) - centre;
        assert!(mesh.face_normal(f).dot(&outward) > 0.0);
    }
}

#[test]
fn zero_area_face_is_dropped() {
    let text = format!("{CUBE_OBJ}f 1 2 2\n");
    let mesh = load_mesh(text.as_bytes(), MeshFormat::Obj).unwrap();
    assert_eq!(mesh.faces().len(), 12);
    assert_eq!(mesh.dropped_faces(), 1);
}

#[test]
fn parse_errors_carry_line_numbers() {
    let err = load_mesh(b"v 0 0 0\nv 1 zero 0\n", MeshFormat::Obj).unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");
    assert!(load_mesh(b"v 0 0 0\n", MeshFormat::Obj).is_err());
}

#[test]
fn icosphere_volume_close_to_sphere() {
    let mesh = shapes::icosphere(50.0, 2);
    assert_eq!(mesh.faces().len(), 320);
    let exact = 4.0 / 3.0 * PI * 50f64.powi(3);
    assert!((mesh.signed_volume() - exact).abs() / exact < 0.05);
}

fn face_pair(mesh: &TriangleMesh, face: usize) -> usize {
    let n = mesh.face_normal(face);
    let axis = (0..3).max_by(|&a, &b| n[a].abs().total_cmp(&n[b].abs())).unwrap();
    2 * axis + usize::from(n[axis] > 0.0)
}

#[test]
fn cube_sides_are_sampled_by_area() {
    let mesh = shapes::cube(1000.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let samples = mesh.sample_surface(6000, &mut rng).unwrap();
    let mut counts = [0usize; 6];
    for s in &samples {
        counts[face_pair(&mesh, s.face)] += 1;
        let b = s.barycentric;
        assert!(b.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(mesh.closest_point(&s.position).distance < 1e-9);
    }
    let sigma = (6000.0_f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
    for c in counts {
        assert!((c as f64 - 1000.0).abs() < 3.0 * sigma, "{counts:?}");
    }
}

#[test]
fn cube_sampling_passes_chi_square() {
    let mesh = shapes::cube(1000.0);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 100_000;
    let mut counts = [0usize; 6];
    for s in mesh.sample_surface(n, &mut rng).unwrap() {
        counts[face_pair(&mesh, s.face)] += 1;
    }
    let expected = n as f64 / 6.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // chi-square, 5 degrees of freedom, upper 0.001 tail
    assert!(chi2 < 20.515, "chi2 = {chi2}");
}

#[test]
fn sampling_is_seeded_and_single_sample_lies_on_surface() {
    let mesh = shapes::icosphere(50.0, 2);
    let a = mesh.sample_surface(50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let b = mesh.sample_surface(50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(a, b);
    let one = mesh.sample_surface(1, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert_eq!(one.len(), 1);
    assert!(mesh.closest_point(&one[0].position).distance < 1e-9);
    assert!(mesh.sample_surface(0, &mut ChaCha8Rng::seed_from_u64(4)).is_err());
}

#[test]
fn closest_point_on_axis_aligned_face() {
    let mesh = shapes::cube(1000.0);
    let c = mesh.closest_point(&Point3::new(2000.0, 0.0, 0.0));
    assert!((c.point - Point3::new(500.0, 0.0, 0.0)).norm() < 1e-9);
    assert!((c.distance - 1500.0).abs() < 1e-9);
    assert!((c.normal - Vector3::x()).norm() < 1e-12);
    assert!(mesh.closest_point(&Point3::new(500.0, 120.0, -40.0)).distance < 1e-9);
}

#[test]
fn bvh_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let meshes = [
        shapes::icosphere(50.0, 3),
        shapes::capped_cylinder(30.0, 160.0, 48, 32, 6),
        shapes::cuboid(Vector3::new(200.0, 50.0, 20.0), 20),
    ];
    for mesh in &meshes {
        for _ in 0..10_000 / meshes.len() + 1 {
            let p = Point3::new(
                rng.random_range(-150.0..150.0),
                rng.random_range(-150.0..150.0),
                rng.random_range(-100.0..250.0),
            );
            let fast = mesh.closest_point(&p);
            let slow = mesh.closest_point_brute_force(&p);
            assert!((fast.distance - slow.distance).abs() < 1e-9);
        }
    }
}

#[test]
fn signed_distance_of_cube() {
    let mesh = shapes::cube(1000.0);
    assert!((mesh.signed_distance(&Point3::origin()) + 500.0).abs() < 1e-9);
    let out = Point3::new(700.0, 100.0, 0.0);
    assert!((mesh.signed_distance(&out) - mesh.closest_point(&out).distance).abs() < 1e-12);
    assert!(mesh.signed_distance(&out) > 0.0);
}

#[test]
fn sign_flips_exactly_at_the_faces() {
    let mesh = shapes::cube(1000.0);
    let dir = Vector3::new(1.0, 0.3, -0.2).normalize();
    let start = Point3::new(-40.0, 25.0, 10.0) - dir * 2000.0;
    // analytic crossings of the line with the x = +-500 slab walls
    let entry = (-500.0 - start.x) / dir.x;
    let exit = (500.0 - start.x) / dir.x;
    for k in 0..4000 {
        let s = k as f64;
        let p = start + dir * s;
        let inside = s > entry + 1e-6 && s < exit - 1e-6;
        let outside = s < entry - 1e-6 || s > exit + 1e-6;
        let d = mesh.signed_distance(&p);
        if inside {
            assert!(d <= 0.0, "s = {s}");
        }
        if outside {
            assert!(d > 0.0, "s = {s}");
        }
    }
}
