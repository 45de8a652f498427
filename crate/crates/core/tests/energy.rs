mod common;

use nalgebra::{Isometry3, Point3, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{link_matrix, planar_gripper, random_unit};
use functional_grasp::energy::{
    contact_energy, functional_energy, hybrid_energy, palm_energy, palm_energy_from, world_contacts,
    EnergyParams, EnergyWeights, LinkRef, PalmEnergyParams, WorldContact,
};
use functional_grasp::geometry::{shapes, FunctionalRegion, RegionSelector, TriangleMesh};
use functional_grasp::heatmap::{summarize_clusters, ApproachHeatmap, ApproachPoint, HeatmapParams, NOISE};
use functional_grasp::planner::{evaluate_state, PlannerState, Scene};

fn contact(p: Point3<f64>, n: Vector3<f64>) -> WorldContact {
    WorldContact {
        position: p,
        normal: n,
        functional: false,
    }
}

#[test]
fn world_contacts_at_rest() {
    let hand = planar_gripper().to_model().unwrap();
    let q = vec![0.0; hand.dof()];
    let contacts = world_contacts(&hand, &Isometry3::identity(), &q).unwrap();
    // palm, then pad 20 mm along the distal link of each straight finger
    assert!((contacts[0].position - Point3::origin()).norm() < 1e-12);
    assert!((contacts[1].position - Point3::new(25.0 + 40.0 + 20.0, 0.0, 5.0)).norm() < 1e-9);
    assert!((contacts[2].position - Point3::new(-85.0, 0.0, 5.0)).norm() < 1e-9);
    assert!((contacts[1].normal - Vector3::z()).norm() < 1e-12);
    assert!(contacts[1].functional && !contacts[2].functional);
}

#[test]
fn translating_the_wrist_translates_every_contact() {
    let hand = planar_gripper().to_model().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let q: Vec<f64> = hand.joint_limits().iter().map(|l| rng.random_range(l.lower..l.upper)).collect();
    let wrist = Isometry3::new(Vector3::new(3.0, -4.0, 8.0), Vector3::new(0.3, 0.1, -0.7));
    let shift = Vector3::new(120.0, -35.0, 7.5);
    let moved = Isometry3::from_parts((wrist.translation.vector + shift).into(), wrist.rotation);
    let a = world_contacts(&hand, &wrist, &q).unwrap();
    let b = world_contacts(&hand, &moved, &q).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((y.position - x.position - shift).norm() < 1e-9);
        assert!((y.normal - x.normal).norm() < 1e-12);
    }
}

#[test]
fn world_contacts_match_matrix_product_oracle() {
    let config = planar_gripper();
    let hand = config.to_model().unwrap();
    let offsets = hand.joint_offsets();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let q: Vec<f64> = hand.joint_limits().iter().map(|l| rng.random_range(l.lower..l.upper)).collect();
        let wrist = Isometry3::new(
            random_unit(&mut rng) * rng.random_range(0.0..200.0),
            random_unit(&mut rng) * rng.random_range(0.0..3.0),
        );
        let got = world_contacts(&hand, &wrist, &q).unwrap();
        for (vc, c) in hand.virtual_contacts.iter().zip(&got) {
            let m = match vc.link {
                LinkRef::Palm => wrist.to_homogeneous(),
                LinkRef::Finger { finger, link } => {
                    let chain = &hand.fingers[finger].chain;
                    let qf = &q[offsets[finger]..offsets[finger] + chain.dof()];
                    wrist.to_homogeneous() * link_matrix(chain, qf, link)
                }
            };
            let p = m * Vector4::new(vc.local_position.x, vc.local_position.y, vc.local_position.z, 1.0);
            let n = m * Vector4::new(vc.local_normal.x, vc.local_normal.y, vc.local_normal.z, 0.0);
            assert!((c.position.coords - p.xyz()).norm() < 1e-9);
            assert!((c.normal - n.xyz()).norm() < 1e-12);
        }
    }
}

#[test]
fn contact_energy_trivial_cases() {
    let cube = shapes::cube(100.0);
    let on_surface = [
        contact(Point3::new(50.0, 10.0, 0.0), -Vector3::x()),
        contact(Point3::new(-20.0, 50.0, 5.0), -Vector3::y()),
        contact(Point3::new(0.0, 0.0, -50.0), Vector3::z()),
    ];
    assert_eq!(contact_energy(&on_surface, &cube, 100.0), 0.0);

    let gap: Vec<WorldContact> = on_surface
        .iter()
        .map(|c| contact(c.position - c.normal * 10.0, c.normal))
        .collect();
    assert_eq!(contact_energy(&gap, &cube, 100.0), 30.0);

    let reversed: Vec<WorldContact> = on_surface.iter().map(|c| contact(c.position, -c.normal)).collect();
    assert_eq!(contact_energy(&reversed, &cube, 100.0), 300.0);
}

fn button_box() -> (TriangleMesh, FunctionalRegion) {
    let mesh = shapes::cuboid(Vector3::new(100.0, 100.0, 40.0), 10);
    let region = FunctionalRegion::new(
        &mesh,
        &RegionSelector::Sphere {
            center: Point3::new(0.0, 0.0, 20.0),
            radius: 10.0,
        },
        -Vector3::z(),
        None,
    )
    .unwrap();
    (mesh, region)
}

#[test]
fn functional_energy_trivial_cases() {
    let (_, region) = button_box();
    let touching = [contact(Point3::new(0.0, 0.0, 20.0), -Vector3::z())];
    assert_eq!(functional_energy(&touching, &region, 100.0), 0.0);
    let hovering = [contact(Point3::new(0.0, 0.0, 40.0), -Vector3::z())];
    assert_eq!(functional_energy(&hovering, &region, 100.0), 20.0);
}

#[test]
fn functional_energy_ignores_other_fingers() {
    let hand = planar_gripper().to_model().unwrap();
    let (_, region) = button_box();
    let wrist = Isometry3::new(Vector3::new(-60.0, 0.0, 10.0), Vector3::zeros());
    let offsets = hand.joint_offsets();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut q = vec![0.4; hand.dof()];
    let e = |q: &[f64]| {
        let contacts = world_contacts(&hand, &wrist, q).unwrap();
        functional_energy(contacts.iter().filter(|c| c.functional), &region, 100.0)
    };
    let reference = e(&q);
    for _ in 0..20 {
        for v in &mut q[offsets[1]..offsets[1] + hand.fingers[1].chain.dof()] {
            *v = rng.random_range(0.0..1.8);
        }
        assert_eq!(e(&q), reference);
    }
}

#[test]
fn palm_energy_formula_and_threshold() {
    let params = PalmEnergyParams::default();
    assert_eq!((params.score_threshold, params.heatmap_gain, params.max_energy), (0.3, 50.0, 1e5));
    assert_eq!(palm_energy_from(0.9, 5.0, &params), -40.0);
    assert_eq!(palm_energy_from(0.3, 5.0, &params), 1e5);
    assert_eq!(palm_energy_from(0.1, 0.0, &params), 1e5);
    let above = 0.3 + 1e-9;
    assert!((palm_energy_from(above, 5.0, &params) - (5.0 - 50.0 * above)).abs() < 1e-12);
    // non-increasing in score, non-decreasing in distance above the threshold
    let mut last = f64::INFINITY;
    for k in 31..=100 {
        let e = palm_energy_from(k as f64 / 100.0, 7.0, &params);
        assert!(e <= last);
        last = e;
    }
    let mut last = f64::NEG_INFINITY;
    for d in 0..50 {
        let e = palm_energy_from(0.7, d as f64, &params);
        assert!(e >= last);
        last = e;
    }
}

/// Cube whose top-face samples form the selected cluster with score 1.
fn top_face_heatmap() -> (TriangleMesh, ApproachHeatmap) {
    let mesh = shapes::cuboid(Vector3::new(100.0, 100.0, 100.0), 10);
    let params = HeatmapParams::default();
    let samples = mesh.sample_surface(400, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let points: Vec<ApproachPoint> = samples
        .into_iter()
        .map(|s| {
            let top = s.position.z > 49.9;
            ApproachPoint {
                sample: s,
                raw_score: 1.0,
                norm_score: if top { 1.0 } else { 0.4 },
                reachable: true,
                cluster_label: if top { 0 } else { NOISE },
            }
        })
        .collect();
    let clusters = summarize_clusters(&points);
    let map = ApproachHeatmap::assemble(points, clusters, Some(0), &mesh, &params);
    (mesh, map)
}

#[test]
fn palm_on_full_score_point_is_the_surface_minimum() {
    let (mesh, map) = top_face_heatmap();
    let params = PalmEnergyParams::default();
    let at = |p: Point3<f64>| palm_energy(&Isometry3::translation(p.x, p.y, p.z), &map, &mesh, &params);
    let member = map.selected_points().next().unwrap().sample.position;
    assert!((at(member) + params.heatmap_gain).abs() < 1e-9);
    // exhaustive scan over vertices and a dense surface sample
    let scan = mesh
        .sample_surface(5000, &mut ChaCha8Rng::seed_from_u64(5))
        .unwrap()
        .into_iter()
        .map(|s| s.position)
        .chain(mesh.vertices().iter().copied());
    for p in scan {
        assert!(at(p) >= -params.heatmap_gain - 1e-9);
    }
}

#[test]
fn hybrid_energy_cases() {
    let only_contact = EnergyWeights::new(1.0, 0.0, 0.0).unwrap();
    assert_eq!(hybrid_energy(&only_contact, 12.5, 99.0, -40.0), 12.5);
    let shadow = EnergyWeights::new(0.75, 0.2, 0.05).unwrap();
    assert_eq!(hybrid_energy(&shadow, 10.0, 20.0, -40.0), 9.5);
    let third = 1.0 / 3.0;
    let equal = EnergyWeights::new(third, third, third).unwrap();
    let a = hybrid_energy(&equal, 3.0, 7.0, -11.0);
    for (x, y, z) in [(7.0, -11.0, 3.0), (-11.0, 3.0, 7.0), (3.0, -11.0, 7.0)] {
        assert!((hybrid_energy(&equal, x, y, z) - a).abs() < 1e-12);
    }
    assert!(EnergyWeights::new(0.5, 0.4, 0.2).is_err());
    assert!(EnergyWeights::new(1.2, -0.2, 0.0).is_err());
}

#[test]
fn hybrid_energy_is_linear_in_each_term() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let a: f64 = rng.random_range(0.0..1.0);
        let b: f64 = rng.random_range(0.0..1.0 - a);
        let w = EnergyWeights::new(a, b, 1.0 - a - b).unwrap();
        let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(-500.0..500.0));
        let y: [f64; 3] = std::array::from_fn(|_| rng.random_range(-500.0..500.0));
        let (s, t) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let combined: [f64; 3] = std::array::from_fn(|i| s * x[i] + t * y[i]);
        let lhs = hybrid_energy(&w, combined[0], combined[1], combined[2]);
        let rhs = s * hybrid_energy(&w, x[0], x[1], x[2]) + t * hybrid_energy(&w, y[0], y[1], y[2]);
        assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
    }
}

fn cube_scene_energy(wrist: Isometry3<f64>) -> functional_grasp::energy::EnergyBreakdown {
    let hand = planar_gripper().to_model().unwrap();
    let (mesh, heatmap) = top_face_heatmap();
    let region = FunctionalRegion::new(
        &mesh,
        &RegionSelector::Sphere {
            center: Point3::new(0.0, 0.0, 50.0),
            radius: 10.0,
        },
        -Vector3::z(),
        None,
    )
    .unwrap();
    let params = EnergyParams::default();
    let scene = Scene {
        hand: &hand,
        mesh: &mesh,
        heatmap: &heatmap,
        region: &region,
        params: &params,
    };
    let state = PlannerState::from_pose(&wrist, vec![0.0, 0.0]);
    evaluate_state(&state, &scene).unwrap()
}

#[test]
fn collision_override_boundary() {
    let max = PalmEnergyParams::default().max_energy;
    let far = cube_scene_energy(Isometry3::translation(0.0, 0.0, 400.0));
    assert!(!far.collision && far.e_contact > 100.0);

    let inside = cube_scene_energy(Isometry3::identity());
    assert!(inside.collision && inside.e_hybrid == max);

    // the palm contact sits exactly 2 mm below the top face, fingers rise clear of it
    let at_limit = cube_scene_energy(Isometry3::translation(0.0, 0.0, 48.0));
    assert_eq!(at_limit.max_penetration_mm, 2.0);
    assert!(!at_limit.collision);
    let w = EnergyParams::default().weights;
    assert_eq!(
        at_limit.e_hybrid,
        hybrid_energy(&w, at_limit.e_contact, at_limit.e_functional, at_limit.e_palm)
    );

    let past = cube_scene_energy(Isometry3::translation(0.0, 0.0, 48.0 - 1e-6));
    assert!(past.max_penetration_mm > 2.0);
    assert!(past.collision && past.e_hybrid == max);
}
