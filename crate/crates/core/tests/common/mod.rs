//! Fixtures shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{Isometry3, Matrix4, Point3, Translation3, UnitQuaternion, Vector3};
use rand::Rng;

use functional_grasp::cli_io::{
    ContactConfig, FingerConfig, FrameConfig, HandConfig, JointConfig, Units,
};
use functional_grasp::energy::LinkRef;
use functional_grasp::kinematics::{JointLimits, JointSpec, KinematicChain};
use functional_grasp::planner::EigengraspBasis;

pub fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_pose<R: Rng>(rng: &mut R, max_offset: f64) -> Isometry3<f64> {
    let t = random_unit(rng) * rng.random_range(0.0..max_offset);
    let r = random_unit(rng) * rng.random_range(0.0..PI);
    Isometry3::new(t, r)
}

/// Serial chain with random axes, random link transforms (10..60 mm) and
/// random limits.
pub fn random_chain<R: Rng>(rng: &mut R, joints: usize) -> KinematicChain {
    let specs = (0..joints)
        .map(|i| {
            let origin = Isometry3::from_parts(
                Translation3::from(random_unit(rng) * rng.random_range(10.0..60.0)),
                UnitQuaternion::from_scaled_axis(random_unit(rng) * rng.random_range(0.0..PI)),
            );
            let half = rng.random_range(0.5..PI);
            JointSpec::revolute(
                format!("j{i}"),
                random_unit(rng),
                origin,
                JointLimits::new(-half, half).unwrap(),
            )
            .unwrap()
        })
        .collect();
    KinematicChain::new(
        specs,
        random_pose(rng, 50.0),
        Isometry3::translation(rng.random_range(5.0..40.0), 0.0, 0.0),
    )
    .unwrap()
}

/// Two 100 mm links rotating about z, limits symmetric about zero.
pub fn planar_two_link() -> KinematicChain {
    let joint = |name: &str, x: f64| {
        JointSpec::revolute(
            name,
            Vector3::z(),
            Isometry3::translation(x, 0.0, 0.0),
            JointLimits::new(-PI, PI).unwrap(),
        )
        .unwrap()
    };
    KinematicChain::new(
        vec![joint("shoulder", 0.0), joint("elbow", 100.0)],
        Isometry3::identity(),
        Isometry3::translation(100.0, 0.0, 0.0),
    )
    .unwrap()
}

/// Rodrigues rotation about a unit axis as a homogeneous matrix.
fn rotation_h(axis: &Vector3<f64>, angle: f64) -> Matrix4<f64> {
    let (s, c) = angle.sin_cos();
    let (x, y, z) = (axis.x, axis.y, axis.z);
    let v = 1.0 - c;
    Matrix4::new(
        c + x * x * v, x * y * v - z * s, x * z * v + y * s, 0.0,
        y * x * v + z * s, c + y * y * v, y * z * v - x * s, 0.0,
        z * x * v - y * s, z * y * v + x * s, c + z * z * v, 0.0,
        0.0, 0.0, 0.0, 1.0,
    )
}

/// End-effector transform by multiplying 4x4 homogeneous matrices.
pub fn fk_matrix_product(chain: &KinematicChain, q: &[f64]) -> Matrix4<f64> {
    let mut m = chain.base().to_homogeneous();
    for (j, &angle) in chain.joints().iter().zip(q) {
        m = m * j.origin.to_homogeneous() * rotation_h(&j.axis, angle);
    }
    m * chain.end_offset().to_homogeneous()
}

fn flex_joint(name: &str, x: f64, limits: [f64; 2]) -> JointConfig {
    JointConfig {
        name: name.into(),
        kind: "revolute".into(),
        axis: [0.0, -1.0, 0.0],
        origin: FrameConfig::at(x, 0.0, 0.0),
        limits,
    }
}

fn two_joint_finger(name: &str, base: FrameConfig, proximal: f64, distal: f64) -> FingerConfig {
    FingerConfig {
        name: name.into(),
        base,
        joints: vec![
            flex_joint(&format!("{name}_1"), 0.0, [-0.3, 1.8]),
            flex_joint(&format!("{name}_2"), proximal, [0.0, 1.8]),
        ],
        end_offset: FrameConfig::at(distal, 0.0, 0.0),
        close_direction: vec![1.0, 1.0],
    }
}

/// Planar gripper: two opposed two-joint fingers flexing in the palm's x-z
/// plane; the first finger's distal pad is functional.
pub fn planar_gripper() -> HandConfig {
    let fingers = vec![
        two_joint_finger("a", FrameConfig::at(25.0, 0.0, 0.0), 40.0, 30.0),
        two_joint_finger(
            "b",
            FrameConfig {
                translation: [-25.0, 0.0, 0.0],
                rpy: [0.0, 0.0, PI],
            },
            40.0,
            30.0,
        ),
    ];
    let pad = |finger: usize, functional: bool| ContactConfig {
        link: LinkRef::Finger { finger, link: 1 },
        position: [20.0, 0.0, 5.0],
        normal: [0.0, 0.0, 1.0],
        functional,
    };
    HandConfig {
        name: "planar_gripper".into(),
        units: Units::default(),
        palm_normal: [0.0, 0.0, 1.0],
        fingers,
        functional_finger: 0,
        functional_link: 1,
        virtual_contacts: vec![
            ContactConfig {
                link: LinkRef::Palm,
                position: [0.0, 0.0, 0.0],
                normal: [0.0, 0.0, 1.0],
                functional: false,
            },
            pad(0, true),
            pad(1, false),
        ],
        eigengrasp: EigengraspBasis {
            origin_posture: vec![0.6, 0.6, 0.6, 0.6],
            basis_vectors: vec![vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]],
            amplitude_bounds: vec![[-0.8, 1.2], [-0.8, 1.2]],
        },
        energy_weights: None,
    }
}

/// Distance between the palm origin and the functional contact over a grid
/// of finger configurations: (min, max).
pub fn palm_to_contact_range(hand: &HandConfig, steps: usize) -> (f64, f64) {
    let model = hand.to_model().unwrap();
    let chain = model.functional_chain();
    let (position, _) = model.functional_contacts_in_tip()[0];
    let limits = chain.limits();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut idx = vec![0usize; limits.len()];
    loop {
        let q: Vec<f64> = idx
            .iter()
            .zip(&limits)
            .map(|(&i, l)| l.lower + l.range() * i as f64 / (steps - 1) as f64)
            .collect();
        let tip = chain.forward_kinematics(&q).unwrap().end;
        let d = (tip * Point3::from(position)).coords.norm();
        lo = lo.min(d);
        hi = hi.max(d);
        let mut k = 0;
        loop {
            if k == idx.len() {
                return (lo, hi);
            }
            idx[k] += 1;
            if idx[k] < steps {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Homogeneous transform of link `k` (after its joint rotation).
pub fn link_matrix(chain: &KinematicChain, q: &[f64], k: usize) -> Matrix4<f64> {
    let mut m = chain.base().to_homogeneous();
    for (j, &angle) in chain.joints().iter().zip(q).take(k + 1) {
        m = m * j.origin.to_homogeneous() * rotation_h(&j.axis, angle);
    }
    m
}

/// Toy scenario: the planar gripper, a 40 mm puck 36 mm tall, and a button
/// patch in the middle of its top face pressed straight down.
pub struct ToyScene {
    pub hand: functional_grasp::kinematics::HandModel,
    pub mesh: functional_grasp::geometry::TriangleMesh,
    pub region: functional_grasp::geometry::FunctionalRegion,
    pub heatmap: functional_grasp::heatmap::ApproachHeatmap,
}

pub fn toy_scene() -> ToyScene {
    use functional_grasp::geometry::{shapes, FunctionalRegion, RegionSelector};
    use functional_grasp::heatmap::{generate, HeatmapParams};
    let hand = planar_gripper().to_model().unwrap();
    let mesh = shapes::capped_cylinder(20.0, 36.0, 32, 6, 3);
    let button = Point3::new(0.0, 0.0, 36.0);
    let region = FunctionalRegion::new(
        &mesh,
        &RegionSelector::Sphere {
            center: button,
            radius: 8.0,
        },
        -Vector3::z(),
        None,
    )
    .unwrap();
    let params = HeatmapParams {
        n_points: 1000,
        hdbscan_allow_single_cluster: true,
        ..HeatmapParams::default()
    };
    let heatmap = generate(&hand, &mesh, &region, &params).unwrap();
    ToyScene {
        hand,
        mesh,
        region,
        heatmap,
    }
}
