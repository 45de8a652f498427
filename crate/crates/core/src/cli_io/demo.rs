//! Built-in hands and desk-scale demo objects.

use std::f64::consts::PI;

use nalgebra::Vector3;

use super::config::{
    ContactConfig, EnergyConfig, FingerConfig, FrameConfig, HandConfig, JointConfig, PlannerConfig,
    QualityConfig, RegionConfig, ScenarioConfig, Units,
};
use crate::energy::{EnergyWeights, LinkRef};
use crate::error::{Error, Result};
use crate::geometry::{shapes, TriangleMesh};
use crate::heatmap::HeatmapParams;
use crate::planner::EigengraspBasis;
use crate::quality::FrictionParams;

pub const DEMO_NAMES: [&str; 3] = ["spray", "remote", "plate"];

fn joint(name: &str, axis: [f64; 3], origin: FrameConfig, limits: [f64; 2]) -> JointConfig {
    JointConfig {
        name: name.into(),
        kind: "revolute".into(),
        axis,
        origin,
        limits,
    }
}

fn pad(finger: usize, link: usize, along: f64, functional: bool) -> ContactConfig {
    ContactConfig {
        link: LinkRef::Finger { finger, link },
        position: [along, 0.0, 7.0],
        normal: [0.0, 0.0, 1.0],
        functional,
    }
}

const FLEX: [f64; 3] = [0.0, -1.0, 0.0];
const ABDUCT: [f64; 3] = [0.0, 0.0, 1.0];

/// A finger pointing along its base x axis: abduction about the palm normal,
/// then two flexion joints curling toward the palm normal.
fn long_finger(name: &str, base: FrameConfig, proximal: f64, distal: f64) -> FingerConfig {
    FingerConfig {
        name: name.into(),
        base,
        joints: vec![
            joint(&format!("{name}_abd"), ABDUCT, FrameConfig::default(), [-0.35, 0.35]),
            joint(&format!("{name}_mcp"), FLEX, FrameConfig::default(), [-0.2, 1.6]),
            joint(&format!("{name}_pip"), FLEX, FrameConfig::at(proximal, 0.0, 0.0), [0.0, 1.7]),
        ],
        end_offset: FrameConfig::at(distal, 0.0, 0.0),
        close_direction: vec![0.0, 1.0, 1.0],
    }
}

/// Four-fingered anthropomorphic stand-in: index (functional), middle and
/// ring along one palm edge, an opposing thumb along the other.
pub fn four_finger_hand() -> HandConfig {
    let fingers = vec![
        long_finger("index", FrameConfig::at(45.0, 16.0, 0.0), 45.0, 35.0),
        long_finger("middle", FrameConfig::at(45.0, 0.0, 0.0), 48.0, 35.0),
        long_finger("ring", FrameConfig::at(45.0, -16.0, 0.0), 45.0, 32.0),
        long_finger(
            "thumb",
            FrameConfig {
                translation: [-45.0, 0.0, 0.0],
                rpy: [0.0, 0.0, PI],
            },
            40.0,
            32.0,
        ),
    ];
    let mut contacts = vec![ContactConfig {
        link: LinkRef::Palm,
        position: [0.0, 0.0, 0.0],
        normal: [0.0, 0.0, 1.0],
        functional: false,
    }];
    contacts.push(pad(0, 2, 24.0, true));
    for f in 1..4 {
        contacts.push(pad(f, 2, 22.0, false));
    }
    // joint order: [abd, mcp, pip] per finger; index, middle, ring, thumb
    let flex_others = vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
    let spread = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
    let flex_index = vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    HandConfig {
        name: "four_finger".into(),
        units: Units::default(),
        palm_normal: [0.0, 0.0, 1.0],
        fingers,
        functional_finger: 0,
        functional_link: 2,
        virtual_contacts: contacts,
        eigengrasp: EigengraspBasis {
            origin_posture: vec![0.0, 0.4, 0.4, 0.0, 0.4, 0.4, 0.0, 0.4, 0.4, 0.0, 0.4, 0.4],
            basis_vectors: vec![flex_others, spread, flex_index],
            amplitude_bounds: vec![[-0.6, 1.3], [-0.35, 0.35], [-0.6, 1.3]],
        },
        energy_weights: Some(EnergyWeights {
            alpha: 0.75,
            beta: 0.2,
            gamma: 0.05,
        }),
    }
}

/// Three-fingered Barrett-like hand: two spreading fingers on one palm edge
/// (the first is functional) and a fixed opposing finger.
pub fn barrett_hand() -> HandConfig {
    let spreading = |name: &str, y: f64, sign: f64| {
        let mut f = long_finger(name, FrameConfig::at(30.0, y, 0.0), 70.0, 55.0);
        f.joints[0].limits = if sign > 0.0 { [0.0, PI / 2.0] } else { [-PI / 2.0, 0.0] };
        f
    };
    let opposing = FingerConfig {
        name: "f3".into(),
        base: FrameConfig {
            translation: [-30.0, 0.0, 0.0],
            rpy: [0.0, 0.0, PI],
        },
        joints: vec![
            joint("f3_j1", FLEX, FrameConfig::default(), [-0.2, 2.4]),
            joint("f3_j2", FLEX, FrameConfig::at(70.0, 0.0, 0.0), [0.0, 1.4]),
        ],
        end_offset: FrameConfig::at(55.0, 0.0, 0.0),
        close_direction: vec![1.0, 1.0],
    };
    let fingers = vec![spreading("f1", 25.0, 1.0), spreading("f2", -25.0, -1.0), opposing];
    let contacts = vec![
        ContactConfig {
            link: LinkRef::Palm,
            position: [0.0, 0.0, 0.0],
            normal: [0.0, 0.0, 1.0],
            functional: false,
        },
        pad(0, 2, 40.0, true),
        pad(0, 1, 40.0, false),
        pad(1, 2, 40.0, false),
        pad(1, 1, 40.0, false),
        pad(2, 1, 40.0, false),
        pad(2, 0, 40.0, false),
    ];
    // joint order: f1 [spread, j1, j2], f2 [spread, j1, j2], f3 [j1, j2]
    let flex_others = vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
    let spread = vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0];
    let flex_functional = vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    HandConfig {
        name: "barrett_like".into(),
        units: Units::default(),
        palm_normal: [0.0, 0.0, 1.0],
        fingers,
        functional_finger: 0,
        functional_link: 2,
        virtual_contacts: contacts,
        eigengrasp: EigengraspBasis {
            origin_posture: vec![0.2, 0.5, 0.5, -0.2, 0.5, 0.5, 0.5, 0.5],
            basis_vectors: vec![flex_others, spread, flex_functional],
            amplitude_bounds: vec![[-0.6, 1.5], [-0.2, 1.2], [-0.6, 1.5]],
        },
        energy_weights: Some(EnergyWeights {
            alpha: 0.6,
            beta: 0.35,
            gamma: 0.05,
        }),
    }
}

/// A demo object: its mesh and one scenario per functional part.
#[derive(Debug, Clone)]
pub struct DemoObject {
    pub mesh_file: String,
    pub mesh: TriangleMesh,
    pub scenarios: Vec<ScenarioConfig>,
}

fn scenario(name: &str, mesh_file: &str, center: [f64; 3], radius: f64, t: Vector3<f64>) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        mesh: mesh_file.into(),
        region: RegionConfig::Sphere { center, radius },
        task_direction: (t + Vector3::zeros()).into(),
        meeting_point: None,
        heatmap: HeatmapParams::default(),
        energy: EnergyConfig::default(),
        planner: PlannerConfig::default(),
        friction: FrictionParams::default(),
        quality: QualityConfig::default(),
    }
}

/// Palm placements that reach a button on a flat top face form one narrow
/// band, so sample densely and let that band stand as a cluster on its own.
fn flat_face(mut s: ScenarioConfig) -> ScenarioConfig {
    s.heatmap.n_points = 1500;
    s.heatmap.hdbscan_allow_single_cluster = true;
    s
}

pub fn demo_object(name: &str) -> Result<DemoObject> {
    match name {
        // spray can: cylinder with the nozzle in the middle of its top face
        "spray" => Ok(DemoObject {
            mesh_file: "spray.obj".into(),
            mesh: shapes::capped_cylinder(30.0, 160.0, 48, 32, 6),
            scenarios: vec![{
                // the nozzle sits between the fingertips, so lean on the functional term
                let mut s = scenario("spray", "spray.obj", [0.0, 0.0, 160.0], 9.0, -Vector3::z());
                s.energy.weights = Some(EnergyWeights {
                    alpha: 0.6,
                    beta: 0.35,
                    gamma: 0.05,
                });
                s
            }],
        }),
        // remote: flat box with three buttons toward one end of its top face
        "remote" => Ok(DemoObject {
            mesh_file: "remote.obj".into(),
            mesh: shapes::cuboid(Vector3::new(200.0, 50.0, 20.0), 20),
            scenarios: [30.0, 55.0, 80.0]
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    flat_face(scenario(
                        &format!("remote_button{}", i + 1),
                        "remote.obj",
                        [*x, 0.0, 10.0],
                        6.0,
                        -Vector3::z(),
                    ))
                })
                .collect(),
        }),
        // plate: thin slab with a pad near one end of the top face
        "plate" => Ok(DemoObject {
            mesh_file: "plate.obj".into(),
            mesh: shapes::cuboid(Vector3::new(200.0, 120.0, 12.0), 20),
            scenarios: vec![flat_face(scenario(
                "plate",
                "plate.obj",
                [70.0, 0.0, 6.0],
                10.0,
                -Vector3::z(),
            ))],
        }),
        other => Err(Error::input(format!(
            "unknown demo '{other}' (expected one of {})",
            DEMO_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn built_in_hands_validate() {
        let four = four_finger_hand().to_model().unwrap();
        assert_eq!(four.dof(), 12);
        let barrett = barrett_hand().to_model().unwrap();
        assert_eq!(barrett.dof(), 8);
    }

    #[test]
    fn demo_meshes_are_closed() {
        for name in DEMO_NAMES {
            let d = demo_object(name).unwrap();
            assert!(d.mesh.is_closed(), "{name}");
        }
        assert_eq!(demo_object("remote").unwrap().scenarios.len(), 3);
        assert!(demo_object("kettle").is_err());
    }
}
