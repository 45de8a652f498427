//! Hand and scenario file formats.

use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyParams, EnergyWeights, LinkRef, PalmEnergyParams, VirtualContact};
use crate::error::{Error, Result};
use crate::geometry::{load_mesh, FunctionalRegion, MeshFormat, RegionSelector, TriangleMesh};
use crate::heatmap::HeatmapParams;
use crate::kinematics::{Finger, HandModel, JointLimits, JointSpec, KinematicChain};
use crate::planner::{AnnealingSchedule, CloseOptions, EigengraspBasis};
use crate::quality::FrictionParams;

use super::provenance::sha256_hex;

/// Rigid transform as translation (mm) plus roll-pitch-yaw (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FrameConfig {
    pub translation: [f64; 3],
    pub rpy: [f64; 3],
}

impl FrameConfig {
    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Self {
            translation: [x, y, z],
            rpy: [0.0; 3],
        }
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        let [r, p, y] = self.rpy;
        Isometry3::from_parts(
            Translation3::from(Vector3::from(self.translation)),
            UnitQuaternion::from_euler_angles(r, p, y),
        )
    }
}

fn revolute() -> String {
    "revolute".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub name: String,
    #[serde(rename = "type", default = "revolute")]
    pub kind: String,
    pub axis: [f64; 3],
    #[serde(default)]
    pub origin: FrameConfig,
    pub limits: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerConfig {
    pub name: String,
    #[serde(default)]
    pub base: FrameConfig,
    pub joints: Vec<JointConfig>,
    #[serde(default)]
    pub end_offset: FrameConfig,
    pub close_direction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactConfig {
    pub link: LinkRef,
    pub position: [f64; 3],
    pub normal: [f64; 3],
    #[serde(default)]
    pub functional: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub length: String,
    pub angle: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            length: "mm".into(),
            angle: "rad".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandConfig {
    pub name: String,
    pub units: Units,
    pub palm_normal: [f64; 3],
    pub fingers: Vec<FingerConfig>,
    pub functional_finger: usize,
    pub functional_link: usize,
    pub virtual_contacts: Vec<ContactConfig>,
    pub eigengrasp: EigengraspBasis,
    /// Blend weights used when the scenario does not set its own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_weights: Option<EnergyWeights>,
}

fn unit(v: [f64; 3], what: &str) -> Result<Unit<Vector3<f64>>> {
    let v = Vector3::from(v);
    let n = v.norm();
    if !n.is_finite() || n < 1e-12 {
        return Err(Error::config(format!("{what} must be a non-zero vector")));
    }
    Ok(Unit::new_normalize(v))
}

impl HandConfig {
    pub fn to_model(&self) -> Result<HandModel> {
        if self.units.length != "mm" || self.units.angle != "rad" {
            return Err(Error::config(format!(
                "hand '{}' declares units {}/{}; only mm/rad are supported",
                self.name, self.units.length, self.units.angle
            )));
        }
        let mut fingers = Vec::with_capacity(self.fingers.len());
        for f in &self.fingers {
            let mut joints = Vec::with_capacity(f.joints.len());
            for j in &f.joints {
                if j.kind != "revolute" {
                    return Err(Error::config(format!(
                        "joint '{}' has type '{}'; only revolute joints are supported",
                        j.name, j.kind
                    )));
                }
                let axis = Vector3::from(j.axis);
                if (axis.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::config(format!("joint '{}' axis is not unit length", j.name)));
                }
                joints.push(JointSpec::revolute(
                    j.name.clone(),
                    axis,
                    j.origin.isometry(),
                    JointLimits::new(j.limits[0], j.limits[1])?,
                )?);
            }
            fingers.push(Finger {
                name: f.name.clone(),
                chain: KinematicChain::new(joints, f.base.isometry(), f.end_offset.isometry())?,
                close_direction: f.close_direction.clone(),
            });
        }
        let virtual_contacts = self
            .virtual_contacts
            .iter()
            .map(|c| {
                Ok(VirtualContact {
                    link: c.link,
                    local_position: Vector3::from(c.position),
                    local_normal: unit(c.normal, "contact normal")?,
                    functional: c.functional,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let hand = HandModel {
            name: self.name.clone(),
            palm_normal: unit(self.palm_normal, "palm normal")?,
            fingers,
            functional_finger: self.functional_finger,
            functional_link: self.functional_link,
            virtual_contacts,
            eigengrasp: self.eigengrasp.clone(),
        };
        hand.validate()?;
        Ok(hand)
    }

    /// Stable identifier: hash of the canonical JSON form.
    pub fn id(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("hand config serializes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionConfig {
    Faces(Vec<usize>),
    Sphere { center: [f64; 3], radius: f64 },
}

impl RegionConfig {
    pub fn selector(&self) -> RegionSelector {
        match self {
            RegionConfig::Faces(ids) => RegionSelector::Faces(ids.clone()),
            RegionConfig::Sphere { center, radius } => RegionSelector::Sphere {
                center: Point3::from(*center),
                radius: *radius,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyConfig {
    /// Falls back to the hand's weights, then to 0.75 / 0.2 / 0.05.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<EnergyWeights>,
    pub palm: PalmEnergyParams,
    pub k_align: f64,
    pub collision_tolerance_mm: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        let d = EnergyParams::default();
        Self {
            weights: None,
            palm: d.palm,
            k_align: d.k_align,
            collision_tolerance_mm: d.collision_tolerance_mm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    #[serde(flatten)]
    pub schedule: AnnealingSchedule,
    pub seeds: Vec<u64>,
    pub close: CloseOptions,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            schedule: AnnealingSchedule::default(),
            seeds: vec![0, 1, 2, 3, 4],
            close: CloseOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityConfig {
    pub nu_samples: usize,
    pub seed: u64,
    pub contact_threshold_mm: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            nu_samples: 1_000_000,
            seed: 0,
            contact_threshold_mm: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    /// Mesh path, relative to the scenario file.
    pub mesh: PathBuf,
    pub region: RegionConfig,
    pub task_direction: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meeting_point: Option<[f64; 3]>,
    #[serde(default)]
    pub heatmap: HeatmapParams,
    #[serde(default)]
    pub energy: EnergyConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub friction: FrictionParams,
    #[serde(default)]
    pub quality: QualityConfig,
}

/// A scenario with its mesh and functional region loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub mesh_path: PathBuf,
    pub mesh: TriangleMesh,
    pub region: FunctionalRegion,
    /// Hash of the mesh bytes and the functional-region annotation.
    pub object_id: String,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let config: ScenarioConfig = read_json(path)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_config(config, dir)
    }

    pub fn from_config(config: ScenarioConfig, dir: &Path) -> Result<Self> {
        config.heatmap.validate()?;
        config.planner.schedule.validate()?;
        config.friction.validate()?;
        if let Some(w) = &config.energy.weights {
            w.validate()?;
        }
        let mesh_path = dir.join(&config.mesh);
        let format = MeshFormat::from_path(&mesh_path)?;
        let bytes = std::fs::read(&mesh_path).map_err(|source| Error::File {
            path: mesh_path.display().to_string(),
            source,
        })?;
        let mesh = load_mesh(&bytes, format).map_err(|e| match e {
            Error::Parse { line, msg } => Error::input(format!("{}: line {line}: {msg}", mesh_path.display())),
            Error::Input(msg) => Error::input(format!("{}: {msg}", mesh_path.display())),
            other => other,
        })?;
        let region = FunctionalRegion::new(
            &mesh,
            &config.region.selector(),
            Vector3::from(config.task_direction),
            config.meeting_point.map(Point3::from),
        )?;
        let annotation = serde_json::to_vec(&(&config.region, config.task_direction, config.meeting_point))?;
        let mut hashed = bytes;
        hashed.extend_from_slice(&annotation);
        Ok(Self {
            object_id: sha256_hex(&hashed),
            config,
            mesh_path,
            mesh,
            region,
        })
    }

    /// Energy constants with weights resolved: explicit override, then the
    /// scenario, then the hand, then the defaults.
    pub fn energy_params(&self, hand: &HandConfig, overridden: Option<EnergyWeights>) -> EnergyParams {
        let e = &self.config.energy;
        EnergyParams {
            weights: overridden
                .or(e.weights)
                .or(hand.energy_weights)
                .unwrap_or(EnergyParams::default().weights),
            palm: e.palm,
            k_align: e.k_align,
            collision_tolerance_mm: e.collision_tolerance_mm,
        }
    }
}

/// A hand config with its validated model.
#[derive(Debug, Clone)]
pub struct LoadedHand {
    pub config: HandConfig,
    pub model: HandModel,
    pub hand_id: String,
}

impl LoadedHand {
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_config(read_json(path)?)
    }

    pub fn from_config(config: HandConfig) -> Result<Self> {
        let model = config.to_model()?;
        Ok(Self {
            hand_id: config.id(),
            config,
            model,
        })
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::File {
        path: path.display().to_string(),
        source,
    })
}
