//! Grasp energies evaluated on a posed hand: contact, functional and palm
//! terms plus their weighted blend.

use nalgebra::{Isometry3, Point3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ClosestPoint, FunctionalRegion, TriangleMesh};
use crate::heatmap::ApproachHeatmap;
use crate::kinematics::HandModel;

/// Distances below this count as touching; the approach vector then falls
/// back to the inward surface normal.
const TOUCH_EPS: f64 = 1e-9;

/// Which rigid body a virtual contact is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkRef {
    Palm,
    Finger { finger: usize, link: usize },
}

/// A designated point and outward normal on the hand surface.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualContact {
    pub link: LinkRef,
    pub local_position: Vector3<f64>,
    pub local_normal: Unit<Vector3<f64>>,
    pub functional: bool,
}

/// A virtual contact placed in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldContact {
    pub position: Point3<f64>,
    pub normal: Vector3<f64>,
    pub functional: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl EnergyWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let w = Self { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config("energy weights must be non-negative"));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("energy weights must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PalmEnergyParams {
    /// Heatmap score the palm location must exceed.
    pub score_threshold: f64,
    /// mm of distance traded per unit of heatmap score.
    pub heatmap_gain: f64,
    pub max_energy: f64,
}

impl Default for PalmEnergyParams {
    fn default() -> Self {
        Self {
            score_threshold: 0.3,
            heatmap_gain: 50.0,
            max_energy: 1e5,
        }
    }
}

/// Constants shared by the energy terms and the collision check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyParams {
    pub weights: EnergyWeights,
    pub palm: PalmEnergyParams,
    /// mm charged for a fully misaligned contact.
    pub k_align: f64,
    /// Deepest tolerated virtual-contact penetration before a state is
    /// rejected as colliding.
    pub collision_tolerance_mm: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            weights: EnergyWeights {
                alpha: 0.75,
                beta: 0.2,
                gamma: 0.05,
            },
            palm: PalmEnergyParams::default(),
            k_align: 100.0,
            collision_tolerance_mm: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub e_contact: f64,
    pub e_functional: f64,
    pub e_palm: f64,
    pub e_hybrid: f64,
    /// Deepest virtual-contact penetration into the object (mm, >= 0).
    pub max_penetration_mm: f64,
    /// Set when the hybrid value was overridden by the collision check.
    pub collision: bool,
}

/// Places every virtual contact in the world for a wrist pose and joint vector.
pub fn world_contacts(
    hand: &HandModel,
    wrist: &Isometry3<f64>,
    q_full: &[f64],
) -> Result<Vec<WorldContact>> {
    let frames = hand.link_frames(wrist, q_full)?;
    Ok(hand
        .virtual_contacts
        .iter()
        .map(|vc| {
            let frame = match vc.link {
                LinkRef::Palm => wrist,
                LinkRef::Finger { finger, link } => &frames[finger][link],
            };
            WorldContact {
                position: frame * Point3::from(vc.local_position),
                normal: frame.rotation * vc.local_normal.into_inner(),
                functional: vc.functional,
            }
        })
        .collect())
}

/// Distance plus misalignment charge for a single contact against a surface
/// query result.
pub fn contact_term(contact: &WorldContact, closest: &ClosestPoint, k_align: f64) -> f64 {
    let d = closest.distance;
    let toward = if d > TOUCH_EPS {
        (closest.point - contact.position) / d
    } else {
        -closest.normal
    };
    let alignment = contact.normal.dot(&toward).max(0.0);
    d + k_align * (1.0 - alignment)
}

/// `sum_i d_i + k_align (1 - max(0, n_i . o_i))` over the given contacts.
pub fn contact_energy<'a, I>(contacts: I, mesh: &TriangleMesh, k_align: f64) -> f64
where
    I: IntoIterator<Item = &'a WorldContact>,
{
    contacts
        .into_iter()
        .map(|c| contact_term(c, &mesh.closest_point(&c.position), k_align))
        .sum()
}

/// The contact energy of the given contacts measured against the functional
/// region's faces only.
pub fn functional_energy<'a, I>(contacts: I, region: &FunctionalRegion, k_align: f64) -> f64
where
    I: IntoIterator<Item = &'a WorldContact>,
{
    contacts
        .into_iter()
        .map(|c| contact_term(c, &region.closest_point(&c.position), k_align))
        .sum()
}

/// Palm term: `distance - gain * score` when the heatmap score at the palm
/// origin exceeds the threshold, otherwise `max_energy`.
pub fn palm_energy(
    wrist: &Isometry3<f64>,
    heatmap: &ApproachHeatmap,
    mesh: &TriangleMesh,
    params: &PalmEnergyParams,
) -> f64 {
    let palm = Point3::from(wrist.translation.vector);
    let (score, distance) = heatmap.query_score(mesh, &palm);
    palm_energy_from(score, distance, params)
}

pub fn palm_energy_from(score: f64, distance: f64, params: &PalmEnergyParams) -> f64 {
    if score > params.score_threshold {
        distance - params.heatmap_gain * score
    } else {
        params.max_energy
    }
}

pub fn hybrid_energy(weights: &EnergyWeights, e_contact: f64, e_functional: f64, e_palm: f64) -> f64 {
    weights.alpha * e_contact + weights.beta * e_functional + weights.gamma * e_palm
}
