//! Simulated annealing over wrist pose plus eigengrasp amplitudes, and the
//! finger-closing step that turns an annealed state into real contacts.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::energy::{
    contact_term, hybrid_energy, palm_energy, world_contacts, EnergyBreakdown, EnergyParams, LinkRef,
    WorldContact,
};
use crate::error::{Error, Result};
use crate::geometry::{FunctionalRegion, TriangleMesh};
use crate::heatmap::{align, ApproachHeatmap, ReachabilityGrader};
use crate::kinematics::{HandModel, JointLimits};

/// Linear posture subspace `q(a) = clamp(origin + sum_j a_j e_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigengraspBasis {
    pub origin_posture: Vec<f64>,
    pub basis_vectors: Vec<Vec<f64>>,
    pub amplitude_bounds: Vec<[f64; 2]>,
}

impl EigengraspBasis {
    pub fn validate(&self, dof: usize) -> Result<()> {
        if self.origin_posture.len() != dof {
            return Err(Error::config(format!(
                "eigengrasp origin has {} joints, hand has {dof}",
                self.origin_posture.len()
            )));
        }
        let n = self.basis_vectors.len();
        if n == 0 {
            return Err(Error::config("eigengrasp basis needs at least one vector"));
        }
        if self.basis_vectors.iter().any(|e| e.len() != dof) {
            return Err(Error::config("eigengrasp vector length differs from hand joint count"));
        }
        if self.amplitude_bounds.len() != n {
            return Err(Error::config(format!(
                "{} amplitude bounds for {n} eigengrasps",
                self.amplitude_bounds.len()
            )));
        }
        if self.amplitude_bounds.iter().any(|[lo, hi]| !(lo < hi)) {
            return Err(Error::config("eigengrasp amplitude bounds need lo < hi"));
        }
        let m = DMatrix::from_fn(dof, n, |r, c| self.basis_vectors[c][r]);
        if m.rank(1e-9) < n {
            return Err(Error::config("eigengrasp vectors are linearly dependent"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.basis_vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis_vectors.is_empty()
    }

    /// Joint vector for amplitudes `a`, clamped per joint to `limits`.
    pub fn amplitudes_to_joints(&self, a: &[f64], limits: &[JointLimits]) -> Result<Vec<f64>> {
        if a.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: a.len(),
            });
        }
        let mut q = self.origin_posture.clone();
        for (amp, e) in a.iter().zip(&self.basis_vectors) {
            for (qi, ei) in q.iter_mut().zip(e) {
                *qi += amp * ei;
            }
        }
        for (qi, lim) in q.iter_mut().zip(limits) {
            *qi = lim.clamp(*qi);
        }
        Ok(q)
    }

    pub fn clamp_amplitudes(&self, a: &mut [f64]) {
        for (v, [lo, hi]) in a.iter_mut().zip(&self.amplitude_bounds) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// Planner search point: wrist translation (mm), wrist rotation vector and
/// eigengrasp amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerState {
    pub wrist: [f64; 6],
    pub amplitudes: Vec<f64>,
}

impl PlannerState {
    pub fn from_pose(pose: &Isometry3<f64>, amplitudes: Vec<f64>) -> Self {
        let t = pose.translation.vector;
        let r = pose.rotation.scaled_axis();
        Self {
            wrist: [t.x, t.y, t.z, r.x, r.y, r.z],
            amplitudes,
        }
    }

    pub fn wrist_pose(&self) -> Isometry3<f64> {
        let w = &self.wrist;
        Isometry3::new(Vector3::new(w[0], w[1], w[2]), Vector3::new(w[3], w[4], w[5]))
    }

    pub fn joints(&self, hand: &HandModel) -> Result<Vec<f64>> {
        hand.eigengrasp.amplitudes_to_joints(&self.amplitudes, &hand.joint_limits())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealingSchedule {
    pub steps: usize,
    pub t0: f64,
    /// Temperature after the last step relative to `t0`.
    pub final_ratio: f64,
    pub step_mm: f64,
    pub step_rad: f64,
    pub step_amplitude: f64,
    /// Wrist positions stay within this multiple of the object's bounding
    /// sphere radius from its centre.
    pub shell_factor: f64,
    /// Random starts scored before the chain begins.
    pub initial_candidates: usize,
    /// Palm offset from the surface for the starts (mm).
    pub initial_standoff_mm: f64,
}

impl Default for AnnealingSchedule {
    fn default() -> Self {
        Self {
            steps: 70_000,
            t0: 10.0,
            final_ratio: 1e-4,
            step_mm: 8.0,
            step_rad: 0.15,
            step_amplitude: 0.15,
            shell_factor: 1.5,
            initial_candidates: 1024,
            initial_standoff_mm: 2.0,
        }
    }
}

impl AnnealingSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("annealing needs at least one step"));
        }
        if !(self.t0 > 0.0) || !(self.final_ratio > 0.0 && self.final_ratio < 1.0) {
            return Err(Error::config("annealing needs t0 > 0 and 0 < final_ratio < 1"));
        }
        if self.initial_candidates == 0 || !(self.shell_factor > 0.0) {
            return Err(Error::config("annealing needs initial_candidates >= 1 and shell_factor > 0"));
        }
        Ok(())
    }

    /// Per-step multiplicative cooling factor.
    pub fn cooling(&self) -> f64 {
        self.final_ratio.powf(1.0 / self.steps as f64)
    }

    pub fn temperature(&self, step: usize) -> f64 {
        self.t0 * self.cooling().powf(step as f64)
    }
}

/// Steps between entries of the best-energy trace.
pub const TRACE_INTERVAL: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspCandidate {
    pub state: PlannerState,
    pub q_full: Vec<f64>,
    pub energy: EnergyBreakdown,
    pub seed: u64,
    pub steps_used: usize,
    /// Best hybrid energy so far, at the start and every [`TRACE_INTERVAL`] steps.
    pub trace: Vec<f64>,
}

/// Everything [`evaluate_state`] needs besides the state.
#[derive(Debug, Clone, Copy)]
pub struct Scene<'a> {
    pub hand: &'a HandModel,
    pub mesh: &'a TriangleMesh,
    pub heatmap: &'a ApproachHeatmap,
    pub region: &'a FunctionalRegion,
    pub params: &'a EnergyParams,
}

/// Depth of `p` inside the mesh (0 outside).
fn penetration(mesh: &TriangleMesh, p: &Point3<f64>, distance: f64) -> f64 {
    if distance > 0.0 && mesh.contains(p) {
        distance
    } else {
        0.0
    }
}

pub fn evaluate_state(state: &PlannerState, scene: &Scene) -> Result<EnergyBreakdown> {
    let q = state.joints(scene.hand)?;
    let wrist = state.wrist_pose();
    let contacts = world_contacts(scene.hand, &wrist, &q)?;
    Ok(evaluate_pose(&wrist, &contacts, scene))
}

fn evaluate_pose(wrist: &Isometry3<f64>, contacts: &[WorldContact], scene: &Scene) -> EnergyBreakdown {
    let k = scene.params.k_align;
    let mut e_contact = 0.0;
    let mut e_functional = 0.0;
    let mut max_penetration_mm: f64 = 0.0;
    for c in contacts {
        let closest = scene.mesh.closest_point(&c.position);
        max_penetration_mm = max_penetration_mm.max(penetration(scene.mesh, &c.position, closest.distance));
        if c.functional {
            e_functional += contact_term(c, &scene.region.closest_point(&c.position), k);
        } else {
            e_contact += contact_term(c, &closest, k);
        }
    }
    let e_palm = palm_energy(wrist, scene.heatmap, scene.mesh, &scene.params.palm);
    let collision = max_penetration_mm > scene.params.collision_tolerance_mm;
    let e_hybrid = if collision {
        scene.params.palm.max_energy
    } else {
        hybrid_energy(&scene.params.weights, e_contact, e_functional, e_palm)
    };
    EnergyBreakdown {
        e_contact,
        e_functional,
        e_palm,
        e_hybrid,
        max_penetration_mm,
        collision,
    }
}

/// Metropolis rule: always accept downhill, uphill with `exp(-delta / T)`.
pub fn metropolis_accept<R: Rng + ?Sized>(delta: f64, temperature: f64, rng: &mut R) -> bool {
    if delta <= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u < (-delta / temperature).exp()
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn propose<R: Rng + ?Sized>(
    state: &PlannerState,
    hand: &HandModel,
    schedule: &AnnealingSchedule,
    scale: f64,
    center: &Point3<f64>,
    shell: f64,
    rng: &mut R,
) -> PlannerState {
    let pose = state.wrist_pose();
    let dp = Vector3::new(gaussian(rng), gaussian(rng), gaussian(rng)) * schedule.step_mm * scale;
    let mut position = pose.translation.vector + dp;
    let offset = position - center.coords;
    if offset.norm() > shell {
        position = center.coords + offset * (shell / offset.norm());
    }
    let dr = Vector3::new(gaussian(rng), gaussian(rng), gaussian(rng)) * schedule.step_rad * scale;
    let rotation = UnitQuaternion::from_scaled_axis(dr) * pose.rotation;
    let mut amplitudes: Vec<f64> = state
        .amplitudes
        .iter()
        .map(|a| a + gaussian(rng) * schedule.step_amplitude * scale)
        .collect();
    hand.eigengrasp.clamp_amplitudes(&mut amplitudes);
    PlannerState::from_pose(
        &Isometry3::from_parts(Translation3::from(position), rotation),
        amplitudes,
    )
}

/// Starting state for a chain.
///
/// First tries `schedule.initial_candidates` functional placements: random
/// amplitudes and a roll about the task direction, with the wrist placed so
/// the functional contact sits on the meeting point facing along the task
/// direction. The lowest-energy one that neither collides nor leaves the
/// selected cluster wins. If none qualifies, the palm is instead put on
/// selected-cluster points (weighted by score), facing the surface.
fn initial_state<R: Rng + ?Sized>(
    scene: &Scene,
    schedule: &AnnealingSchedule,
    rng: &mut R,
) -> Result<(PlannerState, EnergyBreakdown)> {
    let hand = scene.hand;
    let random_amplitudes = |rng: &mut R| -> Vec<f64> {
        hand.eigengrasp
            .amplitude_bounds
            .iter()
            .map(|[lo, hi]| rng.random_range(*lo..=*hi))
            .collect()
    };
    let keep_lowest = |best: &mut Option<(PlannerState, EnergyBreakdown)>, state: PlannerState| -> Result<()> {
        let energy = evaluate_state(&state, scene)?;
        if best.as_ref().is_none_or(|(_, e)| energy.e_hybrid < e.e_hybrid) {
            *best = Some((state, energy));
        }
        Ok(())
    };

    let grader = ReachabilityGrader::new(hand, scene.region, &scene.heatmap.params)?;
    let mut best = None;
    for _ in 0..schedule.initial_candidates {
        let amplitudes = random_amplitudes(rng);
        let roll = rng.random_range(-PI..PI);
        let q = hand.eigengrasp.amplitudes_to_joints(&amplitudes, &hand.joint_limits())?;
        let tip = hand
            .functional_chain()
            .forward_kinematics(hand.finger_joints(&q, hand.functional_finger))?
            .end;
        let wrist = grader.tip_pose(roll) * tip.inverse();
        keep_lowest(&mut best, PlannerState::from_pose(&wrist, amplitudes))?;
    }
    if let Some((state, energy)) = best {
        if !energy.collision && energy.e_palm < scene.params.palm.max_energy {
            return Ok((state, energy));
        }
    }

    let cluster: Vec<_> = scene.heatmap.selected_points().collect();
    let weights: Vec<f64> = cluster.iter().map(|p| p.norm_score.max(1e-12)).collect();
    let picker = WeightedIndex::new(&weights)
        .map_err(|e| Error::Refused(format!("selected cluster cannot be sampled: {e}")))?;
    let mut best = None;
    for _ in 0..schedule.initial_candidates {
        let point = cluster[picker.sample(rng)];
        let inward = -point.sample.normal;
        let face = UnitQuaternion::from_rotation_matrix(&align(&hand.palm_normal, &inward));
        let roll = UnitQuaternion::from_axis_angle(&Unit::new_normalize(inward), rng.random_range(-PI..PI));
        let position = point.sample.position - inward * schedule.initial_standoff_mm;
        let wrist = Isometry3::from_parts(Translation3::from(position.coords), roll * face);
        keep_lowest(&mut best, PlannerState::from_pose(&wrist, random_amplitudes(rng)))?;
    }
    Ok(best.expect("at least one candidate"))
}

/// Runs one annealing chain and returns the best state it visited.
pub fn anneal(scene: &Scene, schedule: &AnnealingSchedule, seed: u64) -> Result<GraspCandidate> {
    schedule.validate()?;
    scene.params.weights.validate()?;
    if scene.heatmap.selected_cluster.is_none() {
        return Err(Error::Refused(
            "heatmap has no selected cluster; regenerate it with more reachable points".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (center, radius) = scene.mesh.bounding_sphere();
    let shell = schedule.shell_factor * radius;

    let (mut current, mut current_energy) = initial_state(scene, schedule, &mut rng)?;
    let mut best = current.clone();
    let mut best_energy = current_energy;
    let mut trace = vec![best_energy.e_hybrid];
    let cooling = schedule.cooling();
    let mut temperature = schedule.t0;

    for step in 1..=schedule.steps {
        temperature *= cooling;
        let scale = temperature / schedule.t0;
        let candidate = propose(&current, scene.hand, schedule, scale, &center, shell, &mut rng);
        let energy = evaluate_state(&candidate, scene)?;
        if metropolis_accept(energy.e_hybrid - current_energy.e_hybrid, temperature, &mut rng) {
            current = candidate;
            current_energy = energy;
            if current_energy.e_hybrid < best_energy.e_hybrid {
                best = current.clone();
                best_energy = current_energy;
            }
        }
        if step % TRACE_INTERVAL == 0 {
            trace.push(best_energy.e_hybrid);
        }
    }
    let q_full = best.joints(scene.hand)?;
    Ok(GraspCandidate {
        state: best,
        q_full,
        energy: best_energy,
        seed,
        steps_used: schedule.steps,
        trace,
    })
}

/// Lowest energy wins; equal energies go to the lower seed.
pub fn best_candidate(candidates: &[GraspCandidate]) -> Option<&GraspCandidate> {
    candidates.iter().min_by(|a, b| {
        a.energy
            .e_hybrid
            .total_cmp(&b.energy.e_hybrid)
            .then(a.seed.cmp(&b.seed))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CloseOptions {
    /// Largest single-joint increment per step (rad).
    pub step_rad: f64,
    /// A contact closer than this to its target surface counts as touching.
    pub touch_mm: f64,
    /// Deepest allowed penetration after a step before the step is halved.
    pub max_penetration_mm: f64,
    pub max_steps: usize,
}

impl Default for CloseOptions {
    fn default() -> Self {
        Self {
            step_rad: 0.01,
            touch_mm: 0.5,
            max_penetration_mm: 0.5,
            max_steps: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerClosure {
    pub finger: usize,
    pub steps: usize,
    pub touching: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedGrasp {
    pub q_closed: Vec<f64>,
    pub fingers: Vec<FingerClosure>,
    /// Virtual contacts within the touch distance of the object.
    pub contacts: Vec<WorldContact>,
    /// Set when no virtual contact touches the object.
    pub non_grasping: bool,
}

/// Closes each finger along its close direction until one of its contacts
/// touches (the functional finger aims at the functional region), a joint
/// limit stops it, or a further step would penetrate.
pub fn finalize_grasp(
    wrist: &Isometry3<f64>,
    q_full: &[f64],
    hand: &HandModel,
    mesh: &TriangleMesh,
    region: &FunctionalRegion,
    opts: &CloseOptions,
) -> Result<ClosedGrasp> {
    let mut q = q_full.to_vec();
    hand.clamp(&mut q);
    let offsets = hand.joint_offsets();
    let limits = hand.joint_limits();
    let mut fingers = Vec::with_capacity(hand.fingers.len());

    for (f, finger) in hand.fingers.iter().enumerate() {
        let range = offsets[f]..offsets[f] + finger.chain.dof();
        let owned: Vec<usize> = hand
            .virtual_contacts
            .iter()
            .enumerate()
            .filter(|(_, vc)| matches!(vc.link, LinkRef::Finger { finger, .. } if finger == f))
            .map(|(i, _)| i)
            .collect();
        let largest = finger.close_direction.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if owned.is_empty() || largest == 0.0 {
            fingers.push(FingerClosure {
                finger: f,
                steps: 0,
                touching: false,
            });
            continue;
        }
        let functional = f == hand.functional_finger;
        // (closest distance to target surface, deepest penetration)
        let probe = |q: &[f64]| -> Result<(f64, f64)> {
            let contacts = world_contacts(hand, wrist, q)?;
            let mut nearest = f64::INFINITY;
            let mut deepest: f64 = 0.0;
            for &i in &owned {
                let c = &contacts[i];
                let closest = mesh.closest_point(&c.position);
                deepest = deepest.max(penetration(mesh, &c.position, closest.distance));
                let target = if functional && c.functional {
                    region.closest_point(&c.position).distance
                } else {
                    closest.distance
                };
                nearest = nearest.min(target);
            }
            Ok((nearest, deepest))
        };

        let mut steps = 0;
        let (mut nearest, _) = probe(&q)?;
        while nearest >= opts.touch_mm && steps < opts.max_steps {
            let mut scale = opts.step_rad / largest;
            let mut advanced = None;
            for _ in 0..6 {
                let mut next = q.clone();
                for (j, d) in range.clone().zip(&finger.close_direction) {
                    next[j] = limits[j].clamp(next[j] + d * scale);
                }
                if next == q {
                    break;
                }
                let (n, deep) = probe(&next)?;
                if deep <= opts.max_penetration_mm {
                    advanced = Some((next, n));
                    break;
                }
                scale *= 0.5;
            }
            let Some((next, n)) = advanced else {
                break;
            };
            q = next;
            nearest = n;
            steps += 1;
        }
        fingers.push(FingerClosure {
            finger: f,
            steps,
            touching: nearest < opts.touch_mm,
        });
    }

    let contacts: Vec<WorldContact> = world_contacts(hand, wrist, &q)?
        .into_iter()
        .filter(|c| mesh.closest_point(&c.position).distance < opts.touch_mm)
        .collect();
    Ok(ClosedGrasp {
        q_closed: q,
        fingers,
        non_grasping: contacts.is_empty(),
        contacts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limits(n: usize) -> Vec<JointLimits> {
        (0..n).map(|_| JointLimits::new(-1.0, 1.0).unwrap()).collect()
    }

    fn identity_basis(n: usize) -> EigengraspBasis {
        EigengraspBasis {
            origin_posture: vec![0.0; n],
            basis_vectors: (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            amplitude_bounds: vec![[-2.0, 2.0]; n],
        }
    }

    #[test]
    fn zero_amplitudes_give_origin() {
        let mut b = identity_basis(3);
        b.origin_posture = vec![0.1, -0.2, 0.3];
        assert_eq!(b.amplitudes_to_joints(&[0.0; 3], &limits(3)).unwrap(), vec![0.1, -0.2, 0.3]);
    }

    #[test]
    fn identity_basis_recovers_postures_and_clamps() {
        let b = identity_basis(3);
        let q = b.amplitudes_to_joints(&[0.5, -0.25, 0.75], &limits(3)).unwrap();
        assert_eq!(q, vec![0.5, -0.25, 0.75]);
        let q = b.amplitudes_to_joints(&[1.7, 0.2, -1.5], &limits(3)).unwrap();
        assert_eq!(q, vec![1.0, 0.2, -1.0]);
    }

    #[test]
    fn dependent_basis_is_rejected() {
        let mut b = identity_basis(3);
        b.basis_vectors[2] = vec![1.0, 1.0, 1.0];
        b.basis_vectors[1] = vec![0.0, 1.0, 0.0];
        assert!(b.validate(3).is_ok());
        b.basis_vectors[2] = vec![2.0, 0.0, 0.0];
        assert!(b.validate(3).is_err());
        assert!(identity_basis(2).validate(3).is_err());
    }

    #[test]
    fn state_pose_round_trip() {
        let pose = Isometry3::new(Vector3::new(1.0, 2.0, 3.0), Vector3::new(0.3, -0.2, 0.1));
        let s = PlannerState::from_pose(&pose, vec![]);
        let back = s.wrist_pose();
        assert!((back.translation.vector - pose.translation.vector).norm() < 1e-12);
        assert!(back.rotation.angle_to(&pose.rotation) < 1e-12);
    }

    #[test]
    fn cooling_reaches_final_ratio() {
        let s = AnnealingSchedule {
            steps: 1000,
            ..AnnealingSchedule::default()
        };
        let ratio = s.temperature(1000) / s.t0;
        assert!((ratio - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn downhill_always_accepted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..100).all(|_| metropolis_accept(-1.0, 0.5, &mut rng)));
        assert!((0..100).all(|_| metropolis_accept(0.0, 0.5, &mut rng)));
    }
}
