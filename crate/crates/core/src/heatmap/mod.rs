//! Approach heatmaps: where on an object the palm can sit while the
//! functional finger still reaches the functional part, and how well it can
//! push there.

mod hdbscan;
mod io;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Isometry3, Point3, Rotation3, Translation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FunctionalRegion, SurfaceSample, TriangleMesh};
use crate::kinematics::{
    dls_attempt, out_of_reach, random_config, reverse_chain, reverse_config, HandModel, IkOptions,
    ChainPose, JointLimits, JointSpec, KinematicChain,
};

pub use hdbscan::{hdbscan, HdbscanParams, NOISE};
pub use io::{heatmap_csv, heatmap_ply, read_heatmap_csv, HeatmapHeader, PointRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapParams {
    pub n_points: usize,
    /// IK attempts per approach point.
    pub trials: usize,
    pub quantile: f64,
    pub interpolation_k: usize,
    pub hdbscan_min_cluster_size: usize,
    pub hdbscan_min_samples: usize,
    /// Lets a lone dense blob form the selected cluster instead of noise.
    pub hdbscan_allow_single_cluster: bool,
    pub rng_seed: u64,
    pub ik_tol_mm: f64,
    pub ik_max_iters: usize,
    /// IK solutions that sink the functional finger deeper than this into
    /// the object are discarded.
    pub finger_clearance_mm: f64,
}

impl Default for HeatmapParams {
    fn default() -> Self {
        Self {
            n_points: 500,
            trials: 5,
            quantile: 0.99,
            interpolation_k: 8,
            hdbscan_min_cluster_size: 15,
            hdbscan_min_samples: 5,
            hdbscan_allow_single_cluster: false,
            rng_seed: 0,
            ik_tol_mm: 1.0,
            ik_max_iters: 100,
            finger_clearance_mm: 2.0,
        }
    }
}

impl HeatmapParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 || self.trials == 0 || self.interpolation_k == 0 {
            return Err(Error::config("heatmap n_points, trials and interpolation_k must be >= 1"));
        }
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return Err(Error::config(format!(
                "heatmap quantile must lie in (0, 1], got {}",
                self.quantile
            )));
        }
        if !(self.finger_clearance_mm >= 0.0) {
            return Err(Error::config("heatmap finger_clearance_mm must be >= 0"));
        }
        if self.hdbscan_min_cluster_size < 2 || self.hdbscan_min_samples == 0 {
            return Err(Error::config("hdbscan needs min_cluster_size >= 2 and min_samples >= 1"));
        }
        Ok(())
    }

    fn ik_options(&self) -> IkOptions {
        IkOptions {
            tol_mm: self.ik_tol_mm,
            max_iters: self.ik_max_iters,
            restarts: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproachPoint {
    pub sample: SurfaceSample,
    pub raw_score: f64,
    pub norm_score: f64,
    pub reachable: bool,
    pub cluster_label: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub label: i64,
    pub size: usize,
    pub mean_score: f64,
}

#[derive(Debug, Clone)]
pub struct ApproachHeatmap {
    pub points: Vec<ApproachPoint>,
    /// Interpolated normalized score per mesh vertex.
    pub vertex_scores: Vec<f64>,
    /// Whether each vertex's nearest graded point lies in the selected cluster.
    pub vertex_in_selection: Vec<bool>,
    pub clusters: Vec<ClusterSummary>,
    pub selected_cluster: Option<i64>,
    pub interpolation_k: usize,
    pub object_diagonal: f64,
    pub params: HeatmapParams,
    pub hand_id: String,
    pub object_id: String,
}

/// Grades palm placements for one hand and functional region.
///
/// The reversed functional finger is rooted at the fingertip, posed so the
/// first functional contact sits on the meeting point with its normal along
/// the task direction. Roll about that direction is left free: it enters the
/// IK as an extra unlimited joint in front of the reversed finger. Each trial
/// draws a random seed (roll included) and runs one damped least-squares
/// descent toward the approach point. With an obstacle set, solutions whose
/// finger skeleton (joint origins joined up to the palm) passes through it
/// are rejected.
#[derive(Debug, Clone)]
pub struct ReachabilityGrader {
    reversed: KinematicChain,
    rolled: KinematicChain,
    obstacle: Option<TriangleMesh>,
    clearance_mm: f64,
    forward: KinematicChain,
    contact_position: Vector3<f64>,
    contact_alignment: UnitQuaternion<f64>,
    meeting_point: Point3<f64>,
    task_direction: Vector3<f64>,
    ik: IkOptions,
}

impl ReachabilityGrader {
    pub fn new(hand: &HandModel, region: &FunctionalRegion, params: &HeatmapParams) -> Result<Self> {
        let reversed = reverse_chain(hand)?;
        let (position, normal) = hand
            .functional_contacts_in_tip()
            .into_iter()
            .next()
            .ok_or_else(|| Error::config("hand has no functional contact"))?;
        let t = region.task_direction();
        let contact_alignment = UnitQuaternion::from_rotation_matrix(&align(&normal, &t));
        let meeting_point = region.meeting_point();
        let tip_in_contact = Isometry3::from_parts(
            Translation3::from(-(contact_alignment * position)),
            contact_alignment,
        );
        let mut joints = vec![JointSpec::revolute(
            "task_roll",
            t,
            Isometry3::identity(),
            JointLimits::new(-PI, PI)?,
        )?];
        for (k, j) in reversed.joints().iter().enumerate() {
            let mut j = j.clone();
            if k == 0 {
                j.origin = tip_in_contact * j.origin;
            }
            joints.push(j);
        }
        let rolled = KinematicChain::new(
            joints,
            Isometry3::from_parts(Translation3::from(meeting_point.coords), UnitQuaternion::identity()),
            *reversed.end_offset(),
        )?;
        Ok(Self {
            reversed,
            rolled,
            obstacle: None,
            clearance_mm: params.finger_clearance_mm,
            forward: hand.functional_chain().clone(),
            contact_position: position,
            contact_alignment,
            meeting_point,
            task_direction: t,
            ik: params.ik_options(),
        })
    }

    /// Fingertip world pose for a roll angle about the task direction.
    pub fn tip_pose(&self, roll: f64) -> Isometry3<f64> {
        let roll = UnitQuaternion::from_axis_angle(&Unit::new_unchecked(self.task_direction), roll);
        let rotation = roll * self.contact_alignment;
        let translation = self.meeting_point.coords - rotation * self.contact_position;
        Isometry3::from_parts(Translation3::from(translation), rotation)
    }

    pub fn with_obstacle(mut self, mesh: &TriangleMesh) -> Self {
        self.obstacle = Some(mesh.clone());
        self
    }

    /// Whether the finger skeleton of a rolled-chain pose stays out of the
    /// obstacle. The pad offset and the last few mm at the palm origin,
    /// which sit on the surface by construction, are skipped.
    fn clear_of_obstacle(&self, pose: &ChainPose) -> bool {
        const SPACING_MM: f64 = 5.0;
        const PALM_MARGIN_MM: f64 = 3.0;
        let Some(mesh) = &self.obstacle else {
            return true;
        };
        let palm = Point3::from(pose.end.translation.vector);
        let mut nodes: Vec<Point3<f64>> = pose.links[1..]
            .iter()
            .map(|f| Point3::from(f.translation.vector))
            .collect();
        nodes.push(palm);
        for w in nodes.windows(2) {
            let span = w[1] - w[0];
            let n = (span.norm() / SPACING_MM).ceil().max(1.0) as usize;
            for k in 0..=n {
                let p = w[0] + span * (k as f64 / n as f64);
                if (p - palm).norm() < PALM_MARGIN_MM {
                    continue;
                }
                if mesh.signed_distance(&p) < -self.clearance_mm {
                    return false;
                }
            }
        }
        true
    }

    pub fn reversed_chain(&self) -> &KinematicChain {
        &self.reversed
    }

    /// Best directional manipulability over `trials` attempts, and whether
    /// any attempt reached the point.
    pub fn grade<R: Rng + ?Sized>(&self, target: &Point3<f64>, trials: usize, rng: &mut R) -> (f64, bool) {
        if out_of_reach(&self.rolled, target, self.ik.tol_mm) {
            return (0.0, false);
        }
        let mut best = 0.0;
        let mut reachable = false;
        for _ in 0..trials {
            let seed = random_config(&self.rolled, rng);
            let Some(sol) = dls_attempt(&self.rolled, target, &seed, &self.ik) else {
                continue;
            };
            let Ok(pose) = self.rolled.forward_kinematics(&sol.q) else {
                continue;
            };
            if !self.clear_of_obstacle(&pose) {
                continue;
            }
            reachable = true;
            let q_fwd = reverse_config(&sol.q[1..]);
            let score = self
                .forward
                .mounted(&pose.end)
                .directional_manipulability(&q_fwd, &self.task_direction)
                .unwrap_or(0.0);
            if score > best {
                best = score;
            }
        }
        (best, reachable)
    }
}

/// Raw score of a single approach point (0 when never reachable).
pub fn evaluate_approach_point<R: Rng + ?Sized>(
    hand: &HandModel,
    region: &FunctionalRegion,
    approach: &SurfaceSample,
    params: &HeatmapParams,
    rng: &mut R,
) -> Result<f64> {
    let grader = ReachabilityGrader::new(hand, region, params)?;
    Ok(grader.grade(&approach.position, params.trials, rng).0)
}

/// Per-point stream `i + 1`; stream 0 drives surface sampling.
fn point_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

pub fn generate(
    hand: &HandModel,
    mesh: &TriangleMesh,
    region: &FunctionalRegion,
    params: &HeatmapParams,
) -> Result<ApproachHeatmap> {
    generate_with_workers(hand, mesh, region, params, None)
}

/// As [`generate`], on a dedicated pool of `workers` threads (`None` uses
/// the global pool). The output does not depend on the worker count.
pub fn generate_with_workers(
    hand: &HandModel,
    mesh: &TriangleMesh,
    region: &FunctionalRegion,
    params: &HeatmapParams,
    workers: Option<usize>,
) -> Result<ApproachHeatmap> {
    params.validate()?;
    let grader = ReachabilityGrader::new(hand, region, params)?.with_obstacle(mesh);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    sample_rng.set_stream(0);
    let samples = mesh.sample_surface(params.n_points, &mut sample_rng)?;

    let grade_all = || -> Vec<(f64, bool)> {
        samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| grader.grade(&s.position, params.trials, &mut point_rng(params.rng_seed, i)))
            .collect()
    };
    let graded = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?
            .install(grade_all),
        None => grade_all(),
    };

    let points: Vec<ApproachPoint> = samples
        .into_iter()
        .zip(graded)
        .map(|(sample, (raw, reachable))| ApproachPoint {
            sample,
            raw_score: if reachable { raw } else { 0.0 },
            norm_score: 0.0,
            reachable,
            cluster_label: NOISE,
        })
        .collect();
    Ok(ApproachHeatmap::from_graded(points, mesh, params))
}

/// Linear interpolation between order statistics at position `(n - 1) p`.
pub fn quantile_linear(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Divides raw scores by their `quantile` over reachable points, clamped to 1.
pub fn normalize_scores(points: &mut [ApproachPoint], quantile: f64) {
    let reachable: Vec<f64> = points.iter().filter(|p| p.reachable).map(|p| p.raw_score).collect();
    let q = quantile_linear(&reachable, quantile);
    for p in points.iter_mut() {
        p.norm_score = if q > 0.0 { (p.raw_score / q).min(1.0) } else { 0.0 };
    }
}

/// Labels reachable, positively scored points with HDBSCAN over
/// `(x, y, z, norm_score * diagonal)` and picks the cluster with the highest
/// mean score (then the larger one, then the lower label).
pub fn cluster_and_select(
    points: &mut [ApproachPoint],
    object_diagonal: f64,
    params: &HeatmapParams,
) -> (Vec<ClusterSummary>, Option<i64>) {
    let members: Vec<usize> = (0..points.len())
        .filter(|&i| points[i].reachable && points[i].norm_score > 0.0)
        .collect();
    let features: Vec<Vec<f64>> = members
        .iter()
        .map(|&i| {
            let p = &points[i];
            let x = p.sample.position;
            vec![x.x, x.y, x.z, p.norm_score * object_diagonal]
        })
        .collect();
    let labels = hdbscan(
        &features,
        HdbscanParams {
            min_cluster_size: params.hdbscan_min_cluster_size,
            min_samples: params.hdbscan_min_samples,
            allow_single_cluster: params.hdbscan_allow_single_cluster,
        },
    );
    for p in points.iter_mut() {
        p.cluster_label = NOISE;
    }
    for (&i, &label) in members.iter().zip(&labels) {
        points[i].cluster_label = label;
    }
    let clusters = summarize_clusters(points);
    let selected = select_cluster(&clusters);
    (clusters, selected)
}

pub fn summarize_clusters(points: &[ApproachPoint]) -> Vec<ClusterSummary> {
    let mut acc: BTreeMap<i64, (usize, f64)> = BTreeMap::new();
    for p in points.iter().filter(|p| p.cluster_label != NOISE) {
        let e = acc.entry(p.cluster_label).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += p.norm_score;
    }
    acc.into_iter()
        .map(|(label, (size, sum))| ClusterSummary {
            label,
            size,
            mean_score: sum / size as f64,
        })
        .collect()
}

pub fn select_cluster(clusters: &[ClusterSummary]) -> Option<i64> {
    clusters
        .iter()
        .max_by(|a, b| {
            a.mean_score
                .total_cmp(&b.mean_score)
                .then(a.size.cmp(&b.size))
                .then(b.label.cmp(&a.label))
        })
        .map(|c| c.label)
}

/// Inverse-distance-squared mean of `values` over the `k` sites nearest to
/// `p`. A site closer than 1e-9 mm returns its own value.
pub fn idw(sites: &[Point3<f64>], values: &[f64], k: usize, p: &Point3<f64>) -> f64 {
    if sites.is_empty() {
        return 0.0;
    }
    let mut near: Vec<(f64, usize)> = sites
        .iter()
        .enumerate()
        .map(|(i, s)| ((s - p).norm_squared(), i))
        .collect();
    let k = k.clamp(1, near.len());
    near.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    near.truncate(k);
    if let Some(&(_, i)) = near.iter().find(|(d2, _)| *d2 < 1e-18) {
        return values[i];
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(d2, i) in &near {
        num += values[i] / d2;
        den += 1.0 / d2;
    }
    num / den
}

impl ApproachHeatmap {
    /// Normalizes, clusters and interpolates already graded points.
    pub fn from_graded(mut points: Vec<ApproachPoint>, mesh: &TriangleMesh, params: &HeatmapParams) -> Self {
        let object_diagonal = mesh.bounds().diagonal();
        normalize_scores(&mut points, params.quantile);
        let (clusters, selected_cluster) = cluster_and_select(&mut points, object_diagonal, params);
        Self::assemble(points, clusters, selected_cluster, mesh, params)
    }

    /// Rebuilds the per-vertex fields from points whose scores and labels are
    /// already final (as read back from disk).
    pub fn assemble(
        points: Vec<ApproachPoint>,
        clusters: Vec<ClusterSummary>,
        selected_cluster: Option<i64>,
        mesh: &TriangleMesh,
        params: &HeatmapParams,
    ) -> Self {
        let sites: Vec<Point3<f64>> = points.iter().map(|p| p.sample.position).collect();
        let scores: Vec<f64> = points.iter().map(|p| p.norm_score).collect();
        let vertex_scores = mesh
            .vertices()
            .iter()
            .map(|v| idw(&sites, &scores, params.interpolation_k, v).clamp(0.0, 1.0))
            .collect();
        let vertex_in_selection = mesh
            .vertices()
            .iter()
            .map(|v| {
                let nearest = sites
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 - v).norm_squared().total_cmp(&(b.1 - v).norm_squared()))
                    .map(|(i, _)| i);
                match (nearest, selected_cluster) {
                    (Some(i), Some(sel)) => points[i].cluster_label == sel,
                    _ => false,
                }
            })
            .collect();
        Self {
            points,
            vertex_scores,
            vertex_in_selection,
            clusters,
            selected_cluster,
            interpolation_k: params.interpolation_k,
            object_diagonal: mesh.bounds().diagonal(),
            params: *params,
            hand_id: String::new(),
            object_id: String::new(),
        }
    }

    /// Heatmap score and mesh distance at `p`.
    ///
    /// The score interpolates over the nearest graded points, counting points
    /// outside the selected cluster as zero; it is 0 everywhere when no
    /// cluster was selected.
    pub fn query_score(&self, mesh: &TriangleMesh, p: &Point3<f64>) -> (f64, f64) {
        let distance = mesh.closest_point(p).distance;
        let Some(sel) = self.selected_cluster else {
            return (0.0, distance);
        };
        let sites: Vec<Point3<f64>> = self.points.iter().map(|q| q.sample.position).collect();
        let masked: Vec<f64> = self
            .points
            .iter()
            .map(|q| if q.cluster_label == sel { q.norm_score } else { 0.0 })
            .collect();
        (idw(&sites, &masked, self.interpolation_k, p), distance)
    }

    pub fn selected_points(&self) -> impl Iterator<Item = &ApproachPoint> {
        let sel = self.selected_cluster;
        self.points.iter().filter(move |p| Some(p.cluster_label) == sel)
    }
}

/// Rotation taking `from` onto `to`; a half-turn when they are opposite.
pub(crate) fn align(from: &Vector3<f64>, to: &Vector3<f64>) -> Rotation3<f64> {
    Rotation3::rotation_between(from, to).unwrap_or_else(|| {
        let axis = from.cross(&Vector3::x());
        let axis = if axis.norm() > 1e-6 { axis } else { from.cross(&Vector3::y()) };
        Rotation3::from_axis_angle(&Unit::new_normalize(axis), std::f64::consts::PI)
    })
}
