//! Soft-finger contacts, grasp wrench sets and the epsilon / nu quality
//! metrics.
//!
//! Wrenches are `(force, torque / lambda)` with `lambda` the object's
//! bounding-sphere radius, so both halves are comparable.

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, Isometry3, Matrix6, Point3, SVector, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::world_contacts;
use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;
use crate::kinematics::HandModel;

pub type Wrench = Vector6<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrictionParams {
    pub mu: f64,
    pub cone_edges: usize,
    /// Radius of the soft contact patch; the torsion coefficient is
    /// `0.4 * mu * patch_radius_mm`.
    pub patch_radius_mm: f64,
}

impl Default for FrictionParams {
    fn default() -> Self {
        Self {
            mu: 0.8,
            cone_edges: 8,
            patch_radius_mm: 10.0,
        }
    }
}

impl FrictionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0) || self.cone_edges < 3 || !(self.patch_radius_mm >= 0.0) {
            return Err(Error::config("friction needs mu >= 0, cone_edges >= 3, patch radius >= 0"));
        }
        Ok(())
    }
}

/// A point contact; `normal` points into the object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub position: Point3<f64>,
    pub normal: Vector3<f64>,
    pub mu: f64,
    pub torsion_coeff: f64,
    pub cone_edges: usize,
}

impl Contact {
    pub fn new(position: Point3<f64>, normal: Vector3<f64>, friction: &FrictionParams) -> Self {
        Self {
            position,
            normal: normal.normalize(),
            mu: friction.mu,
            torsion_coeff: 0.4 * friction.mu * friction.patch_radius_mm,
            cone_edges: friction.cone_edges,
        }
    }
}

/// Some unit vector orthogonal to `n`.
fn orthogonal(n: &Vector3<f64>) -> Vector3<f64> {
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    n.cross(&helper).normalize()
}

/// Linearized friction-cone edges plus the two torsion generators.
pub fn contact_wrenches(contact: &Contact, lambda: f64) -> Vec<Wrench> {
    let n = contact.normal;
    let p = contact.position.coords;
    let wrench = |f: Vector3<f64>| {
        let tau = p.cross(&f) / lambda;
        Wrench::new(f.x, f.y, f.z, tau.x, tau.y, tau.z)
    };
    let mut out = Vec::with_capacity(contact.cone_edges + 2);
    if contact.mu == 0.0 {
        out.push(wrench(n));
    } else {
        let u = orthogonal(&n);
        let v = n.cross(&u);
        for k in 0..contact.cone_edges {
            let theta = std::f64::consts::TAU * k as f64 / contact.cone_edges as f64;
            out.push(wrench(n + contact.mu * (theta.cos() * u + theta.sin() * v)));
        }
    }
    if contact.torsion_coeff > 0.0 {
        let t = n * contact.torsion_coeff / lambda;
        out.push(Wrench::new(0.0, 0.0, 0.0, t.x, t.y, t.z));
        out.push(Wrench::new(0.0, 0.0, 0.0, -t.x, -t.y, -t.z));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct WrenchSet {
    pub wrenches: Vec<Wrench>,
}

impl WrenchSet {
    pub fn new(wrenches: Vec<Wrench>) -> Result<Self> {
        if wrenches.is_empty() {
            return Err(Error::input("wrench set is empty"));
        }
        if wrenches.iter().any(|w| !w.iter().all(|v| v.is_finite())) {
            return Err(Error::input("wrench set has non-finite entries"));
        }
        Ok(Self { wrenches })
    }

    /// Wrenches of all contacts, torques taken about `center`.
    pub fn from_contacts(contacts: &[Contact], center: &Point3<f64>, lambda: f64) -> Result<Self> {
        let wrenches = contacts
            .iter()
            .flat_map(|c| {
                let shifted = Contact {
                    position: Point3::from(c.position - center),
                    ..*c
                };
                contact_wrenches(&shifted, lambda)
            })
            .collect();
        Self::new(wrenches)
    }

    pub fn rank(&self) -> usize {
        let m = DMatrix::from_fn(6, self.wrenches.len(), |r, c| self.wrenches[c][r]);
        m.rank(1e-9)
    }

    /// Support value `max_i w_i . u`.
    pub fn support(&self, u: &Wrench) -> f64 {
        self.wrenches
            .iter()
            .map(|w| w.dot(u))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            wrenches: self.wrenches.iter().map(|w| w * factor).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QualityMethod {
    ExactHull,
    DirectionSampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsilonOptions {
    pub directions: usize,
    /// Best sampled directions refined by Nelder-Mead.
    pub refine_top: usize,
    pub refine_iters: u64,
    /// Try the hyperplane through the six most active wrenches at each
    /// refined direction.
    pub snap_facets: bool,
}

impl Default for EpsilonOptions {
    fn default() -> Self {
        Self {
            directions: 65_536,
            refine_top: 12,
            refine_iters: 400,
            snap_facets: true,
        }
    }
}

/// Wrenches considered when snapping a refined direction onto a facet.
const SNAP_POOL: usize = 9;

const HALTON_BASES: [u32; 6] = [2, 3, 5, 7, 11, 13];

fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut inv = 1.0 / b;
    let mut result = 0.0;
    while index > 0 {
        result += (index % base as u64) as f64 * inv;
        index /= base as u64;
        inv /= b;
    }
    result
}

/// Deterministic quasi-uniform unit vectors on the 5-sphere: Halton points
/// pushed through Box-Muller, then normalized.
pub fn sphere_directions(count: usize) -> Vec<Wrench> {
    (1..=count as u64)
        .map(|i| {
            let h: Vec<f64> = HALTON_BASES
                .iter()
                .map(|&b| radical_inverse(i, b).clamp(1e-12, 1.0 - 1e-12))
                .collect();
            let mut g = [0.0; 6];
            for pair in 0..3 {
                let r = (-2.0 * h[2 * pair].ln()).sqrt();
                let a = std::f64::consts::TAU * h[2 * pair + 1];
                g[2 * pair] = r * a.cos();
                g[2 * pair + 1] = r * a.sin();
            }
            Wrench::from(g).normalize()
        })
        .collect()
}

/// Orthonormal basis of the tangent space of the 5-sphere at `u`.
fn tangent_basis(u: &Wrench) -> [Wrench; 5] {
    let mut basis: Vec<Wrench> = Vec::with_capacity(5);
    for k in 0..6 {
        let mut e = Wrench::zeros();
        e[k] = 1.0;
        let mut v = e - u * u.dot(&e);
        for b in &basis {
            v -= b * b.dot(&v);
        }
        if v.norm() > 1e-6 {
            basis.push(v.normalize());
        }
        if basis.len() == 5 {
            break;
        }
    }
    [basis[0], basis[1], basis[2], basis[3], basis[4]]
}

struct ChartSupport<'a> {
    set: &'a WrenchSet,
    origin: Wrench,
    tangent: [Wrench; 5],
}

impl ChartSupport<'_> {
    fn point(&self, x: &[f64]) -> Wrench {
        let mut v = self.origin;
        for (b, xi) in self.tangent.iter().zip(x) {
            v += b * *xi;
        }
        v.normalize()
    }
}

impl CostFunction for ChartSupport<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.set.support(&self.point(x)))
    }
}

fn refine(set: &WrenchSet, start: &Wrench, iters: u64) -> (Wrench, f64) {
    let problem = ChartSupport {
        set,
        origin: *start,
        tangent: tangent_basis(start),
    };
    let step = 0.05;
    let mut simplex = vec![vec![0.0; 5]];
    for k in 0..5 {
        let mut v = vec![0.0; 5];
        v[k] = step;
        simplex.push(v);
    }
    let fallback = (*start, set.support(start));
    let Ok(solver) = NelderMead::new(simplex).with_sd_tolerance(1e-14) else {
        return fallback;
    };
    let Ok(result) = Executor::new(problem, solver)
        .configure(|s| s.max_iters(iters))
        .run()
    else {
        return fallback;
    };
    let Some(x) = result.state.best_param.as_ref() else {
        return fallback;
    };
    let problem = result.problem.problem.as_ref().expect("problem is kept");
    let u = problem.point(x);
    let value = set.support(&u);
    if value < fallback.1 {
        (u, value)
    } else {
        fallback
    }
}

/// Smallest offset among hyperplanes through six of the `SNAP_POOL` wrenches
/// most active along `u` that support the whole set with the origin inside.
fn snap_facet(set: &WrenchSet, u: &Wrench) -> Option<f64> {
    let mut order: Vec<usize> = (0..set.wrenches.len()).collect();
    order.sort_by(|&a, &b| set.wrenches[b].dot(u).total_cmp(&set.wrenches[a].dot(u)));
    if order.len() < 6 {
        return None;
    }
    let pool = &order[..order.len().min(SNAP_POOL)];
    let mut best: Option<f64> = None;
    let mut pick = [0usize, 1, 2, 3, 4, 5];
    loop {
        let idx: Vec<usize> = pick.iter().map(|&k| pool[k]).collect();
        if let Some(c) = facet_offset(set, &idx) {
            best = Some(best.map_or(c, |b| b.min(c)));
        }
        let Some(i) = (0..6).rev().find(|&i| pick[i] < pool.len() - 6 + i) else {
            return best;
        };
        pick[i] += 1;
        for j in i + 1..6 {
            pick[j] = pick[j - 1] + 1;
        }
    }
}

/// For six wrenches spanning a hyperplane `{x : n . x = c}` with `c > 0`
/// and every wrench on the origin side, returns `c` (with `|n| = 1`).
fn facet_offset(set: &WrenchSet, idx: &[usize]) -> Option<f64> {
    // n . w_i = 1 for all six, then normalize
    let a = Matrix6::from_fn(|r, c| set.wrenches[idx[r]][c]);
    let n = a.lu().solve(&SVector::<f64, 6>::repeat(1.0))?;
    let norm = n.norm();
    if !norm.is_finite() || norm < 1e-15 {
        return None;
    }
    let unit = n / norm;
    let c = 1.0 / norm;
    let tol = 1e-9 * (1.0 + c);
    set.wrenches.iter().all(|w| w.dot(&unit) <= c + tol).then_some(c)
}

/// `min_u max(0, max_i w_i . u)` over unit directions.
pub fn epsilon_quality(set: &WrenchSet) -> f64 {
    epsilon_quality_with(set, &EpsilonOptions::default())
}

pub fn epsilon_quality_with(set: &WrenchSet, opts: &EpsilonOptions) -> f64 {
    if set.rank() < 6 {
        return 0.0;
    }
    let directions = sphere_directions(opts.directions);
    let mut scored: Vec<(f64, usize)> = directions
        .par_iter()
        .enumerate()
        .map(|(i, u)| (set.support(u), i))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut best = scored[0].0;
    if best <= 0.0 {
        return 0.0;
    }
    let refined: Vec<(Wrench, f64)> = scored
        .iter()
        .take(opts.refine_top.max(1))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&&(_, i)| refine(set, &directions[i], opts.refine_iters))
        .collect();
    for (u, value) in refined {
        best = best.min(value);
        if opts.snap_facets {
            if let Some(c) = snap_facet(set, &u) {
                best = best.min(c);
            }
        }
    }
    best.max(0.0)
}

/// Cross-check estimator: the same procedure at ten times the direction
/// density.
pub fn epsilon_oracle(set: &WrenchSet) -> f64 {
    let base = EpsilonOptions::default();
    epsilon_quality_with(
        set,
        &EpsilonOptions {
            directions: base.directions * 10,
            refine_top: base.refine_top * 2,
            ..base
        },
    )
}

/// Nearest point of `conv(points)` to the origin (Wolfe's algorithm).
pub fn min_norm_point(points: &[Wrench]) -> Wrench {
    const EPS: f64 = 1e-12;
    let start = points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.norm_squared().total_cmp(&b.1.norm_squared()))
        .map(|(i, _)| i)
        .expect("non-empty point set");
    let mut active: Vec<usize> = vec![start];
    let mut weights: Vec<f64> = vec![1.0];
    let mut x = points[start];
    for _ in 0..200 {
        // major cycle: add the most violating point
        let (j, value) = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.dot(&x)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty point set");
        if value > x.norm_squared() - EPS * (1.0 + x.norm_squared()) || active.contains(&j) {
            break;
        }
        active.push(j);
        weights.push(0.0);
        // minor cycles: affine minimizer, step back into the simplex
        while let Some(alpha) = affine_minimizer(points, &active) {
            if alpha.iter().all(|&a| a > EPS) {
                weights = alpha;
                break;
            }
            let mut theta: f64 = 1.0;
            for (w, a) in weights.iter().zip(&alpha) {
                if *a <= EPS && w - a > 0.0 {
                    theta = theta.min(w / (w - a));
                }
            }
            for (w, a) in weights.iter_mut().zip(&alpha) {
                *w = theta * a + (1.0 - theta) * *w;
            }
            let mut k = 0;
            while k < active.len() {
                if weights[k] <= EPS {
                    active.remove(k);
                    weights.remove(k);
                } else {
                    k += 1;
                }
            }
            if active.len() <= 1 {
                break;
            }
        }
        let total: f64 = weights.iter().sum();
        x = active
            .iter()
            .zip(&weights)
            .fold(Wrench::zeros(), |acc, (&i, w)| acc + points[i] * (w / total));
    }
    x
}

/// Weights (summing to 1) of the point of minimum norm on the affine hull of
/// the active points.
fn affine_minimizer(points: &[Wrench], active: &[usize]) -> Option<Vec<f64>> {
    let k = active.len();
    let mut m = DMatrix::zeros(k + 1, k + 1);
    for (r, &i) in active.iter().enumerate() {
        for (c, &j) in active.iter().enumerate() {
            m[(r, c)] = points[i].dot(&points[j]);
        }
        m[(r, k)] = 1.0;
        m[(k, r)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = m.lu().solve(&rhs)?;
    Some(sol.iter().take(k).copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

const NU_CHUNK: usize = 4096;

/// Monte-Carlo volume of `conv(W + {0})`: uniform samples in its bounding
/// box, tested for hull membership. Chunks use independent seeded streams so
/// the estimate does not depend on the thread count.
pub fn nu_quality(set: &WrenchSet, samples: usize, seed: u64) -> NuEstimate {
    if set.rank() < 6 || samples == 0 {
        return NuEstimate {
            value: 0.0,
            std_error: 0.0,
            samples,
        };
    }
    let mut lo = Wrench::zeros();
    let mut hi = Wrench::zeros();
    for w in &set.wrenches {
        lo = lo.inf(w);
        hi = hi.sup(w);
    }
    let extent = hi - lo;
    let box_volume: f64 = extent.iter().product();
    let mut points = set.wrenches.clone();
    points.push(Wrench::zeros());
    let cache_directions: Vec<(Wrench, f64)> = sphere_directions(512)
        .into_iter()
        .map(|u| {
            let h = set.support(&u).max(0.0);
            (u, h)
        })
        .collect();

    let chunks = samples.div_ceil(NU_CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let count = NU_CHUNK.min(samples - chunk * NU_CHUNK);
            let mut separators: Vec<(Wrench, f64)> = cache_directions.clone();
            let mut shifted = vec![Wrench::zeros(); points.len()];
            let mut inside = 0;
            for _ in 0..count {
                let x = Wrench::from_fn(|r, _| lo[r] + extent[r] * rng.random::<f64>());
                if let Some(pos) = separators.iter().position(|(u, h)| u.dot(&x) > *h) {
                    // keep hits near the front
                    if pos > 0 {
                        separators.swap(pos, pos / 2);
                    }
                    continue;
                }
                for (s, p) in shifted.iter_mut().zip(&points) {
                    *s = p - x;
                }
                let nearest = min_norm_point(&shifted);
                let gap = nearest.norm();
                if gap <= 1e-9 * (1.0 + x.norm()) {
                    inside += 1;
                } else {
                    let u = -nearest / gap;
                    let h = set.support(&u).max(0.0);
                    separators.insert(0, (u, h));
                    if separators.len() > 4096 {
                        separators.pop();
                    }
                }
            }
            inside
        })
        .sum();
    let p = hits as f64 / samples as f64;
    NuEstimate {
        value: box_volume * p,
        std_error: box_volume * (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
    }
}

/// Every virtual contact within `threshold_mm` of the surface, moved onto
/// its closest surface point with the inward face normal.
pub fn detect_contacts(
    hand: &HandModel,
    wrist: &Isometry3<f64>,
    q_full: &[f64],
    mesh: &TriangleMesh,
    threshold_mm: f64,
    friction: &FrictionParams,
) -> Result<Vec<Contact>> {
    Ok(world_contacts(hand, wrist, q_full)?
        .iter()
        .filter_map(|c| {
            let closest = mesh.closest_point(&c.position);
            (closest.distance <= threshold_mm).then(|| Contact::new(closest.point, -closest.normal, friction))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub epsilon: f64,
    pub nu: f64,
    pub nu_std_error: f64,
    pub force_closure: bool,
    pub method: QualityMethod,
    pub contact_count: usize,
}

/// Epsilon and nu of a contact set on an object with the given bounding
/// sphere.
pub fn evaluate_quality(
    contacts: &[Contact],
    center: &Point3<f64>,
    lambda: f64,
    nu_samples: usize,
    seed: u64,
) -> Result<QualityReport> {
    if contacts.is_empty() {
        return Ok(QualityReport {
            epsilon: 0.0,
            nu: 0.0,
            nu_std_error: 0.0,
            force_closure: false,
            method: QualityMethod::DirectionSampling,
            contact_count: 0,
        });
    }
    let set = WrenchSet::from_contacts(contacts, center, lambda)?;
    let epsilon = epsilon_quality(&set);
    let nu = nu_quality(&set, nu_samples, seed);
    Ok(QualityReport {
        epsilon,
        nu: nu.value,
        nu_std_error: nu.std_error,
        force_closure: epsilon > 1e-9,
        method: QualityMethod::DirectionSampling,
        contact_count: contacts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contact(p: [f64; 3], n: [f64; 3], mu: f64) -> Contact {
        Contact::new(
            Point3::from(p),
            Vector3::from(n),
            &FrictionParams {
                mu,
                cone_edges: 8,
                patch_radius_mm: 10.0,
            },
        )
    }

    #[test]
    fn frictionless_contact_has_one_wrench() {
        let c = contact([1.0, 2.0, 3.0], [0.0, 0.0, -1.0], 0.0);
        let w = contact_wrenches(&c, 10.0);
        assert_eq!(w.len(), 1);
        assert!((w[0].fixed_rows::<3>(0) - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn contact_at_origin_has_only_torsion_torque() {
        let c = contact([0.0, 0.0, 0.0], [0.0, 1.0, 0.0], 0.5);
        let w = contact_wrenches(&c, 10.0);
        assert_eq!(w.len(), 10);
        for edge in &w[..8] {
            assert!(edge.fixed_rows::<3>(3).norm() < 1e-15);
        }
        assert!(w[8].fixed_rows::<3>(0).norm() == 0.0 && w[8].fixed_rows::<3>(3).norm() > 0.0);
    }

    #[test]
    fn cone_edges_stay_inside_exact_cone() {
        let mut c = contact([5.0, 0.0, 0.0], [-1.0, 0.0, 0.0], 0.7);
        c.cone_edges = 64;
        for w in contact_wrenches(&c, 10.0).iter().take(64) {
            let f = w.fixed_rows::<3>(0).into_owned();
            let normal = f.dot(&c.normal);
            let tangential = (f - c.normal * normal).norm();
            assert!(tangential <= c.mu * normal + 1e-9);
        }
    }

    #[test]
    fn single_contact_has_zero_epsilon() {
        let c = contact([30.0, 0.0, 0.0], [-1.0, 0.0, 0.0], 0.8);
        let set = WrenchSet::from_contacts(&[c], &Point3::origin(), 30.0).unwrap();
        assert_eq!(epsilon_quality(&set), 0.0);
        assert_eq!(nu_quality(&set, 1000, 0).value, 0.0);
    }

    #[test]
    fn directions_are_unit() {
        for u in sphere_directions(100) {
            assert!((u.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn min_norm_point_of_segment_and_simplex() {
        let a = Wrench::new(1.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        let b = Wrench::new(1.0, -1.0, 0.0, 0.0, 0.0, 0.0);
        let x = min_norm_point(&[a, b]);
        assert!((x - Wrench::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0)).norm() < 1e-12);
        let mut pts: Vec<Wrench> = (0..6)
            .map(|k| {
                let mut e = Wrench::zeros();
                e[k] = 1.0;
                e
            })
            .collect();
        pts.push(-Wrench::repeat(1.0));
        assert!(min_norm_point(&pts).norm() < 1e-9);
    }
}
