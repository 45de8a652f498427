//! Position-only inverse kinematics by damped least squares with adaptive
//! damping and uniform random restarts.

use nalgebra::{DVector, Matrix3, Point3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::chain::KinematicChain;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkOptions {
    /// Accepted end-point residual in mm.
    pub tol_mm: f64,
    /// Iteration cap per attempt (accepted and rejected steps both count).
    pub max_iters: usize,
    /// Extra attempts from uniform random seeds after the given seed fails.
    pub restarts: usize,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            tol_mm: 1.0,
            max_iters: 100,
            restarts: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q: Vec<f64>,
    pub residual_mm: f64,
    pub iterations: usize,
}

const INITIAL_DAMPING_MM: f64 = 1.0;
const MIN_DAMPING_MM: f64 = 1e-3;
const MAX_DAMPING_MM: f64 = 1e5;
const MAX_STEP_RAD: f64 = 0.5;

/// Solves for a configuration placing the chain's end point at `target`.
///
/// Returns `Ok(None)` when no attempt converges; that is an ordinary
/// "unreachable" answer, not an error.
pub fn solve_ik<R: Rng + ?Sized>(
    chain: &KinematicChain,
    target: &Point3<f64>,
    seed: &[f64],
    opts: &IkOptions,
    rng: &mut R,
) -> Result<Option<IkSolution>> {
    if seed.len() != chain.dof() {
        return Err(Error::Dimension {
            expected: chain.dof(),
            got: seed.len(),
        });
    }
    if !target.iter().all(|v| v.is_finite()) {
        return Err(Error::input("IK target is not finite"));
    }
    if out_of_reach(chain, target, opts.tol_mm) {
        return Ok(None);
    }
    if let Some(sol) = dls_attempt(chain, target, seed, opts) {
        return Ok(Some(sol));
    }
    for _ in 0..opts.restarts {
        let start = random_config(chain, rng);
        if let Some(sol) = dls_attempt(chain, target, &start, opts) {
            return Ok(Some(sol));
        }
    }
    Ok(None)
}

/// A configuration drawn uniformly within the joint limits.
pub fn random_config<R: Rng + ?Sized>(chain: &KinematicChain, rng: &mut R) -> Vec<f64> {
    chain
        .joints()
        .iter()
        .map(|j| rng.random_range(j.limits.lower..=j.limits.upper))
        .collect()
}

pub(crate) fn out_of_reach(chain: &KinematicChain, target: &Point3<f64>, tol: f64) -> bool {
    (target.coords - chain.base().translation.vector).norm() > chain.reach() + tol
}

/// One damped least-squares descent from `seed` (clamped into limits first).
///
/// Damping follows a Levenberg-Marquardt rule: halve after an improving step,
/// quadruple and retry after a worsening one.
pub fn dls_attempt(
    chain: &KinematicChain,
    target: &Point3<f64>,
    seed: &[f64],
    opts: &IkOptions,
) -> Option<IkSolution> {
    let n = chain.dof();
    let mut q = seed.to_vec();
    chain.clamp(&mut q);
    let mut pose = chain.forward_kinematics(&q).ok()?;
    let mut err: Vector3<f64> = target.coords - pose.end.translation.vector;
    let mut damping = INITIAL_DAMPING_MM;

    for iter in 0..opts.max_iters {
        let residual = err.norm();
        if residual <= opts.tol_mm {
            return Some(IkSolution {
                q,
                residual_mm: residual,
                iterations: iter,
            });
        }
        let lin = chain.jacobian_from_pose(&pose).linear();
        let gram: Matrix3<f64> = &lin * lin.transpose() + Matrix3::identity() * damping * damping;
        let solved = gram.cholesky()?.solve(&err);
        let mut dq: DVector<f64> = lin.transpose() * solved;
        let largest = dq.amax();
        if largest > MAX_STEP_RAD {
            dq *= MAX_STEP_RAD / largest;
        }
        let mut candidate: Vec<f64> = q.iter().zip(dq.iter()).map(|(a, b)| a + b).collect();
        chain.clamp(&mut candidate);
        let cand_pose = chain.forward_kinematics(&candidate).ok()?;
        let cand_err = target.coords - cand_pose.end.translation.vector;
        if cand_err.norm() < residual {
            q = candidate;
            pose = cand_pose;
            err = cand_err;
            damping = (damping * 0.5).max(MIN_DAMPING_MM);
        } else {
            damping *= 4.0;
            if damping > MAX_DAMPING_MM {
                break;
            }
        }
        debug_assert_eq!(q.len(), n);
    }
    let residual = err.norm();
    (residual <= opts.tol_mm).then_some(IkSolution {
        q,
        residual_mm: residual,
        iterations: opts.max_iters,
    })
}
