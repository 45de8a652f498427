//! Serial revolute chains: forward kinematics, geometric Jacobians and the
//! joint-limit weighted Jacobian used for manipulability grading.

use log::warn;
use nalgebra::{
    Isometry3, Matrix3, Matrix3xX, Matrix6xX, Point3, SymmetricEigen, Translation3, Unit,
    UnitQuaternion, Vector3,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on a joint-limit weight, reached exactly at a limit.
pub const MAX_JOINT_WEIGHT: f64 = 1e6;

/// Eigenvalues below this are treated as a singular configuration.
const SINGULAR_EIGENVALUE: f64 = 1e-12;

/// Closed interval of admissible joint angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub lower: f64,
    pub upper: f64,
}

impl JointLimits {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::config(format!(
                "joint limits must satisfy lo < hi, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.lower, self.upper)
    }

    pub fn contains(&self, q: f64) -> bool {
        q >= self.lower && q <= self.upper
    }

    /// Limits of the same joint driven with the opposite sign.
    pub fn negated(&self) -> Self {
        Self {
            lower: -self.upper,
            upper: -self.lower,
        }
    }

    /// Derivative of the joint-limit performance criterion
    /// `(hi - lo)^2 / (4 (hi - q)(q - lo))` with respect to `q`.
    pub fn limit_gradient(&self, q: f64) -> f64 {
        let to_upper = self.upper - q;
        let to_lower = q - self.lower;
        let denom = 4.0 * to_upper * to_upper * to_lower * to_lower;
        if denom <= 0.0 {
            return f64::INFINITY;
        }
        self.range() * self.range() * (2.0 * q - self.upper - self.lower) / denom
    }

    /// Weighted least-norm weight `1 + |dH/dq|`, clamped to [`MAX_JOINT_WEIGHT`].
    pub fn weight(&self, q: f64) -> f64 {
        let g = self.limit_gradient(q).abs();
        if g.is_finite() {
            (1.0 + g).min(MAX_JOINT_WEIGHT)
        } else {
            MAX_JOINT_WEIGHT
        }
    }
}

/// A revolute joint: fixed origin transform from the parent frame followed by
/// a rotation about `axis`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    pub name: String,
    pub axis: Unit<Vector3<f64>>,
    pub origin: Isometry3<f64>,
    pub limits: JointLimits,
}

impl JointSpec {
    pub fn revolute(
        name: impl Into<String>,
        axis: Vector3<f64>,
        origin: Isometry3<f64>,
        limits: JointLimits,
    ) -> Result<Self> {
        let name = name.into();
        let norm = axis.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "joint '{name}': axis must be unit length (|axis| = {norm})"
            )));
        }
        check_rotation(&origin, &name)?;
        Ok(Self {
            name,
            axis: Unit::new_unchecked(axis),
            origin,
            limits,
        })
    }

    fn motion(&self, q: f64) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_axis_angle(&self.axis, q),
        )
    }
}

fn check_rotation(iso: &Isometry3<f64>, what: &str) -> Result<()> {
    let r: Matrix3<f64> = iso.rotation.to_rotation_matrix().into_inner();
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = r.determinant();
    if err > 1e-9 || (det - 1.0).abs() > 1e-9 || !iso.translation.vector.iter().all(|v| v.is_finite())
    {
        return Err(Error::config(format!(
            "{what}: origin rotation is not a proper rotation"
        )));
    }
    Ok(())
}

/// World transforms of every link frame plus the end-effector.
#[derive(Debug, Clone)]
pub struct ChainPose {
    /// Frame of link `i`, i.e. after the rotation of joint `i`.
    pub links: Vec<Isometry3<f64>>,
    pub end: Isometry3<f64>,
}

/// Geometric Jacobian: rows 0..3 linear velocity (mm/s per rad/s), rows 3..6
/// angular velocity, one column per joint.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub matrix: Matrix6xX<f64>,
}

impl Jacobian {
    pub fn linear(&self) -> Matrix3xX<f64> {
        self.matrix.fixed_rows::<3>(0).into_owned()
    }

    pub fn angular(&self) -> Matrix3xX<f64> {
        self.matrix.fixed_rows::<3>(3).into_owned()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    joints: Vec<JointSpec>,
    base: Isometry3<f64>,
    end_offset: Isometry3<f64>,
}

impl KinematicChain {
    pub fn new(
        joints: Vec<JointSpec>,
        base: Isometry3<f64>,
        end_offset: Isometry3<f64>,
    ) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::config("kinematic chain needs at least one joint"));
        }
        check_rotation(&base, "chain base")?;
        check_rotation(&end_offset, "chain end offset")?;
        let chain = Self {
            joints,
            base,
            end_offset,
        };
        if !(chain.reach() > 0.0) {
            return Err(Error::config("kinematic chain has zero total reach"));
        }
        Ok(chain)
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn base(&self) -> &Isometry3<f64> {
        &self.base
    }

    pub fn end_offset(&self) -> &Isometry3<f64> {
        &self.end_offset
    }

    pub fn limits(&self) -> Vec<JointLimits> {
        self.joints.iter().map(|j| j.limits).collect()
    }

    /// Sum of link translation lengths from the base frame to the end point;
    /// an upper bound on `|end - base|` over all configurations.
    pub fn reach(&self) -> f64 {
        self.joints
            .iter()
            .map(|j| j.origin.translation.vector.norm())
            .sum::<f64>()
            + self.end_offset.translation.vector.norm()
    }

    /// The same chain mounted under `parent` (the new base is `parent * base`).
    pub fn mounted(&self, parent: &Isometry3<f64>) -> Self {
        Self {
            joints: self.joints.clone(),
            base: parent * self.base,
            end_offset: self.end_offset,
        }
    }

    pub fn with_base(&self, base: Isometry3<f64>) -> Self {
        Self {
            joints: self.joints.clone(),
            base,
            end_offset: self.end_offset,
        }
    }

    pub fn midpoint_config(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.limits.midpoint()).collect()
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = j.limits.clamp(*v);
        }
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.dof() && q.iter().zip(&self.joints).all(|(v, j)| j.limits.contains(*v))
    }

    fn check_config(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::Dimension {
                expected: self.dof(),
                got: q.len(),
            });
        }
        if let Some(bad) = q.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!("joint value {bad} is not finite")));
        }
        Ok(())
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> Result<ChainPose> {
        self.check_config(q)?;
        let mut frame = self.base;
        let mut links = Vec::with_capacity(self.dof());
        for (joint, &angle) in self.joints.iter().zip(q) {
            frame = frame * joint.origin * joint.motion(angle);
            links.push(frame);
        }
        let end = frame * self.end_offset;
        Ok(ChainPose { links, end })
    }

    pub fn end_position(&self, q: &[f64]) -> Result<Point3<f64>> {
        Ok(Point3::from(
            self.forward_kinematics(q)?.end.translation.vector,
        ))
    }

    /// Column `i` is `(z_i x (p_end - p_i), z_i)` in the world frame.
    pub fn jacobian(&self, q: &[f64]) -> Result<Jacobian> {
        let pose = self.forward_kinematics(q)?;
        Ok(self.jacobian_from_pose(&pose))
    }

    pub(crate) fn jacobian_from_pose(&self, pose: &ChainPose) -> Jacobian {
        let p_end = pose.end.translation.vector;
        let mut matrix = Matrix6xX::zeros(self.dof());
        for (i, (joint, link)) in self.joints.iter().zip(&pose.links).enumerate() {
            let z = link.rotation * joint.axis.into_inner();
            let r = p_end - link.translation.vector;
            let lin = z.cross(&r);
            matrix.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            matrix.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
        }
        Jacobian { matrix }
    }

    /// Joint-limit weights `w_i = 1 + |dH/dq_i|`.
    pub fn joint_weights(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.check_config(q)?;
        Ok(self
            .joints
            .iter()
            .zip(q)
            .map(|(j, &v)| j.limits.weight(v))
            .collect())
    }

    /// `J W^(-1/2)` with the weighted least-norm joint-limit weights.
    pub fn weighted_jacobian(&self, q: &[f64]) -> Result<Jacobian> {
        let mut jac = self.jacobian(q)?;
        for (i, w) in self.joint_weights(q)?.into_iter().enumerate() {
            jac.matrix.column_mut(i).scale_mut(1.0 / w.sqrt());
        }
        Ok(jac)
    }

    /// Grades how readily the end point moves along `direction`:
    /// `sum_i |t . v_i| lambda_i` over the eigenpairs of `J_lin J_lin^T`
    /// of the weighted Jacobian.
    pub fn directional_manipulability(&self, q: &[f64], direction: &Vector3<f64>) -> Result<f64> {
        let t = unit_direction(direction)?;
        let jac = self.weighted_jacobian(q)?;
        Ok(directional_score(&jac.linear(), &t))
    }
}

pub(crate) fn unit_direction(direction: &Vector3<f64>) -> Result<Vector3<f64>> {
    let norm = direction.norm();
    if !norm.is_finite() || norm < 1e-12 {
        return Err(Error::config("task direction must be a non-zero vector"));
    }
    if (norm - 1.0).abs() > 1e-6 {
        warn!("task direction has norm {norm}; normalizing");
    }
    Ok(direction / norm)
}

/// Score from a linear Jacobian block and a unit direction.
pub fn directional_score(linear: &Matrix3xX<f64>, t: &Vector3<f64>) -> f64 {
    let gram: Matrix3<f64> = linear * linear.transpose();
    let eig = SymmetricEigen::new(gram);
    let eigenvalues = eig.eigenvalues.map(|l| l.max(0.0));
    if eigenvalues.iter().all(|&l| l < SINGULAR_EIGENVALUE) {
        return 0.0;
    }
    eig.eigenvectors
        .column_iter()
        .zip(eigenvalues.iter())
        .map(|(v, &l)| t.dot(&v).abs() * l)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn planar_two_link() -> KinematicChain {
        let lim = JointLimits::new(-3.0, 3.0).unwrap();
        let j1 = JointSpec::revolute("j1", Vector3::z(), Isometry3::identity(), lim).unwrap();
        let j2 = JointSpec::revolute(
            "j2",
            Vector3::z(),
            Isometry3::translation(100.0, 0.0, 0.0),
            lim,
        )
        .unwrap();
        KinematicChain::new(
            vec![j1, j2],
            Isometry3::identity(),
            Isometry3::translation(100.0, 0.0, 0.0),
        )
        .unwrap()
    }

    #[test]
    fn straight_chain_reaches_along_x() {
        let chain = planar_two_link();
        let p = chain.end_position(&[0.0, 0.0]).unwrap();
        assert!((p - Point3::new(200.0, 0.0, 0.0)).norm() < 1e-12);
        let p = chain.end_position(&[FRAC_PI_2, 0.0]).unwrap();
        assert!((p - Point3::new(0.0, 200.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let chain = planar_two_link();
        assert!(matches!(
            chain.forward_kinematics(&[0.0]),
            Err(Error::Dimension { expected: 2, got: 1 })
        ));
        assert!(chain.forward_kinematics(&[0.0, f64::NAN]).is_err());
    }

    #[test]
    fn planar_jacobian_columns() {
        let chain = planar_two_link();
        let lin = chain.jacobian(&[0.0, 0.0]).unwrap().linear();
        assert!((lin.column(0) - Vector3::new(0.0, 200.0, 0.0)).norm() < 1e-12);
        assert!((lin.column(1) - Vector3::new(0.0, 100.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn single_joint_jacobian() {
        let lim = JointLimits::new(-1.0, 1.0).unwrap();
        let j = JointSpec::revolute("j", Vector3::z(), Isometry3::identity(), lim).unwrap();
        let chain = KinematicChain::new(
            vec![j],
            Isometry3::identity(),
            Isometry3::translation(100.0, 0.0, 0.0),
        )
        .unwrap();
        let jac = chain.jacobian(&[0.0]).unwrap();
        let expected = [0.0, 100.0, 0.0, 0.0, 0.0, 1.0];
        for (a, b) in jac.matrix.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn midpoint_weights_are_unity() {
        let chain = planar_two_link();
        let q = chain.midpoint_config();
        assert_eq!(chain.joint_weights(&q).unwrap(), vec![1.0, 1.0]);
        assert_eq!(
            chain.weighted_jacobian(&q).unwrap(),
            chain.jacobian(&q).unwrap()
        );
    }

    #[test]
    fn near_limit_shrinks_weighted_column() {
        let chain = planar_two_link();
        let q = [-3.0 + 0.99 * 6.0, 0.3];
        let j = chain.jacobian(&q).unwrap();
        let jw = chain.weighted_jacobian(&q).unwrap();
        assert!(jw.matrix.column(0).norm() < j.matrix.column(0).norm());
    }

    #[test]
    fn weight_is_clamped_at_limit() {
        let lim = JointLimits::new(-1.0, 1.0).unwrap();
        assert_eq!(lim.weight(1.0), MAX_JOINT_WEIGHT);
        assert_eq!(lim.weight(-1.0), MAX_JOINT_WEIGHT);
        assert_eq!(lim.weight(0.0), 1.0);
    }

    #[test]
    fn weighted_column_norm_decreases_toward_upper_limit() {
        let chain = planar_two_link();
        let lim = chain.joints()[1].limits;
        let mut prev = f64::INFINITY;
        for k in 0..=200 {
            let q1 = lim.midpoint() + (lim.upper - lim.midpoint()) * k as f64 / 200.0;
            let jw = chain.weighted_jacobian(&[0.2, q1]).unwrap();
            let j = chain.jacobian(&[0.2, q1]).unwrap();
            // the unweighted column has constant norm for the distal joint
            let ratio = jw.matrix.column(1).norm() / j.matrix.column(1).norm();
            assert!(ratio <= prev, "not monotone at step {k}");
            prev = ratio;
        }
    }

    #[test]
    fn planar_manipulability_closed_form() {
        let chain = planar_two_link();
        let q = [0.0, 0.0];
        let up = chain
            .directional_manipulability(&q, &Vector3::new(0.0, 1.0, 0.0))
            .unwrap();
        let along = chain
            .directional_manipulability(&q, &Vector3::new(1.0, 0.0, 0.0))
            .unwrap();
        assert!((up - 5e4).abs() / 5e4 < 1e-9);
        assert!(along.abs() < 1e-6);
    }

    #[test]
    fn zero_direction_is_an_error() {
        let chain = planar_two_link();
        assert!(chain
            .directional_manipulability(&[0.0, 0.0], &Vector3::zeros())
            .is_err());
    }

    #[test]
    fn invalid_joint_specs_are_rejected() {
        let lim = JointLimits::new(-1.0, 1.0).unwrap();
        assert!(JointSpec::revolute("a", Vector3::new(1.0, 1.0, 0.0), Isometry3::identity(), lim).is_err());
        assert!(JointLimits::new(1.0, 1.0).is_err());
        assert!(KinematicChain::new(vec![], Isometry3::identity(), Isometry3::identity()).is_err());
        let j = JointSpec::revolute("a", Vector3::z(), Isometry3::identity(), lim).unwrap();
        assert!(KinematicChain::new(vec![j], Isometry3::identity(), Isometry3::identity()).is_err());
    }
}
