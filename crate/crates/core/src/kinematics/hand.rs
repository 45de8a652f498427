use nalgebra::{Isometry3, Unit, Vector3};

use super::chain::{JointLimits, JointSpec, KinematicChain};
use crate::energy::{LinkRef, VirtualContact};
use crate::error::{Error, Result};
use crate::planner::EigengraspBasis;

/// One finger: a chain rooted in the palm frame plus the joint velocity
/// direction that closes it onto an object.
#[derive(Debug, Clone, PartialEq)]
pub struct Finger {
    pub name: String,
    pub chain: KinematicChain,
    pub close_direction: Vec<f64>,
}

/// A multi-finger hand. All finger chains are expressed in the palm frame,
/// whose world pose is the wrist pose searched by the planner.
#[derive(Debug, Clone, PartialEq)]
pub struct HandModel {
    pub name: String,
    /// Palm approach axis in the palm frame (points from the palm toward a
    /// grasped object).
    pub palm_normal: Unit<Vector3<f64>>,
    pub fingers: Vec<Finger>,
    pub functional_finger: usize,
    /// Link index on the functional finger carrying the functional contacts;
    /// must be its distal link.
    pub functional_link: usize,
    pub virtual_contacts: Vec<VirtualContact>,
    pub eigengrasp: EigengraspBasis,
}

impl HandModel {
    pub fn validate(&self) -> Result<()> {
        let Some(finger) = self.fingers.get(self.functional_finger) else {
            return Err(Error::config(format!(
                "functional finger index {} out of range ({} fingers)",
                self.functional_finger,
                self.fingers.len()
            )));
        };
        if finger.chain.dof() < 2 {
            return Err(Error::config(format!(
                "functional finger '{}' needs at least 2 joints, has {}",
                finger.name,
                finger.chain.dof()
            )));
        }
        if self.functional_link + 1 != finger.chain.dof() {
            return Err(Error::config(format!(
                "functional link {} is not the distal link of finger '{}'",
                self.functional_link, finger.name
            )));
        }
        for f in &self.fingers {
            if f.close_direction.len() != f.chain.dof() {
                return Err(Error::config(format!(
                    "finger '{}': close direction has {} entries for {} joints",
                    f.name,
                    f.close_direction.len(),
                    f.chain.dof()
                )));
            }
        }
        let mut functional = 0;
        for (i, vc) in self.virtual_contacts.iter().enumerate() {
            if let LinkRef::Finger { finger, link } = vc.link {
                let ok = self.fingers.get(finger).is_some_and(|f| link < f.chain.dof());
                if !ok {
                    return Err(Error::config(format!(
                        "virtual contact {i} references missing link ({finger}, {link})"
                    )));
                }
            }
            if vc.functional {
                let on_functional_link = vc.link
                    == LinkRef::Finger {
                        finger: self.functional_finger,
                        link: self.functional_link,
                    };
                if !on_functional_link {
                    return Err(Error::config(format!(
                        "virtual contact {i} is marked functional but is not on the functional link"
                    )));
                }
                functional += 1;
            }
        }
        if functional == 0 {
            return Err(Error::config("hand has no functional virtual contact"));
        }
        if functional == self.virtual_contacts.len() {
            return Err(Error::config("hand has no non-functional virtual contact"));
        }
        self.eigengrasp.validate(self.dof())?;
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.fingers.iter().map(|f| f.chain.dof()).sum()
    }

    /// Start index of each finger's joints within a full joint vector.
    pub fn joint_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.fingers.len());
        let mut acc = 0;
        for f in &self.fingers {
            offsets.push(acc);
            acc += f.chain.dof();
        }
        offsets
    }

    pub fn finger_joints<'a>(&self, q_full: &'a [f64], finger: usize) -> &'a [f64] {
        let start: usize = self.fingers[..finger].iter().map(|f| f.chain.dof()).sum();
        &q_full[start..start + self.fingers[finger].chain.dof()]
    }

    pub fn joint_limits(&self) -> Vec<JointLimits> {
        self.fingers.iter().flat_map(|f| f.chain.limits()).collect()
    }

    pub fn clamp(&self, q_full: &mut [f64]) {
        for (v, lim) in q_full.iter_mut().zip(self.joint_limits()) {
            *v = lim.clamp(*v);
        }
    }

    pub fn functional_chain(&self) -> &KinematicChain {
        &self.fingers[self.functional_finger].chain
    }

    /// World frames of every finger link for a wrist pose and full joint vector.
    pub fn link_frames(
        &self,
        wrist: &Isometry3<f64>,
        q_full: &[f64],
    ) -> Result<Vec<Vec<Isometry3<f64>>>> {
        if q_full.len() != self.dof() {
            return Err(Error::Dimension {
                expected: self.dof(),
                got: q_full.len(),
            });
        }
        let mut frames = Vec::with_capacity(self.fingers.len());
        let mut start = 0;
        for f in &self.fingers {
            let n = f.chain.dof();
            let pose = f.chain.mounted(wrist).forward_kinematics(&q_full[start..start + n])?;
            frames.push(pose.links);
            start += n;
        }
        Ok(frames)
    }

    /// The functional contacts expressed in the functional fingertip frame
    /// (the chain's end-effector frame).
    pub fn functional_contacts_in_tip(&self) -> Vec<(Vector3<f64>, Vector3<f64>)> {
        let tip_from_link = self.functional_chain().end_offset().inverse();
        self.virtual_contacts
            .iter()
            .filter(|vc| vc.functional)
            .map(|vc| {
                (
                    (tip_from_link * nalgebra::Point3::from(vc.local_position)).coords,
                    tip_from_link.rotation * vc.local_normal.into_inner(),
                )
            })
            .collect()
    }
}

/// Re-roots the functional finger at its fingertip so that the chain ends at
/// the palm frame origin.
///
/// The reversed chain runs the joints in reverse order with negated angles:
/// evaluating it at [`reverse_config`]`(q)` yields the inverse of the forward
/// fingertip pose (palm pose seen from the fingertip).
pub fn reverse_chain(hand: &HandModel) -> Result<KinematicChain> {
    hand.validate()?;
    let chain = hand.functional_chain();
    let joints = chain.joints();
    let n = joints.len();
    let mut reversed = Vec::with_capacity(n);
    for k in 0..n {
        let src = &joints[n - 1 - k];
        let origin = if k == 0 {
            chain.end_offset().inverse()
        } else {
            joints[n - k].origin.inverse()
        };
        reversed.push(JointSpec::revolute(
            format!("{}_rev", src.name),
            src.axis.into_inner(),
            origin,
            src.limits.negated(),
        )?);
    }
    let end_offset = (chain.base() * joints[0].origin).inverse();
    KinematicChain::new(reversed, Isometry3::identity(), end_offset)
}

/// Maps a forward configuration to the reversed chain's (and back).
pub fn reverse_config(q: &[f64]) -> Vec<f64> {
    q.iter().rev().map(|v| -v).collect()
}
