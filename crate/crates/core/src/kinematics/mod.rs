//! Parametric serial-chain hand model.
//!
//! Units are millimetres and radians throughout; only revolute joints exist.

mod chain;
mod hand;
mod ik;

pub use chain::{
    directional_score, ChainPose, Jacobian, JointLimits, JointSpec, KinematicChain,
    MAX_JOINT_WEIGHT,
};
pub(crate) use chain::unit_direction;
pub use hand::{reverse_chain, reverse_config, Finger, HandModel};
pub use ik::{dls_attempt, random_config, solve_ik, IkOptions, IkSolution};
pub(crate) use ik::out_of_reach;
