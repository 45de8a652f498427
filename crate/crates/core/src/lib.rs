//! Functional grasp planning for multi-fingered hands.
//!
//! The pipeline runs in two phases. Offline, [`heatmap::generate`] grades palm
//! placements on an object's surface by whether the designated functional
//! finger can still reach the object's functional part from there, and how
//! well it can push along the task direction. At runtime,
//! [`planner::anneal`] searches wrist pose plus eigengrasp amplitudes under a
//! blend of contact, functional and palm energies, and [`quality`] scores the
//! closed grasp with wrench-space metrics.

pub mod cli_io;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod heatmap;
pub mod kinematics;
pub mod planner;
pub mod quality;

pub use error::{Error, Result};
