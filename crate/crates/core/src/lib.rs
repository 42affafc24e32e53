//! Simulation and verification toolkit for rate-independent systems driven
//! by a time-dependent energy and a metric dissipation.
//!
//! The crate covers three incremental minimization schemes (energetic,
//! viscous and visco-energetic), the jump costs that distinguish the
//! corresponding solution concepts, and certificates that check a sampled
//! curve against each concept's stability, energy balance and jump
//! conditions.

pub mod bvcurve;
pub mod error;
pub mod experiment;
pub mod jumpcost;
pub mod model;
pub mod par;
pub mod solvers;
pub mod verify;

pub use error::{Error, Result};
