//! Simulation kernel for teleportation-based OTOC measurements on small
//! spin chains: Hamiltonians, open-system dynamics, noise channels, the
//! protocol estimators and calibration formulas.

pub mod calib;
pub mod channels;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod protocol;
pub mod spinchain;

pub use error::{Error, Result};
