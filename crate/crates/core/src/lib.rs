//! Simulation and tuning laboratory for super-twisting sliding-mode loops
//! driven by periodic perturbations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod par;
pub mod plant;
pub mod runner;
pub mod signals;
pub mod tuning;

pub use error::{Error, Result};
