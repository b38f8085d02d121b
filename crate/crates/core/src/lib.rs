//! Continuous-time parameter estimation by dynamic regressor extension and
//! mixing, with removal of regressor-correlated perturbations.
//!
//! The crate is organised bottom-up:
//!
//! * [`matrix`]: small dense matrices, adjugates, eliminator construction;
//! * [`sim`]: RK4 stepping, delay lines, filters, signal generators;
//! * [`drem`]: duplication, extension schemes and mixing;
//! * [`annihilate`]: the annihilation chain and condition diagnostics;
//! * [`estimators`]: the estimation laws;
//! * [`experiment`]: scenario configuration, full-pipeline runs, sweeps.

pub mod annihilate;
pub mod drem;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod matrix;
pub mod sim;

pub use error::{Error, Result};
