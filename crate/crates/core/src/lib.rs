//! Driven atom chains coupled chirally to a waveguide, with photon-counting
//! and homodyne measurement feedback: Lindblad generators, stationary
//! states, full counting statistics from tilted generators, and Monte Carlo
//! unravelings.

pub mod checks;
pub mod cli;
pub mod config;
pub mod error;
pub mod fcs;
pub mod generators;
pub mod linalg;
pub mod operators;
pub mod steady;
pub mod sweep;
pub mod trajectories;

pub use error::{Error, Result};
