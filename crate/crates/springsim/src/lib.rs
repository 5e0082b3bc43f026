//! Differentiable spring-mass simulation and system identification for
//! point-cloud dynamics.
//!
//! The pipeline: sample anchors from a dense kernel cloud, connect them with
//! a k-nearest-neighbour spring topology, integrate with semi-implicit Euler,
//! differentiate the rollout with a hand-written adjoint, and fit physical
//! parameters to observed point-cloud trajectories with Adam. Supporting
//! pieces cover isotropic Gaussian splat rendering, similarity registration,
//! point-cloud and image metrics, and the on-disk formats used by the CLI.

pub mod error;
pub mod assignment;
mod cli;
pub(crate) mod dual;
pub mod dynamics;
pub mod geometry;
pub mod gradients;
pub mod identification;
pub mod io;
pub mod metrics;
pub(crate) mod optim;
pub mod registration;
pub mod splat;

pub use error::{Error, Result};

/// CLI entry point; returns the process exit code.
pub fn run() -> i32 {
    cli::run(std::env::args_os())
}
