//! Implicit finite-difference scheme on the staggered MAC grid for the
//! barotropic compressible Navier-Stokes equations on the periodic torus.
//!
//! The density lives at cell centres and each velocity component on the
//! faces orthogonal to its axis. One time step solves the coupled nonlinear
//! system of [`scheme`] by the damped Newton method of [`newton`].

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod grid;
pub mod identities;
pub mod linear;
pub mod newton;
pub mod operators;
pub mod runner;
pub mod scheme;
pub mod sparse;
pub mod thermo;

pub use error::{Error, Result};
pub use fields::{CellField, FaceField, State};
pub use grid::StaggeredGrid;
pub use newton::{NewtonSolver, SolverConfig, StepFailure};
pub use runner::{run_experiment, RunConfig};
pub use scheme::SchemeParams;
pub use thermo::GasLaw;
