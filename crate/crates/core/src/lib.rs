//! Solver and verification harness for the singular conserved phase-field
//! system in its nonlocal-viscous, nonlocal and local regimes.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod expr;
pub mod graphs;
pub mod grid;
pub mod harness;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod scalar;
pub mod solver;

pub use error::{Assumption, Error, Result};
pub use grid::{Field, Grid, Unit};
pub use config::{Coupling, Mode, RunConfig};
pub use solver::{Problem, Trajectory};
