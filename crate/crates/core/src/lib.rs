//! Optimal boundary control of the viscous Cahn-Hilliard system with a
//! dynamic boundary condition and a singular (logarithmic) potential.
//!
//! The state solver, the linearized and adjoint systems, the reduced cost and
//! a projected-gradient optimizer share one lumped finite-volume
//! discretization on the interval or the unit square.

pub mod adjoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod field;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod objective;
pub mod optimizer;
pub mod parabolic;
pub mod potentials;
pub mod problem;
pub mod sensitivity;
pub mod state;
pub mod time;
pub mod verify;

pub use error::{Error, Result};
pub use field::{BoundaryField, BulkField};
pub use problem::Problem;
