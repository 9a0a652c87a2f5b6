//! Central configurations of the gravitational N-body problem, the flat
//! homographic orbits they generate, and numerical checks of the relations
//! those orbits satisfy.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod characteristics;
pub mod cli;
pub mod error;
pub mod integrator;
pub mod io;
pub mod lagrange;
pub mod minsize;
pub mod quadrature;
pub mod solver;
pub mod trajectory;

pub use characteristics::{Characteristics, Configuration, MassSpec, PhaseState};
pub use error::{Error, Result};
