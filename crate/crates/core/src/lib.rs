//! Numerical engine for positive solutions of the superlinear indefinite
//! problem `-u'' = λu + a(t)u^p`, `u(0) = u(1) = M`, with a piecewise
//! constant weight that is negative on the outer intervals.
//!
//! The solution set is reduced to transit times of the central
//! Hamiltonian flow between two boundary curves in the phase plane; see
//! the README for the overall pipeline.

pub mod acceptance;
pub mod diagram;
pub mod error;
pub mod export;
pub mod gamma;
pub mod ode;
pub mod problem;
pub mod quad;
pub mod roots;
pub mod solver;
pub mod timemap;

pub use error::{Error, Result};
pub use problem::*;
