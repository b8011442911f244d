//! Multisymplectic Yang–Mills on a trivial principal bundle `Tⁿ × G`.
//!
//! The crate is layered bottom-up: [`lie`] holds finite-dimensional Lie
//! algebra arithmetic, [`exterior`] a symbolic engine for the coframe
//! identities, [`fiber`] exact harmonic analysis on the structure group,
//! [`field`] lattice containers and differential operators, [`dynamics`] the
//! densities and residual systems, [`gauge`] the two gauge actions and
//! [`solver`] the least-squares driver used by the emergent-equivariance
//! experiment.

pub mod dynamics;
pub mod error;
pub mod exterior;
pub mod fiber;
pub mod field;
pub mod gauge;
pub mod lie;
mod precond;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
