//! Simulation of continuously measured finite-dimensional quantum systems.
//!
//! A measurement of an observable `A` with resolution `kappa` over `[0, T]`
//! produces a readout curve `a(t)`. Conditioned on a known readout, the
//! state evolves under the non-Hermitian effective Hamiltonian
//! `H - i kappa (A - a(t))^2` ([`selective`]); averaged over all readouts it
//! obeys the double-commutator master equation ([`nonselective`]).
//! Readouts can be drawn from their exact distribution ([`sampler`]) and the
//! conditioned propagator can be checked against a literal sum over paths in
//! the eigenbasis of `A` ([`oracle`]).
//!
//! Units: hbar = 1 everywhere.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod nonselective;
pub mod oracle;
pub mod sampler;
pub mod selective;
pub mod types;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use types::{
    CMatrix, CVector, DensityMatrix, MeasurementSpec, Operator, Readout, StateVector, TimeGrid, C64,
};
