//! Spectral-Galerkin simulation of the two-dimensional stochastic primitive
//! equations with small multiplicative noise, together with the verification
//! machinery for their small-noise asymptotics: strong deviation bounds, the
//! central limit correction, controlled/skeleton convergence, and the
//! moderate-deviation rate function for linear terminal constraints.
//!
//! Every capability has a runnable program under `examples/`; the `primeq`
//! binary exposes the same entry points driven by a flat config file.

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod noise;
pub mod operators;
pub mod rate;
pub mod spectral;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
