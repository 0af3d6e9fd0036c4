//! Approximate message passing (AMP) and iterative shrinkage/thresholding (IST)
//! for the linear model `y = A x + w`, together with the scalar MSE state
//! evolution that predicts AMP's per-iteration behaviour.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`] draws signals, sensing matrices and noise and assembles a
//!   [`model::ProblemInstance`].
//! - [`denoise`] holds the separable scalar denoisers and their derivatives.
//! - [`amp`] runs the iteration with either no correction (IST) or the
//!   Onsager correction (AMP).
//! - [`state_evolution`] evaluates the deterministic scalar recursion.
//! - [`stats`] aggregates trial trajectories and builds QQ / KS diagnostics.
//!
//! All random draws come from [`rng::StreamSeed`], which maps an
//! `(experiment seed, stream tag, trial index)` triple onto an independent
//! ChaCha stream so parallel trial execution stays bit-reproducible.

pub mod amp;
pub mod denoise;
mod error;
pub mod linalg;
pub mod model;
pub mod normal;
pub mod quadrature;
pub mod rng;
pub mod state_evolution;
pub mod stats;

pub use error::{Error, Result};
