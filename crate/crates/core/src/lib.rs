//! Steady-state transport in a driven chiral chain of two-level emitters
//! coupled to a waveguide, in the weak-drive single-excitation limit.
//!
//! - [`model`]: geometry, couplings and the interaction matrix V
//! - [`dynamics`]: amplitude evolution and the linear steady state
//! - [`transport`]: the left/right population metric, sweeps, disorder ensembles
//! - [`lindblad`]: full master equation for small chains, used as a reference
//! - [`config`], [`output`], [`run`]: configuration and result files

// Negated comparisons are used on purpose so that NaN fails checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod lindblad;
pub mod model;
pub mod ode;
pub mod output;
pub mod rng;
pub mod run;
pub mod transport;

pub use error::{Error, Result};
