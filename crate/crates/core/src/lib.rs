//! Discrete dynamic Bayesian networks that fuse facial action unit
//! measurements with phoneme measurements.
//!
//! The crate covers structure learning (K2 for the intra-slice graph, BIC
//! hill climbing for transitions), maximum-likelihood parameters, exact
//! filtering and smoothing, phoneme alignment discretization, a synthetic
//! corpus generator and leave-one-subject-out evaluation.

pub mod alignment;
pub mod cli;
pub mod data;
pub mod eval;
pub mod error;
mod factor;
pub mod infer;
pub mod io;
pub mod model;
pub mod params;
pub mod presets;
pub mod sim;
pub mod structure;

pub use error::{Error, Result};
pub use infer::Engine;
pub use model::NetworkSpec;
