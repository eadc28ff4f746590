//! Numerical toolkit for the multi-scale Sherrington-Kirkpatrick model:
//! cascade sampling, the Parisi functional, finite-N pressure estimators
//! and the variational bound.

pub mod cli;
pub mod error;
pub mod model;
pub mod optimize;
pub mod parisi;
pub mod quadrature;
pub mod rng;
pub mod rpc;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use model::{ModelParams, PressureEstimate};
