//! Two-qubit Molmer-Sorensen gate design beyond the Lamb-Dicke regime.

pub mod cli;
pub mod config;
pub mod constants;
pub mod error;
pub mod gate_analytics;
pub mod ion_chain;
pub mod manifest;
pub mod pulse_basis;
pub mod pulse_solver;
pub mod quadrature;
pub mod scan;
pub mod special;
pub mod tdse;

pub use error::{Error, Result};
