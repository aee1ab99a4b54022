//! Sequential implicit two-phase flow with flux-reordered transport solvers.

pub mod config;
pub mod dgbasis;
pub mod driver;
pub mod error;
pub mod fluxgraph;
pub mod linalg;
pub mod mesh;
pub mod output;
pub mod petro;
pub mod pressure;
pub mod transport;
pub mod units;

pub use error::{Error, Result};
