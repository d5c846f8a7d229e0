//! Configuration-driven experiments for generative sparse-latent
//! compressed sensing: NNLM curves, λ sweeps, penalty comparisons and a
//! single-run showcase, written out as CSV and SVG.

pub mod config;
pub mod error;
pub mod output;
pub mod plot;
pub mod runner;

pub use config::{ExperimentConfig, ModelEntry, SolverConfig, Study};
pub use error::{Error, Result};
pub use runner::{run_experiment, run_nnlm, run_showcase, ResultRow};
