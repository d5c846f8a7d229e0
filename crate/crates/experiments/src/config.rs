//! Experiment manifests.
//!
//! A manifest is a TOML file whose keys mirror [`ExperimentConfig`]:
//!
//! ```toml
//! study = "comparison"        # nnlm | lambda-sweep | comparison | showcase
//! seed = 2023
//! m = 100                     # ambient dimension
//! M = 100                     # latent dimension
//! K = 10                      # sparsity
//! snr_db = 30.0               # omit for noiseless measurements
//! alpha-grid = [0.3, 0.5]
//! lambda-grid = [0.1, 0.5, 0.9, 0.99, 1.0]
//! penalties = ["l1-latent", "l2-latent"]
//! trials = 50
//! output-dir = "results/comparison"
//!
//! [solver-opts]
//! eta = 0.01
//! max-iters = 5000
//! tol = 1e-7
//!
//! [[models]]
//! label = "rnvp-4"
//! kind = "rnvp"
//! coupling_layers = 4
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use gsl_core::reconstruct::{PenaltyKind, SolverOptions};
use gsl_core::{Activation, ModelKind, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Nnlm,
    LambdaSweep,
    Comparison,
    Showcase,
}

impl Study {
    pub fn tag(self) -> u64 {
        match self {
            Study::Nnlm => 1,
            Study::LambdaSweep => 2,
            Study::Comparison => 3,
            Study::Showcase => 4,
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Study::Nnlm => "nnlm",
            Study::LambdaSweep => "lambda-sweep",
            Study::Comparison => "comparison",
            Study::Showcase => "showcase",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub label: String,
    pub kind: ModelKind,
    #[serde(default)]
    pub coupling_layers: usize,
    #[serde(default)]
    pub activation: Option<Activation>,
}

impl ModelEntry {
    pub fn spec(&self, dim: usize) -> ModelSpec {
        ModelSpec {
            kind: self.kind,
            dim,
            coupling_layers: self.coupling_layers,
            activation: self.activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Outer reweighting passes for the `reweighted-l1` penalty.
    #[serde(default = "default_reweight_passes")]
    pub reweight_passes: usize,
}

fn default_eta() -> f64 {
    1e-2
}
fn default_max_iters() -> usize {
    5000
}
fn default_tol() -> f64 {
    1e-7
}
fn default_window() -> usize {
    50
}
fn default_restarts() -> usize {
    1
}
fn default_reweight_passes() -> usize {
    3
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta: default_eta(),
            max_iters: default_max_iters(),
            tol: default_tol(),
            window: default_window(),
            restarts: default_restarts(),
            reweight_passes: default_reweight_passes(),
        }
    }
}

impl SolverConfig {
    pub fn options(&self, restart_seed: u64) -> SolverOptions {
        SolverOptions {
            learning_rate: self.eta,
            max_iters: self.max_iters,
            tol: self.tol,
            window: self.window,
            z0: None,
            restarts: self.restarts,
            restart_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct NnlmConfig {
    pub train_sizes: Vec<usize>,
    pub test_size: usize,
    #[serde(default = "gsl_core::nnlm::default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
}

impl Default for NnlmConfig {
    fn default() -> Self {
        Self {
            train_sizes: vec![256, 512, 1024, 2048, 4096],
            test_size: 1024,
            lambda_grid: gsl_core::nnlm::default_lambda_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: Study,
    pub models: Vec<ModelEntry>,
    pub m: usize,
    #[serde(rename = "M")]
    pub latent_dim: usize,
    #[serde(rename = "K")]
    pub sparsity: usize,
    /// `None` means noiseless measurements.
    #[serde(default, rename = "snr_db")]
    pub snr_db: Option<f64>,
    pub alpha_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_penalties")]
    pub penalties: Vec<PenaltyKind>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub solver_opts: SolverConfig,
    #[serde(default)]
    pub nnlm: Option<NnlmConfig>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Write measured wall time into `runtime_ms`; off keeps results.csv
    /// byte-reproducible.
    #[serde(default)]
    pub record_runtime: bool,
}

fn default_penalties() -> Vec<PenaltyKind> {
    vec![PenaltyKind::L1Latent]
}
fn default_trials() -> usize {
    50
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The setting of the synthetic studies: `m = M = 100`, `K = 10`, 30 dB,
    /// `α ∈ {0.1, …, 0.9}`, `λ ∈ {0.1, 0.5, 0.9, 0.99, 1.0}`, 50 trials.
    pub fn default_protocol(study: Study) -> Self {
        let rnvp = |n_c: usize| ModelEntry {
            label: format!("rnvp-{n_c}"),
            kind: ModelKind::Rnvp,
            coupling_layers: n_c,
            activation: None,
        };
        let gauss = ModelEntry {
            label: "gauss-cdf".into(),
            kind: ModelKind::GaussCdf,
            coupling_layers: 0,
            activation: None,
        };
        let models = match study {
            Study::LambdaSweep | Study::Showcase => vec![rnvp(4)],
            Study::Comparison | Study::Nnlm => vec![gauss, rnvp(4), rnvp(8)],
        };
        let penalties = match study {
            Study::Comparison => vec![PenaltyKind::L1Latent, PenaltyKind::L2Latent],
            _ => vec![PenaltyKind::L1Latent],
        };
        Self {
            study,
            models,
            m: 100,
            latent_dim: 100,
            sparsity: 10,
            snr_db: Some(30.0),
            alpha_grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
            lambda_grid: vec![0.1, 0.5, 0.9, 0.99, 1.0],
            penalties,
            trials: 50,
            seed: 2023,
            solver_opts: SolverConfig::default(),
            nnlm: (study == Study::Nnlm).then(NnlmConfig::default),
            output_dir: PathBuf::from(format!("results/{study}")),
            record_runtime: false,
        }
    }

    pub fn nnlm_settings(&self) -> NnlmConfig {
        self.nnlm.clone().unwrap_or_default()
    }

    /// Measurements for a sub-sampling ratio, `round(α m)` and at least 1.
    pub fn measurements(&self, alpha: f64) -> usize {
        ((alpha * self.m as f64).round() as usize).max(1)
    }

    /// Every violated constraint, or `Ok` when there is none.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.models.is_empty() {
            problems.push("models: at least one model is required".to_string());
        }
        if self.m == 0 {
            problems.push("m: must be positive".into());
        }
        if self.latent_dim == 0 {
            problems.push("M: must be positive".into());
        }
        if self.sparsity > self.latent_dim {
            problems.push(format!("K: {} exceeds M = {}", self.sparsity, self.latent_dim));
        }
        if self.sparsity == 0 && self.study != Study::Nnlm {
            problems.push("K: must be at least 1 for reconstruction studies".into());
        }
        if let Some(s) = self.snr_db {
            if !s.is_finite() {
                problems.push(format!("snr_db: must be finite, got {s}"));
            }
        }
        if self.alpha_grid.is_empty() {
            problems.push("alpha-grid: must not be empty".into());
        }
        for a in &self.alpha_grid {
            if !(*a > 0.0 && *a <= 1.0) {
                problems.push(format!("alpha-grid: {a} is outside (0, 1]"));
            }
        }
        if self.lambda_grid.is_empty() {
            problems.push("lambda-grid: must not be empty".into());
        }
        for l in &self.lambda_grid {
            if !(0.0..=1.0).contains(l) {
                problems.push(format!("lambda-grid: {l} is outside [0, 1]"));
            }
        }
        if self.penalties.is_empty() {
            problems.push("penalties: must not be empty".into());
        }
        if self.trials == 0 {
            problems.push("trials: must be at least 1".into());
        }
        let s = &self.solver_opts;
        if !(s.eta > 0.0 && s.eta.is_finite()) {
            problems.push(format!("solver-opts.eta: must be positive, got {}", s.eta));
        }
        if s.max_iters == 0 {
            problems.push("solver-opts.max-iters: must be at least 1".into());
        }
        if s.tol.is_nan() || s.tol < 0.0 {
            problems.push(format!("solver-opts.tol: must be nonnegative, got {}", s.tol));
        }
        if s.restarts == 0 {
            problems.push("solver-opts.restarts: must be at least 1".into());
        }
        if s.reweight_passes == 0 {
            problems.push("solver-opts.reweight-passes: must be at least 1".into());
        }
        for (i, model) in self.models.iter().enumerate() {
            match model.kind {
                ModelKind::Rnvp => {
                    if model.coupling_layers == 0 {
                        problems.push(format!("models[{i}].coupling_layers: rnvp needs at least 1"));
                    }
                    if !self.m.is_multiple_of(2) {
                        problems.push(format!("models[{i}]: rnvp needs an even m, got {}", self.m));
                    }
                    if self.m != self.latent_dim {
                        problems.push(format!(
                            "models[{i}]: rnvp needs m = M, got m = {} and M = {}",
                            self.m, self.latent_dim
                        ));
                    }
                }
                ModelKind::OneLayer if model.activation.is_none() => {
                    problems.push(format!("models[{i}].activation: one-layer needs an activation"));
                }
                _ => {}
            }
            if self.models[..i].iter().any(|o| o.label == model.label) {
                problems.push(format!("models[{i}].label: duplicate label `{}`", model.label));
            }
        }
        if self.study == Study::Nnlm {
            let n = self.nnlm_settings();
            if n.train_sizes.is_empty() {
                problems.push("nnlm.train-sizes: must not be empty".into());
            }
            if n.train_sizes.iter().any(|j| *j < 2) {
                problems.push("nnlm.train-sizes: every size must be at least 2".into());
            }
            if n.train_sizes.windows(2).any(|w| w[0] >= w[1]) {
                problems.push("nnlm.train-sizes: must be strictly increasing".into());
            }
            if n.test_size == 0 {
                problems.push("nnlm.test-size: must be positive".into());
            }
            if n.lambda_grid.is_empty() || n.lambda_grid.iter().any(|l| l.is_nan() || *l <= 0.0) {
                problems.push("nnlm.lambda-grid: must be non-empty and positive".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_protocol_is_valid_and_round_trips() {
        for study in [Study::Nnlm, Study::LambdaSweep, Study::Comparison, Study::Showcase] {
            let c = ExperimentConfig::default_protocol(study);
            c.validate().unwrap();
            let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn documented_example_parses() {
        let text = r#"
            study = "comparison"
            seed = 2023
            m = 100
            M = 100
            K = 10
            snr_db = 30.0
            alpha-grid = [0.3, 0.5]
            lambda-grid = [0.1, 0.5, 0.9, 0.99, 1.0]
            penalties = ["l1-latent", "l2-latent"]
            trials = 50
            output-dir = "results/comparison"

            [solver-opts]
            eta = 0.01
            max-iters = 5000
            tol = 1e-7

            [[models]]
            label = "rnvp-4"
            kind = "rnvp"
            coupling_layers = 4
        "#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.penalties, vec![PenaltyKind::L1Latent, PenaltyKind::L2Latent]);
        assert_eq!(c.solver_opts.window, 50);
        assert_eq!(c.measurements(0.3), 30);
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut c = ExperimentConfig::default_protocol(Study::Comparison);
        c.sparsity = 200;
        c.trials = 0;
        c.alpha_grid = vec![1.5];
        c.lambda_grid.clear();
        match c.validate() {
            Err(Error::InvalidConfig(p)) => {
                assert_eq!(p.len(), 4, "{p:?}");
                assert!(p[0].starts_with("K:"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_and_kinds_are_rejected() {
        let base = ExperimentConfig::default_protocol(Study::Showcase).to_toml();
        assert!(ExperimentConfig::from_toml(&format!("bogus = 1\n{base}")).is_err());
        let bad_kind = base.replace("kind = \"rnvp\"", "kind = \"glow\"");
        assert!(ExperimentConfig::from_toml(&bad_kind).is_err());
    }

    #[test]
    fn rnvp_needs_square_even_setting() {
        let mut c = ExperimentConfig::default_protocol(Study::LambdaSweep);
        c.m = 99;
        c.latent_dim = 99;
        assert!(c.validate().is_err());
    }
}
