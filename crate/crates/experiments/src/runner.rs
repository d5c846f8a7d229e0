//! Grid execution.
//!
//! Each model's parameters and mixing matrix come from the stream
//! `(seed, mix(MODEL_STREAM, [model]))`, so every study with the same seed
//! sees the same generative maps. Each trial's latent, sensing matrix and
//! noise come from `(seed, mix(study, [model, alpha, trial]))`; all λ values
//! and penalties of one trial reuse that instance.

use std::time::Instant;

use gsl_core::metrics::{asce, srnr};
use gsl_core::nnlm::{nnlm_curve, NnlmReport};
use gsl_core::numerics::{mix_stream_id, norm_sq};
use gsl_core::reconstruct::{
    reconstruct, reweighted_l1_reconstruct, LossSpec, PenaltyKind, Problem, ReconstructionResult,
};
use gsl_core::sensing::{build_sensing_matrix, measure, sample_sparse_latent, Snr};
use gsl_core::{GenerativeMap, MixingMatrix, RngStream};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Study};
use crate::error::{Error, Result};

const MODEL_STREAM: u64 = 0x006d_6f64_656c; // "model"

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub study: Study,
    pub model_label: String,
    pub alpha: f64,
    pub lambda: f64,
    pub penalty: PenaltyKind,
    pub trial: usize,
    pub seed: u64,
    pub srnr_db: f64,
    pub asce: f64,
    pub iterations: usize,
    pub final_loss: f64,
    pub runtime_ms: f64,
    /// `‖x‖²` and `‖x − x̂‖²`, so pooled SRNR can be recomputed from rows.
    pub signal_energy: f64,
    pub error_energy: f64,
    pub(crate) key: [usize; 5],
}

impl ResultRow {
    /// `(model, alpha, lambda, penalty, trial)` grid indices.
    pub fn grid_key(&self) -> [usize; 5] {
        self.key
    }
}

pub struct BuiltModel {
    pub map: GenerativeMap,
    pub mixing: MixingMatrix,
}

pub fn build_models(config: &ExperimentConfig) -> Result<Vec<BuiltModel>> {
    config
        .models
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            let mut rng = RngStream::new(config.seed, mix_stream_id(MODEL_STREAM, &[i as u64]));
            let map = GenerativeMap::build(&entry.spec(config.m), &mut rng)?;
            let mixing = MixingMatrix::random(config.m, config.latent_dim, &mut rng)?;
            Ok(BuiltModel { map, mixing })
        })
        .collect()
}

/// One noisy GSL measurement instance.
pub struct Instance {
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    pub a: gsl_core::Matrix,
    pub y: Vec<f64>,
    pub restart_seed: u64,
}

pub fn trial_stream(config: &ExperimentConfig, study: Study, model: usize, alpha: usize, trial: usize) -> RngStream {
    RngStream::new(
        config.seed,
        mix_stream_id(study.tag(), &[model as u64, alpha as u64, trial as u64]),
    )
}

pub fn draw_instance(
    config: &ExperimentConfig,
    model: &BuiltModel,
    alpha: f64,
    stream: &RngStream,
) -> Result<Instance> {
    let z = sample_sparse_latent(config.latent_dim, config.sparsity, &mut stream.derive(&[0]))?.z;
    let x = model.map.forward(&model.mixing, &z)?;
    let a = build_sensing_matrix(config.measurements(alpha), config.m, &mut stream.derive(&[1]))?;
    let snr = config.snr_db.map_or(Snr::Noiseless, Snr::Db);
    let y = measure(&a, &x, snr, &mut stream.derive(&[2]))?.y;
    Ok(Instance {
        z,
        x,
        a,
        y,
        restart_seed: stream.derive(&[3]).stream_id(),
    })
}

fn solve(
    config: &ExperimentConfig,
    model: &BuiltModel,
    inst: &Instance,
    penalty: PenaltyKind,
    lambda: f64,
) -> Result<ReconstructionResult> {
    let problem = Problem::new(&inst.y, &inst.a, &model.map, &model.mixing)?;
    let opts = config.solver_opts.options(inst.restart_seed);
    if penalty == PenaltyKind::ReweightedL1 {
        let passes = config.solver_opts.reweight_passes;
        return Ok(reweighted_l1_reconstruct(&problem, lambda, &opts, passes)?);
    }
    let spec = LossSpec::new(penalty, lambda, config.latent_dim)?;
    Ok(reconstruct(&problem, &spec, &opts)?)
}

fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Pool(e.to_string()))
}

/// Runs a `lambda-sweep` or `comparison` grid. Rows come back sorted by
/// `(model, alpha, lambda, penalty, trial)` whatever the worker count.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<Vec<ResultRow>> {
    config.validate()?;
    if !matches!(config.study, Study::LambdaSweep | Study::Comparison) {
        return Err(Error::InvalidConfig(vec![format!(
            "study: run_experiment handles lambda-sweep and comparison, got {}",
            config.study
        )]));
    }
    let models = build_models(config)?;
    let units: Vec<(usize, usize, usize)> = (0..models.len())
        .flat_map(|m| (0..config.alpha_grid.len()).flat_map(move |a| (0..config.trials).map(move |t| (m, a, t))))
        .collect();
    let pool = worker_pool(workers)?;
    let chunks: Vec<Vec<ResultRow>> = pool.install(|| {
        units
            .par_iter()
            .map(|&(mi, ai, trial)| run_unit(config, &models, mi, ai, trial))
            .collect::<Result<_>>()
    })?;
    let mut rows: Vec<ResultRow> = chunks.into_iter().flatten().collect();
    rows.sort_by_key(|r| r.key);
    Ok(rows)
}

fn run_unit(
    config: &ExperimentConfig,
    models: &[BuiltModel],
    mi: usize,
    ai: usize,
    trial: usize,
) -> Result<Vec<ResultRow>> {
    let model = &models[mi];
    let alpha = config.alpha_grid[ai];
    let stream = trial_stream(config, config.study, mi, ai, trial);
    let inst = draw_instance(config, model, alpha, &stream)?;
    let mut rows = Vec::with_capacity(config.lambda_grid.len() * config.penalties.len());
    for (li, &lambda) in config.lambda_grid.iter().enumerate() {
        for (pi, &penalty) in config.penalties.iter().enumerate() {
            let started = Instant::now();
            let res = solve(config, model, &inst, penalty, lambda)?;
            let elapsed = started.elapsed().as_secs_f64() * 1e3;
            let signal_energy = norm_sq(&inst.x);
            let error_energy: f64 = inst.x.iter().zip(&res.x_hat).map(|(a, b)| (a - b).powi(2)).sum();
            rows.push(ResultRow {
                study: config.study,
                model_label: config.models[mi].label.clone(),
                alpha,
                lambda,
                penalty,
                trial,
                seed: config.seed,
                srnr_db: srnr([(inst.x.as_slice(), res.x_hat.as_slice())])?,
                asce: asce([(inst.z.as_slice(), res.z_hat.as_slice())], config.sparsity)?,
                iterations: res.iterations,
                final_loss: res.final_loss(),
                runtime_ms: if config.record_runtime { elapsed } else { 0.0 },
                signal_energy,
                error_energy,
                key: [mi, ai, li, pi, trial],
            });
        }
    }
    Ok(rows)
}

/// NNLM train/test curves, one report per model.
pub fn run_nnlm(config: &ExperimentConfig, workers: usize) -> Result<Vec<NnlmReport>> {
    config.validate()?;
    let settings = config.nnlm_settings();
    let models = build_models(config)?;
    let pool = worker_pool(workers)?;
    pool.install(|| {
        models
            .par_iter()
            .enumerate()
            .map(|(i, model)| {
                let rng = RngStream::new(config.seed, mix_stream_id(Study::Nnlm.tag(), &[i as u64]));
                Ok(nnlm_curve(
                    &model.map,
                    &model.mixing,
                    &config.models[i].label,
                    &settings.train_sizes,
                    settings.test_size,
                    &settings.lambda_grid,
                    &rng,
                )?)
            })
            .collect()
    })
}

/// A single reconstruction with everything needed to plot it.
pub struct Showcase {
    pub model_label: String,
    pub alpha: f64,
    pub lambda: f64,
    pub penalty: PenaltyKind,
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub result: ReconstructionResult,
    pub srnr_db: f64,
    pub asce: f64,
}

/// Reconstructs one instance with the first model and first penalty.
pub fn run_showcase(config: &ExperimentConfig, alpha: f64, lambda: f64) -> Result<Showcase> {
    config.validate()?;
    let mut problems = Vec::new();
    if !(alpha > 0.0 && alpha <= 1.0) {
        problems.push(format!("--alpha: {alpha} is outside (0, 1]"));
    }
    if !(0.0..=1.0).contains(&lambda) {
        problems.push(format!("--lambda: {lambda} is outside [0, 1]"));
    }
    if !problems.is_empty() {
        return Err(Error::InvalidConfig(problems));
    }
    let models = build_models(config)?;
    let model = &models[0];
    let stream = trial_stream(config, Study::Showcase, 0, 0, 0);
    let inst = draw_instance(config, model, alpha, &stream)?;
    let penalty = config.penalties[0];
    let result = solve(config, model, &inst, penalty, lambda)?;
    let y_hat = inst.a.matvec(&result.x_hat)?;
    Ok(Showcase {
        model_label: config.models[0].label.clone(),
        alpha,
        lambda,
        penalty,
        srnr_db: srnr([(inst.x.as_slice(), result.x_hat.as_slice())])?,
        asce: asce([(inst.z.as_slice(), result.z_hat.as_slice())], config.sparsity)?,
        z: inst.z,
        x: inst.x,
        y: inst.y,
        y_hat,
        result,
    })
}
