//! Penalized reconstruction objectives and the ADAM-driven gradient search.
//!
//! The data term is always `‖y − A f(Bz)‖²`. With weight `λ ∈ [0, 1]` the
//! objectives are
//!
//! * `l1-latent`:      `λ‖y − A f(Bz)‖² + (1 − λ)‖z‖₁`
//! * `l2-latent`:      `λ‖y − A f(Bz)‖² + (1 − λ)‖z‖²`
//! * `reweighted-l1`:  `λ‖y − A f(Bz)‖² + (1 − λ)‖Wz‖₁` with diagonal `W`.
//!
//! [`ridge_baseline`] solves the ambient-space regularized least squares
//! `κ‖y − Ax‖² + (1 − κ)‖x‖²` in closed form.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::generative::{GenerativeMap, MixingMatrix};
use crate::numerics::{gaussian_vector, solve_spd, Matrix, RngStream};

/// Stabilizer in the reweighting rule `w_i = 1 / (|ẑ_i| + ε)`.
pub const REWEIGHT_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyKind {
    L1Latent,
    L2Latent,
    ReweightedL1,
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyKind::L1Latent => "l1-latent",
            PenaltyKind::L2Latent => "l2-latent",
            PenaltyKind::ReweightedL1 => "reweighted-l1",
        })
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1-latent" | "l1" => Ok(PenaltyKind::L1Latent),
            "l2-latent" | "l2" => Ok(PenaltyKind::L2Latent),
            "reweighted-l1" => Ok(PenaltyKind::ReweightedL1),
            other => Err(Error::InvalidArgument(format!("unknown penalty `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    kind: PenaltyKind,
    lambda: f64,
    weights: Option<Vec<f64>>,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "regularization weight must lie in [0, 1], got {lambda}"
        )))
    }
}

impl LossSpec {
    pub fn l1(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            kind: PenaltyKind::L1Latent,
            lambda,
            weights: None,
        })
    }

    pub fn l2(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            kind: PenaltyKind::L2Latent,
            lambda,
            weights: None,
        })
    }

    pub fn reweighted(beta: f64, weights: Vec<f64>) -> Result<Self> {
        check_lambda(beta)?;
        if let Some(i) = weights.iter().position(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "reweighting entry {i} must be finite and nonnegative"
            )));
        }
        Ok(Self {
            kind: PenaltyKind::ReweightedL1,
            lambda: beta,
            weights: Some(weights),
        })
    }

    pub fn new(kind: PenaltyKind, lambda: f64, latent_dim: usize) -> Result<Self> {
        match kind {
            PenaltyKind::L1Latent => Self::l1(lambda),
            PenaltyKind::L2Latent => Self::l2(lambda),
            PenaltyKind::ReweightedL1 => Self::reweighted(lambda, vec![1.0; latent_dim]),
        }
    }

    pub fn kind(&self) -> PenaltyKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    fn penalty(&self, z: &[f64]) -> f64 {
        match (&self.kind, &self.weights) {
            (PenaltyKind::L1Latent, _) => z.iter().map(|v| v.abs()).sum(),
            (PenaltyKind::L2Latent, _) => z.iter().map(|v| v * v).sum(),
            (PenaltyKind::ReweightedL1, Some(w)) => w.iter().zip(z).map(|(w, v)| w * v.abs()).sum(),
            (PenaltyKind::ReweightedL1, None) => unreachable!("reweighted spec without weights"),
        }
    }

    fn penalty_grad(&self, z: &[f64]) -> Vec<f64> {
        match (&self.kind, &self.weights) {
            (PenaltyKind::L1Latent, _) => z.iter().map(|&v| sign(v)).collect(),
            (PenaltyKind::L2Latent, _) => z.iter().map(|v| 2.0 * v).collect(),
            (PenaltyKind::ReweightedL1, Some(w)) => w.iter().zip(z).map(|(w, &v)| w * sign(v)).collect(),
            (PenaltyKind::ReweightedL1, None) => unreachable!("reweighted spec without weights"),
        }
    }
}

/// Subgradient convention with `sign(0) = 0`.
#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Everything the objective depends on besides `z` and the penalty.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub y: &'a [f64],
    pub a: &'a Matrix,
    pub model: &'a GenerativeMap,
    pub b: &'a MixingMatrix,
}

impl<'a> Problem<'a> {
    pub fn new(y: &'a [f64], a: &'a Matrix, model: &'a GenerativeMap, b: &'a MixingMatrix) -> Result<Self> {
        check_len("measurement length", a.rows(), y.len())?;
        check_len("sensing matrix columns", model.dim(), a.cols())?;
        check_len("mixing matrix rows", model.dim(), b.rows())?;
        Ok(Self { y, a, model, b })
    }

    pub fn latent_dim(&self) -> usize {
        self.b.cols()
    }

    fn check_latent(&self, z: &[f64]) -> Result<()> {
        check_len("latent length", self.latent_dim(), z.len())
    }
}

/// The two parts of an objective value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    /// `‖y − A f(Bz)‖²`.
    pub residual: f64,
    /// `‖z‖₁`, `‖z‖²` or `‖Wz‖₁`.
    pub penalty: f64,
    pub total: f64,
}

impl LossTerms {
    fn new(spec: &LossSpec, residual: f64, penalty: f64) -> Self {
        Self {
            residual,
            penalty,
            total: spec.lambda * residual + (1.0 - spec.lambda) * penalty,
        }
    }
}

pub fn loss_terms(spec: &LossSpec, problem: &Problem<'_>, z: &[f64]) -> Result<LossTerms> {
    problem.check_latent(z)?;
    check_weights(spec, z.len())?;
    let x = problem.model.forward(problem.b, z)?;
    let r = residual(problem, &x);
    Ok(LossTerms::new(spec, r.iter().map(|v| v * v).sum(), spec.penalty(z)))
}

pub fn loss_eval(spec: &LossSpec, problem: &Problem<'_>, z: &[f64]) -> Result<f64> {
    Ok(loss_terms(spec, problem, z)?.total)
}

pub fn loss_grad(spec: &LossSpec, problem: &Problem<'_>, z: &[f64]) -> Result<Vec<f64>> {
    Ok(loss_and_grad(spec, problem, z)?.1)
}

/// Objective value and its (sub)gradient from a single forward pass.
pub fn loss_and_grad(spec: &LossSpec, problem: &Problem<'_>, z: &[f64]) -> Result<(LossTerms, Vec<f64>)> {
    problem.check_latent(z)?;
    check_weights(spec, z.len())?;
    let v = problem.b.matrix().matvec(z)?;
    let trace = problem.model.trace(&v)?;
    // r = A f(Bz) − y
    let r = residual(problem, trace.output());
    let terms = LossTerms::new(spec, r.iter().map(|v| v * v).sum(), spec.penalty(z));
    let cotangent = problem.a.matvec_transpose(&r)?;
    let g_v = trace.pullback(&cotangent)?;
    let g_smooth = problem.b.matrix().matvec_transpose(&g_v)?;
    let g_pen = spec.penalty_grad(z);
    let lam = spec.lambda;
    let grad = g_smooth
        .iter()
        .zip(&g_pen)
        .map(|(s, p)| 2.0 * lam * s + (1.0 - lam) * p)
        .collect();
    Ok((terms, grad))
}

fn residual(problem: &Problem<'_>, x: &[f64]) -> Vec<f64> {
    let mut r = problem.a.matvec_unchecked(x);
    for (ri, yi) in r.iter_mut().zip(problem.y) {
        *ri -= yi;
    }
    r
}

fn check_weights(spec: &LossSpec, dim: usize) -> Result<()> {
    match spec.weights() {
        Some(w) => check_len("reweighting vector", dim, w.len()),
        None => Ok(()),
    }
}

/// First/second moment state of ADAM with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    pub fn new(dim: usize, learning_rate: f64) -> Self {
        Self {
            step: 0,
            first_moment: vec![0.0; dim],
            second_moment: vec![0.0; dim],
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }

    /// One update of `z` in place.
    pub fn step(&mut self, grad: &[f64], z: &mut [f64]) -> Result<()> {
        check_len("AdamState gradient", self.first_moment.len(), grad.len())?;
        check_len("AdamState iterate", self.first_moment.len(), z.len())?;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..z.len() {
            let g = grad[i];
            let m = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            z[i] -= self.learning_rate * (m / c1) / ((v / c2).sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(state: &AdamState, grad: &[f64], z: &[f64]) -> Result<(AdamState, Vec<f64>)> {
    let mut next = state.clone();
    let mut z_next = z.to_vec();
    next.step(grad, &mut z_next)?;
    Ok((next, z_next))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Relative loss change over `window` iterations that counts as converged.
    pub tol: f64,
    pub window: usize,
    /// Starting point; the origin when `None`.
    pub z0: Option<Vec<f64>>,
    /// Total starts; extra starts draw `z0 ~ N(0, 0.1 I)`.
    pub restarts: usize,
    pub restart_seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            max_iters: 5000,
            tol: 1e-7,
            window: 50,
            z0: None,
            restarts: 1,
            restart_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iter: usize,
    pub loss: f64,
    pub residual: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub z_hat: Vec<f64>,
    pub x_hat: Vec<f64>,
    /// Loss at every iterate, starting with `z0`. When the best iterate is
    /// not the last one, its loss is appended as the closing entry.
    pub trace: Vec<TracePoint>,
    pub best_iter: usize,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_ms: f64,
}

impl ReconstructionResult {
    pub fn initial_loss(&self) -> f64 {
        self.trace[0].loss
    }

    pub fn final_loss(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |p| p.loss)
    }

    pub fn losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.trace.iter().map(|p| p.loss)
    }

    /// Equality ignoring wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.z_hat == other.z_hat
            && self.x_hat == other.x_hat
            && self.trace == other.trace
            && self.best_iter == other.best_iter
            && self.iterations == other.iterations
            && self.converged == other.converged
    }
}

/// Runs ADAM on the objective and returns the lowest-loss iterate.
pub fn reconstruct(problem: &Problem<'_>, spec: &LossSpec, opts: &SolverOptions) -> Result<ReconstructionResult> {
    if opts.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    if !(opts.learning_rate > 0.0 && opts.learning_rate.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {}",
            opts.learning_rate
        )));
    }
    let started = Instant::now();
    let dim = problem.latent_dim();
    let first = match &opts.z0 {
        Some(z0) => {
            check_len("z0", dim, z0.len())?;
            z0.clone()
        }
        None => vec![0.0; dim],
    };
    let mut best = single_start(problem, spec, opts, first)?;
    for r in 1..opts.restarts.max(1) {
        let mut rng = RngStream::new(opts.restart_seed, r as u64);
        let z0 = gaussian_vector(dim, 0.1f64.sqrt(), &mut rng);
        let candidate = single_start(problem, spec, opts, z0)?;
        if candidate.final_loss() < best.final_loss() {
            best = candidate;
        }
    }
    best.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(best)
}

fn single_start(
    problem: &Problem<'_>,
    spec: &LossSpec,
    opts: &SolverOptions,
    mut z: Vec<f64>,
) -> Result<ReconstructionResult> {
    let mut adam = AdamState::new(z.len(), opts.learning_rate);
    let mut trace = Vec::with_capacity(opts.max_iters + 2);
    let mut best_z = z.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_iter = 0;
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..=opts.max_iters {
        let (terms, grad) = loss_and_grad(spec, problem, &z)?;
        if !terms.total.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: k });
        }
        trace.push(TracePoint {
            iter: k,
            loss: terms.total,
            residual: terms.residual,
            penalty: terms.penalty,
        });
        if terms.total < best_loss {
            best_loss = terms.total;
            best_z.clone_from(&z);
            best_iter = k;
        }
        if opts.window > 0 && k >= opts.window {
            let past = trace[k - opts.window].loss;
            let change = (past - terms.total).abs();
            if change <= opts.tol * past.abs() || (past == 0.0 && terms.total == 0.0) {
                converged = true;
                break;
            }
        }
        if k == opts.max_iters {
            break;
        }
        adam.step(&grad, &mut z)?;
        iterations += 1;
    }
    if best_iter + 1 != trace.len() {
        trace.push(trace[best_iter]);
    }
    let x_hat = problem.model.forward(problem.b, &best_z)?;
    Ok(ReconstructionResult {
        z_hat: best_z,
        x_hat,
        trace,
        best_iter,
        iterations,
        converged,
        wall_time_ms: 0.0,
    })
}

/// `w_i = 1 / (|z_i| + ε)`.
pub fn reweight(z: &[f64], epsilon: f64) -> Vec<f64> {
    z.iter().map(|v| 1.0 / (v.abs() + epsilon)).collect()
}

/// Outer loop over weighted ℓ1 problems, starting from `W = I` and
/// reweighting from each inner solution. Each inner run after the first
/// starts from the previous estimate.
pub fn reweighted_l1_reconstruct(
    problem: &Problem<'_>,
    beta: f64,
    opts: &SolverOptions,
    outer_iters: usize,
) -> Result<ReconstructionResult> {
    if outer_iters == 0 {
        return Err(Error::InvalidArgument("outer_iters must be at least 1".into()));
    }
    let mut weights = vec![1.0; problem.latent_dim()];
    let mut inner_opts = opts.clone();
    let mut result = None;
    for _ in 0..outer_iters {
        let spec = LossSpec::reweighted(beta, weights)?;
        let r = reconstruct(problem, &spec, &inner_opts)?;
        weights = reweight(&r.z_hat, REWEIGHT_EPSILON);
        inner_opts.z0 = Some(r.z_hat.clone());
        result = Some(r);
    }
    Ok(result.expect("at least one outer iteration"))
}

/// `x̂ = (κAᵀA + (1 − κ)I)⁻¹ κAᵀy`.
pub fn ridge_baseline(y: &[f64], a: &Matrix, kappa: f64) -> Result<Vec<f64>> {
    check_lambda(kappa)?;
    check_len("ridge measurements", a.rows(), y.len())?;
    if kappa == 1.0 && a.rows() < a.cols() {
        return Err(Error::InvalidArgument(format!(
            "unregularized ridge needs full column rank; A is {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let m = a.cols();
    let gram = a.transpose().matmul(a)?.scale(kappa);
    let system = gram.add(&Matrix::identity(m).scale(1.0 - kappa))?;
    let rhs: Vec<f64> = a.matvec_transpose(y)?.iter().map(|v| kappa * v).collect();
    solve_spd(&system, &rhs)
}
