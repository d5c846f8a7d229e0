//! Normalized non-linearity measure (NNLM).
//!
//! A ridge-regularized LMMSE estimator `x̂ = G(z − μ_z) + μ_x` with
//! `G = C_xz (C_zz + λI)⁻¹` is fitted on pairs `(z, f(Bz))`, and the NNLM is
//! the residual energy `Σ‖x − x̂‖²` divided by the signal energy `Σ‖x‖²`.
//! Zero means the map is exactly affine in `z`.

use std::io::Write;

use crate::error::{check_len, Error, Result};
use crate::generative::{GenerativeMap, MixingMatrix};
use crate::numerics::{Cholesky, Matrix, RngStream};
use crate::sensing::{generate_dataset, Datum, LatentKind};

pub const CV_FOLDS: usize = 5;

/// Nine log-spaced values in `[1e-8, 1]`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..9).map(|i| 10f64.powf(-8.0 + i as f64)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmmseEstimator {
    pub gain: Matrix,
    pub mu_z: Vec<f64>,
    pub mu_x: Vec<f64>,
    pub lambda: f64,
}

/// Means and `1/J`-normalized covariances of a dataset.
struct Moments {
    mu_z: Vec<f64>,
    mu_x: Vec<f64>,
    c_zz: Matrix,
    c_xz: Matrix,
}

impl Moments {
    fn of(data: &[&Datum]) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "LMMSE fit needs at least 2 samples, got {}",
                data.len()
            )));
        }
        let mz = data[0].z.len();
        let mx = data[0].x.len();
        let inv = 1.0 / data.len() as f64;
        let mut mu_z = vec![0.0; mz];
        let mut mu_x = vec![0.0; mx];
        for d in data {
            check_len("datum z", mz, d.z.len())?;
            check_len("datum x", mx, d.x.len())?;
            mu_z.iter_mut().zip(&d.z).for_each(|(m, v)| *m += v);
            mu_x.iter_mut().zip(&d.x).for_each(|(m, v)| *m += v);
        }
        mu_z.iter_mut().for_each(|m| *m *= inv);
        mu_x.iter_mut().for_each(|m| *m *= inv);
        let mut zz = vec![0.0; mz * mz];
        let mut xz = vec![0.0; mx * mz];
        let mut zc = vec![0.0; mz];
        for d in data {
            for (c, (v, m)) in zc.iter_mut().zip(d.z.iter().zip(&mu_z)) {
                *c = v - m;
            }
            for i in 0..mz {
                let zi = zc[i];
                let row = &mut zz[i * mz..(i + 1) * mz];
                for (r, zj) in row.iter_mut().zip(&zc).skip(i) {
                    *r += zi * zj;
                }
            }
            for (i, (v, m)) in d.x.iter().zip(&mu_x).enumerate() {
                let xi = v - m;
                let row = &mut xz[i * mz..(i + 1) * mz];
                for (r, zj) in row.iter_mut().zip(&zc) {
                    *r += xi * zj;
                }
            }
        }
        for i in 0..mz {
            for j in i..mz {
                let v = zz[i * mz + j] * inv;
                zz[i * mz + j] = v;
                zz[j * mz + i] = v;
            }
        }
        xz.iter_mut().for_each(|v| *v *= inv);
        Ok(Self {
            mu_z,
            mu_x,
            c_zz: Matrix::from_vec(mz, mz, zz)?,
            c_xz: Matrix::from_vec(mx, mz, xz)?,
        })
    }

    fn estimator(&self, lambda: f64) -> Result<LmmseEstimator> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "LMMSE regularization must be positive, got {lambda}"
            )));
        }
        let mz = self.mu_z.len();
        let mut reg = self.c_zz.clone();
        for i in 0..mz {
            reg.set(i, i, reg.get(i, i) + lambda);
        }
        let chol = Cholesky::factor(&reg)?;
        // (C_zz + λI) Gᵀ = C_xzᵀ, one row of G per solve.
        let mut gain = Vec::with_capacity(self.c_xz.rows() * mz);
        for r in 0..self.c_xz.rows() {
            gain.extend(chol.solve(self.c_xz.row(r))?);
        }
        Ok(LmmseEstimator {
            gain: Matrix::from_vec(self.c_xz.rows(), mz, gain)?,
            mu_z: self.mu_z.clone(),
            mu_x: self.mu_x.clone(),
            lambda,
        })
    }
}

pub fn fit_lmmse(data: &[Datum], lambda: f64) -> Result<LmmseEstimator> {
    let refs: Vec<&Datum> = data.iter().collect();
    Moments::of(&refs)?.estimator(lambda)
}

impl LmmseEstimator {
    pub fn predict(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("LMMSE input", self.mu_z.len(), z.len())?;
        let centered: Vec<f64> = z.iter().zip(&self.mu_z).map(|(a, b)| a - b).collect();
        let mut x = self.gain.matvec_unchecked(&centered);
        x.iter_mut().zip(&self.mu_x).for_each(|(v, m)| *v += m);
        Ok(x)
    }

    /// `Σ‖x − x̂‖² / Σ‖x‖²` over `data`.
    pub fn nnlm<'a, I>(&self, data: I) -> Result<f64>
    where
        I: IntoIterator<Item = &'a Datum>,
    {
        let mut err = 0.0;
        let mut energy = 0.0;
        for d in data {
            let x_hat = self.predict(&d.z)?;
            check_len("LMMSE target", x_hat.len(), d.x.len())?;
            err += d.x.iter().zip(&x_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            energy += d.x.iter().map(|v| v * v).sum::<f64>();
        }
        if energy == 0.0 {
            return Err(Error::InvalidArgument("NNLM undefined for zero signal energy".into()));
        }
        Ok(err / energy)
    }
}

pub fn lmmse_predict(est: &LmmseEstimator, z: &[f64]) -> Result<Vec<f64>> {
    est.predict(z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnlmScore {
    pub train: f64,
    pub test: f64,
    pub lambda: f64,
}

/// Picks λ by `CV_FOLDS`-fold cross-validation on held-out NNLM. Near-ties
/// (within 1e-9 relative of the best) go to the earliest grid entry.
pub fn cross_validate_lambda(data: &[Datum], grid: &[f64]) -> Result<f64> {
    check_grid(grid)?;
    let folds = CV_FOLDS.min(data.len() / 2);
    if grid.len() == 1 || folds < 2 {
        return Ok(grid[0]);
    }
    let mut scores = vec![0.0; grid.len()];
    for f in 0..folds {
        let lo = f * data.len() / folds;
        let hi = (f + 1) * data.len() / folds;
        let fit: Vec<&Datum> = data[..lo].iter().chain(&data[hi..]).collect();
        let moments = Moments::of(&fit)?;
        for (s, &lambda) in scores.iter_mut().zip(grid) {
            *s += moments.estimator(lambda)?.nnlm(&data[lo..hi])?;
        }
    }
    let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let idx = scores.iter().position(|&s| s <= best * (1.0 + 1e-9)).unwrap_or(0);
    Ok(grid[idx])
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    if let Some(l) = grid.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "lambda grid entries must be positive, got {l}"
        )));
    }
    Ok(())
}

/// Train and held-out NNLM of `model` on dense Gaussian latents.
///
/// Training latents are the first `train_size` draws of `rng.derive(&[0])`
/// and test latents come from `rng.derive(&[1])`, so calls with growing
/// `train_size` and the same `rng` see nested training sets and one test set.
pub fn nnlm_score(
    model: &GenerativeMap,
    b: &MixingMatrix,
    train_size: usize,
    test_size: usize,
    grid: &[f64],
    rng: &RngStream,
) -> Result<NnlmScore> {
    if train_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "NNLM needs at least 2 training samples, got {train_size}"
        )));
    }
    check_grid(grid)?;
    let train = generate_dataset(model, b, train_size, LatentKind::DenseGaussian, &mut rng.derive(&[0]))?;
    let test = generate_dataset(model, b, test_size, LatentKind::DenseGaussian, &mut rng.derive(&[1]))?;
    score_datasets(&train, &test, grid)
}

/// NNLM of pre-generated train/test sets.
pub fn score_datasets(train: &[Datum], test: &[Datum], grid: &[f64]) -> Result<NnlmScore> {
    let lambda = cross_validate_lambda(train, grid)?;
    let est = fit_lmmse(train, lambda)?;
    Ok(NnlmScore {
        train: est.nnlm(train)?,
        test: est.nnlm(test)?,
        lambda,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlmReport {
    pub model_label: String,
    pub train_sizes: Vec<usize>,
    pub train_nnlm: Vec<f64>,
    pub test_nnlm: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl NnlmReport {
    /// `model,J,split,nnlm,lambda` rows without header.
    pub fn write_rows<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for i in 0..self.train_sizes.len() {
            let (j, l) = (self.train_sizes[i], self.lambdas[i]);
            writeln!(out, "{},{j},train,{},{l}", self.model_label, self.train_nnlm[i])?;
            writeln!(out, "{},{j},test,{},{l}", self.model_label, self.test_nnlm[i])?;
        }
        Ok(())
    }
}

pub const NNLM_CSV_HEADER: &str = "model,J,split,nnlm,lambda";

pub fn nnlm_curve(
    model: &GenerativeMap,
    b: &MixingMatrix,
    label: &str,
    train_sizes: &[usize],
    test_size: usize,
    grid: &[f64],
    rng: &RngStream,
) -> Result<NnlmReport> {
    if train_sizes.is_empty() {
        return Err(Error::InvalidArgument("no training sizes given".into()));
    }
    if train_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("training sizes must be increasing".into()));
    }
    check_grid(grid)?;
    let largest = *train_sizes.last().expect("non-empty");
    let full = generate_dataset(
        model,
        b,
        largest.max(2),
        LatentKind::DenseGaussian,
        &mut rng.derive(&[0]),
    )?;
    let test = generate_dataset(model, b, test_size, LatentKind::DenseGaussian, &mut rng.derive(&[1]))?;
    let mut report = NnlmReport {
        model_label: label.to_string(),
        train_sizes: train_sizes.to_vec(),
        train_nnlm: Vec::new(),
        test_nnlm: Vec::new(),
        lambdas: Vec::new(),
    };
    for &j in train_sizes {
        if j < 2 {
            return Err(Error::InvalidArgument(format!(
                "NNLM needs at least 2 training samples, got {j}"
            )));
        }
        let s = score_datasets(&full[..j], &test, grid)?;
        report.train_nnlm.push(s.train);
        report.test_nnlm.push(s.test);
        report.lambdas.push(s.lambda);
    }
    Ok(report)
}
