//! Sparse latents, sensing matrices, noisy measurements and datasets.

use std::io::Write;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::generative::{GenerativeMap, MixingMatrix};
use crate::numerics::{gaussian_matrix, gaussian_vector, norm_sq, Matrix, RngStream};

/// A latent vector with exactly `support.len()` nonzero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLatent {
    pub z: Vec<f64>,
    /// Sorted ascending.
    pub support: Vec<usize>,
}

impl SparseLatent {
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }
}

/// Support uniform without replacement, nonzeros standard normal.
pub fn sample_sparse_latent(dim: usize, k: usize, rng: &mut RngStream) -> Result<SparseLatent> {
    if k > dim {
        return Err(Error::InvalidArgument(format!(
            "sparsity {k} exceeds latent dimension {dim}"
        )));
    }
    let mut support = index::sample(rng, dim, k).into_vec();
    support.sort_unstable();
    let mut z = vec![0.0; dim];
    for &i in &support {
        // A standard normal draw is zero with probability 0; redraw keeps ‖z‖₀ = K exact.
        let mut v = rng.standard_normal();
        while v == 0.0 {
            v = rng.standard_normal();
        }
        z[i] = v;
    }
    Ok(SparseLatent { z, support })
}

/// `n × m` sensing matrix with i.i.d. `N(0, 1/n)` entries.
pub fn build_sensing_matrix(n: usize, m: usize, rng: &mut RngStream) -> Result<Matrix> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "sensing matrix needs positive dimensions, got {n}x{m}"
        )));
    }
    gaussian_matrix(n, m, (1.0 / n as f64).sqrt(), rng)
}

/// Noise level of a measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Db(f64),
    Noiseless,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSetup {
    pub a: Matrix,
    pub snr: Snr,
    pub sigma: f64,
    pub y: Vec<f64>,
    /// `Ax` before noise.
    pub clean: Vec<f64>,
}

impl MeasurementSetup {
    pub fn measurements(&self) -> usize {
        self.a.rows()
    }
}

/// `y = Ax + noise` with `σ² = ‖Ax‖² / (n · 10^(snr/10))` for this realization.
pub fn measure(a: &Matrix, x: &[f64], snr: Snr, rng: &mut RngStream) -> Result<MeasurementSetup> {
    let clean = a.matvec(x)?;
    let n = clean.len();
    let sigma = match snr {
        Snr::Noiseless => 0.0,
        Snr::Db(db) => {
            if !db.is_finite() {
                return Err(Error::InvalidArgument(format!("snr must be finite, got {db}")));
            }
            let power = norm_sq(&clean);
            if power == 0.0 {
                return Err(Error::UndefinedSnr);
            }
            (power / (n as f64 * 10f64.powf(db / 10.0))).sqrt()
        }
    };
    let y = if sigma == 0.0 {
        clean.clone()
    } else {
        clean.iter().map(|v| v + sigma * rng.standard_normal()).collect()
    };
    Ok(MeasurementSetup {
        a: a.clone(),
        snr,
        sigma,
        y,
        clean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentKind {
    DenseGaussian,
    Sparse(usize),
}

impl LatentKind {
    pub fn label(&self) -> String {
        match self {
            LatentKind::DenseGaussian => "dense".into(),
            LatentKind::Sparse(k) => format!("sparse{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Datum {
    pub z: Vec<f64>,
    pub x: Vec<f64>,
}

pub fn generate_dataset(
    model: &GenerativeMap,
    b: &MixingMatrix,
    count: usize,
    kind: LatentKind,
    rng: &mut RngStream,
) -> Result<Vec<Datum>> {
    if count == 0 {
        return Err(Error::InvalidArgument("dataset size must be positive".into()));
    }
    let dim = b.cols();
    (0..count)
        .map(|_| {
            let z = match kind {
                LatentKind::DenseGaussian => gaussian_vector(dim, 1.0, rng),
                LatentKind::Sparse(k) => sample_sparse_latent(dim, k, rng)?.z,
            };
            let x = model.forward(b, &z)?;
            Ok(Datum { z, x })
        })
        .collect()
}

/// Writes `j,kind,z_0..z_{M-1},x_0..x_{m-1}` rows.
pub fn write_dataset_csv<W: Write>(out: &mut W, data: &[Datum], kind: LatentKind) -> std::io::Result<()> {
    let Some(first) = data.first() else {
        return Ok(());
    };
    let (zl, xl) = (first.z.len(), first.x.len());
    let mut header = vec!["j".to_string(), "kind".to_string()];
    header.extend((0..zl).map(|i| format!("z_{i}")));
    header.extend((0..xl).map(|i| format!("x_{i}")));
    writeln!(out, "{}", header.join(","))?;
    let label = kind.label();
    for (j, d) in data.iter().enumerate() {
        write!(out, "{j},{label}")?;
        for v in d.z.iter().chain(&d.x) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
