//! Reconstruction quality: SRNR in decibels and average support
//! cardinality error.

use crate::error::{check_len, Error, Result};
use crate::numerics::norm_sq;

/// SRNR reported when every reconstruction is exact.
pub const SRNR_CAP_DB: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub srnr_db: f64,
    pub asce: f64,
    pub trials: usize,
}

/// `10 log10(mean ‖x‖² / mean ‖x − x̂‖²)`, capped at [`SRNR_CAP_DB`].
pub fn srnr<'a, I>(pairs: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    let mut signal = 0.0;
    let mut error = 0.0;
    let mut count = 0usize;
    for (x, x_hat) in pairs {
        check_len("srnr pair", x.len(), x_hat.len())?;
        signal += norm_sq(x);
        error += x.iter().zip(x_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidArgument("srnr of an empty set".into()));
    }
    if error == 0.0 {
        return Ok(SRNR_CAP_DB);
    }
    // Both sums carry the same 1/count factor.
    Ok((10.0 * (signal / error).log10()).min(SRNR_CAP_DB))
}

/// Indices of the `k` largest magnitudes, ties to the lower index, sorted.
pub fn topk_support(z: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > z.len() {
        return Err(Error::InvalidArgument(format!(
            "support size {k} out of range 1..={}",
            z.len()
        )));
    }
    let mut idx: Vec<usize> = (0..z.len()).collect();
    idx.sort_by(|&i, &j| z[j].abs().total_cmp(&z[i].abs()).then(i.cmp(&j)));
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx)
}

/// `1 − mean |S_z ∩ S_ẑ| / K` over pairs.
pub fn asce<'a, I>(pairs: I, k: usize) -> Result<f64>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    let mut overlap = 0usize;
    let mut count = 0usize;
    for (z, z_hat) in pairs {
        check_len("asce pair", z.len(), z_hat.len())?;
        let s = topk_support(z, k)?;
        let s_hat = topk_support(z_hat, k)?;
        overlap += s.iter().filter(|i| s_hat.binary_search(i).is_ok()).count();
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidArgument("asce of an empty set".into()));
    }
    Ok(1.0 - overlap as f64 / (k * count) as f64)
}
