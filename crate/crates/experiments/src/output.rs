//! CSV writers for raw rows, aggregates, NNLM curves and showcase traces.
//!
//! Floats are printed with Rust's shortest round-trip formatting, so
//! parsing a value back yields the exact bits that were written.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gsl_core::metrics::SRNR_CAP_DB;
use gsl_core::nnlm::{NnlmReport, NNLM_CSV_HEADER};
use gsl_core::reconstruct::PenaltyKind;

use crate::config::Study;
use crate::error::{Error, Result};
use crate::runner::{ResultRow, Showcase};

pub const RESULTS_HEADER: &str = "study,model,alpha,lambda,penalty,trial,seed,srnr_db,asce,iterations,final_loss,runtime_ms,signal_energy,error_energy";

pub const AGGREGATE_HEADER: &str =
    "study,model,alpha,lambda,penalty,trials,pooled_srnr_db,mean_srnr_db,mean_asce,mean_iterations,mean_final_loss";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(io_err(path))
}

pub fn write_results<W: Write>(out: &mut W, rows: &[ResultRow]) -> std::io::Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.study,
            r.model_label,
            r.alpha,
            r.lambda,
            r.penalty,
            r.trial,
            r.seed,
            r.srnr_db,
            r.asce,
            r.iterations,
            r.final_loss,
            r.runtime_ms,
            r.signal_energy,
            r.error_energy
        )?;
    }
    Ok(())
}

/// Summary of the trials sharing one `(model, alpha, lambda, penalty)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub study: Study,
    pub model_label: String,
    pub alpha: f64,
    pub lambda: f64,
    pub penalty: PenaltyKind,
    pub trials: usize,
    /// `10 log10(Σ‖x‖² / Σ‖x − x̂‖²)` over the cell's trials.
    pub pooled_srnr_db: f64,
    pub mean_srnr_db: f64,
    pub mean_asce: f64,
    pub mean_iterations: f64,
    pub mean_final_loss: f64,
}

fn pooled_srnr(signal: f64, error: f64) -> f64 {
    if error == 0.0 {
        SRNR_CAP_DB
    } else {
        (10.0 * (signal / error).log10()).min(SRNR_CAP_DB)
    }
}

/// One row per grid cell, in grid order.
pub fn aggregate_cells(rows: &[ResultRow]) -> Result<Vec<AggregateRow>> {
    Ok(keyed_cells(rows)?.into_iter().map(|(_, c)| c).collect())
}

fn keyed_cells(rows: &[ResultRow]) -> Result<Vec<([usize; 4], AggregateRow)>> {
    if rows.is_empty() {
        return Err(Error::Empty("result rows"));
    }
    let mut cells: BTreeMap<[usize; 4], Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let k = r.grid_key();
        cells.entry([k[0], k[1], k[2], k[3]]).or_default().push(r);
    }
    Ok(cells
        .into_iter()
        .map(|(key, cell)| {
            let n = cell.len() as f64;
            let mean = |f: fn(&ResultRow) -> f64| cell.iter().map(|r| f(r)).sum::<f64>() / n;
            let first = cell[0];
            let row = AggregateRow {
                study: first.study,
                model_label: first.model_label.clone(),
                alpha: first.alpha,
                lambda: first.lambda,
                penalty: first.penalty,
                trials: cell.len(),
                pooled_srnr_db: pooled_srnr(
                    cell.iter().map(|r| r.signal_energy).sum(),
                    cell.iter().map(|r| r.error_energy).sum(),
                ),
                mean_srnr_db: mean(|r| r.srnr_db),
                mean_asce: mean(|r| r.asce),
                mean_iterations: mean(|r| r.iterations as f64),
                mean_final_loss: mean(|r| r.final_loss),
            };
            (key, row)
        })
        .collect())
}

/// For each `(model, alpha, penalty)`, the λ cell with the highest pooled
/// SRNR; ties keep the earlier λ in the grid.
pub fn best_lambda_cells(rows: &[ResultRow]) -> Result<Vec<AggregateRow>> {
    let mut best: BTreeMap<[usize; 3], AggregateRow> = BTreeMap::new();
    for (k, cell) in keyed_cells(rows)? {
        let group = [k[0], k[1], k[3]];
        if best.get(&group).is_none_or(|b| cell.pooled_srnr_db > b.pooled_srnr_db) {
            best.insert(group, cell);
        }
    }
    Ok(best.into_values().collect())
}

pub fn write_aggregate<W: Write>(out: &mut W, cells: &[AggregateRow]) -> std::io::Result<()> {
    writeln!(out, "{AGGREGATE_HEADER}")?;
    for c in cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            c.study,
            c.model_label,
            c.alpha,
            c.lambda,
            c.penalty,
            c.trials,
            c.pooled_srnr_db,
            c.mean_srnr_db,
            c.mean_asce,
            c.mean_iterations,
            c.mean_final_loss
        )?;
    }
    Ok(())
}

pub fn write_nnlm<W: Write>(out: &mut W, reports: &[NnlmReport]) -> std::io::Result<()> {
    writeln!(out, "{NNLM_CSV_HEADER}")?;
    for r in reports {
        r.write_rows(out)?;
    }
    Ok(())
}

/// Writes `results.csv` and `aggregate.csv`; returns the aggregate cells.
///
/// A comparison study aggregates to one row per penalty with λ tuned by
/// pooled SRNR; a λ sweep keeps every λ.
pub fn save_experiment(dir: &Path, study: Study, rows: &[ResultRow]) -> Result<Vec<AggregateRow>> {
    let cells = match study {
        Study::Comparison => best_lambda_cells(rows)?,
        _ => aggregate_cells(rows)?,
    };
    let path = dir.join("results.csv");
    let mut w = create(&path)?;
    write_results(&mut w, rows).map_err(io_err(&path))?;
    finish(w, &path)?;
    let path = dir.join("aggregate.csv");
    let mut w = create(&path)?;
    write_aggregate(&mut w, &cells).map_err(io_err(&path))?;
    finish(w, &path)?;
    Ok(cells)
}

pub fn save_nnlm(dir: &Path, reports: &[NnlmReport]) -> Result<PathBuf> {
    if reports.is_empty() {
        return Err(Error::Empty("nnlm reports"));
    }
    let path = dir.join("nnlm.csv");
    let mut w = create(&path)?;
    write_nnlm(&mut w, reports).map_err(io_err(&path))?;
    finish(w, &path)?;
    Ok(path)
}

/// Writes `trace.csv` and `signals.csv` for a showcase run.
pub fn save_showcase(dir: &Path, s: &Showcase) -> Result<()> {
    let path = dir.join("trace.csv");
    let mut w = create(&path)?;
    (|| -> std::io::Result<()> {
        writeln!(w, "iter,loss,residual_term,penalty_term")?;
        for p in &s.result.trace {
            writeln!(w, "{},{},{},{}", p.iter, p.loss, p.residual, p.penalty)?;
        }
        Ok(())
    })()
    .map_err(io_err(&path))?;
    finish(w, &path)?;

    let path = dir.join("signals.csv");
    let mut w = create(&path)?;
    (|| -> std::io::Result<()> {
        writeln!(w, "signal,index,value")?;
        let series: [(&str, &[f64]); 6] = [
            ("x", &s.x),
            ("x_hat", &s.result.x_hat),
            ("z", &s.z),
            ("z_hat", &s.result.z_hat),
            ("y", &s.y),
            ("y_hat", &s.y_hat),
        ];
        for (name, v) in series {
            for (i, value) in v.iter().enumerate() {
                writeln!(w, "{name},{i},{value}")?;
            }
        }
        Ok(())
    })()
    .map_err(io_err(&path))?;
    finish(w, &path)
}
