use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gsl_experiments::config::{ExperimentConfig, Study};
use gsl_experiments::{output, plot, run_experiment, run_nnlm, run_showcase, Result};

/// Reconstruction experiments for generative sparse latent signals.
#[derive(Parser)]
#[command(name = "gslcs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides GSLCS_OUTPUT_DIR and the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a lambda-sweep or comparison study.
    Run(Common),
    /// Compute NNLM train/test curves.
    Nnlm(Common),
    /// Reconstruct one instance and dump its trace and signals.
    Showcase {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0.9)]
        lambda: f64,
    },
    /// Print the default configuration of a study.
    Template {
        #[arg(value_parser = parse_study)]
        study: Study,
    },
}

fn parse_study(s: &str) -> std::result::Result<Study, String> {
    toml::Value::String(s.to_string())
        .try_into()
        .map_err(|_| format!("unknown study '{s}' (nnlm, lambda-sweep, comparison, showcase)"))
}

fn prepare(common: &Common) -> Result<(ExperimentConfig, PathBuf, usize)> {
    let config = ExperimentConfig::load(&common.config)?;
    let out = common
        .out
        .clone()
        .or_else(|| std::env::var_os("GSLCS_OUTPUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| config.output_dir.clone());
    let workers = common
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    Ok((config, out, workers))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let (config, out, workers) = prepare(&common)?;
            let rows = run_experiment(&config, workers)?;
            let cells = output::save_experiment(&out, config.study, &rows)?;
            plot::save_svg(
                &out.join("srnr.svg"),
                &plot::srnr_chart(&config.study.to_string(), &cells),
            )?;
            println!("{} rows, {} cells -> {}", rows.len(), cells.len(), out.display());
        }
        Command::Nnlm(common) => {
            let (config, out, workers) = prepare(&common)?;
            let reports = run_nnlm(&config, workers)?;
            let path = output::save_nnlm(&out, &reports)?;
            plot::save_svg(&out.join("nnlm.svg"), &plot::nnlm_chart(&reports))?;
            for r in &reports {
                let last = r.test_nnlm.len() - 1;
                println!(
                    "{:<12} test NNLM {:.4} at J={}",
                    r.model_label, r.test_nnlm[last], r.train_sizes[last]
                );
            }
            println!("-> {}", path.display());
        }
        Command::Showcase { common, alpha, lambda } => {
            let (config, out, _) = prepare(&common)?;
            let s = run_showcase(&config, alpha, lambda)?;
            output::save_showcase(&out, &s)?;
            plot::save_svg(&out.join("trace.svg"), &plot::trace_chart(&s.result))?;
            println!(
                "{} α={} λ={} {}: SRNR {:.2} dB, ASCE {:.3}, {} iterations -> {}",
                s.model_label,
                s.alpha,
                s.lambda,
                s.penalty,
                s.srnr_db,
                s.asce,
                s.result.iterations,
                out.display()
            );
        }
        Command::Template { study } => print!("{}", ExperimentConfig::default_protocol(study).to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
