use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
study = "lambda-sweep"
seed = 7
m = 12
M = 12
K = 2
snr_db = 30.0
alpha-grid = [0.5]
lambda-grid = [0.5, 0.9]
trials = 2
output-dir = "from-config"

[solver-opts]
max-iters = 50

[[models]]
label = "rnvp-2"
kind = "rnvp"
coupling_layers = 2

[nnlm]
train-sizes = [30, 60]
test-size = 20
"#;

fn gslcs(args: &[&str], cwd: &Path, env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gslcs"));
    cmd.args(args).current_dir(cwd).env_remove("GSLCS_OUTPUT_DIR");
    if let Some(p) = env_out {
        cmd.env("GSLCS_OUTPUT_DIR", p);
    }
    cmd.output().unwrap()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), CONFIG).unwrap();
    dir
}

#[test]
fn run_writes_results_aggregate_and_plot() {
    let dir = workspace();
    let out = gslcs(&["run", "--config", "exp.toml", "--workers", "2"], dir.path(), None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["results.csv", "aggregate.csv", "srnr.svg"] {
        assert!(dir.path().join("from-config").join(f).is_file(), "missing {f}");
    }
}

#[test]
fn output_directory_precedence() {
    let dir = workspace();
    let env_dir = dir.path().join("from-env");
    let out = gslcs(&["run", "--config", "exp.toml"], dir.path(), Some(&env_dir));
    assert!(out.status.success());
    assert!(env_dir.join("results.csv").is_file());
    assert!(!dir.path().join("from-config").exists());

    let flag_dir = dir.path().join("from-flag");
    let out = gslcs(
        &["run", "--config", "exp.toml", "--out", flag_dir.to_str().unwrap()],
        dir.path(),
        Some(&env_dir.join("unused")),
    );
    assert!(out.status.success());
    assert!(flag_dir.join("results.csv").is_file());
    assert!(!env_dir.join("unused").exists());
}

#[test]
fn nnlm_and_showcase_commands() {
    let dir = workspace();
    let out = gslcs(&["nnlm", "--config", "exp.toml", "--out", "n"], dir.path(), None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("n/nnlm.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    assert!(dir.path().join("n/nnlm.svg").is_file());

    let out = gslcs(
        &[
            "showcase", "--config", "exp.toml", "--out", "s", "--alpha", "0.5", "--lambda", "0.9",
        ],
        dir.path(),
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(dir.path().join("s/trace.csv")).unwrap();
    assert!(trace.starts_with("iter,loss,residual_term,penalty_term\n"));
    assert!(dir.path().join("s/signals.csv").is_file());
    assert!(dir.path().join("s/trace.svg").is_file());
}

#[test]
fn invalid_config_fails_with_message() {
    let dir = workspace();
    std::fs::write(dir.path().join("bad.toml"), CONFIG.replace("K = 2", "K = 40")).unwrap();
    let out = gslcs(&["run", "--config", "bad.toml"], dir.path(), None);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("K: 40 exceeds M = 12"), "{err}");
    assert!(!dir.path().join("from-config").exists());

    let out = gslcs(&["run", "--config", "missing.toml"], dir.path(), None);
    assert!(!out.status.success());
}

#[test]
fn template_prints_a_loadable_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = gslcs(&["template", "comparison"], dir.path(), None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let config = gsl_experiments::ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!(config.study, gsl_experiments::Study::Comparison);
    assert!(!gslcs(&["template", "bogus"], dir.path(), None).status.success());
}
