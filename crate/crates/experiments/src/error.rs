use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    InvalidConfig(Vec<String>),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] gsl_core::Error),
    #[error("nothing to write: {0}")]
    Empty(&'static str),
    #[error("worker pool: {0}")]
    Pool(String),
}
