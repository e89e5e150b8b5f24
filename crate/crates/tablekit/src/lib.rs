//! File formats, reports and pipeline commands for `tablekit-core`.
//!
//! Everything that touches the file system lives here: JSON-lines readers and
//! writers for annotations, foreign records and task samples, the drop and
//! evaluation reports, the SGCL parameter file and toy fixtures, and the
//! command implementations behind the `tablekit` binary. A small synthetic
//! table generator produces the shipped fixture corpora.

pub mod commands;
pub mod fixture;
pub mod jsonl;
pub mod params_file;
pub mod report;
pub mod synth;

pub use tablekit_core as core;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Format { path: PathBuf, line: usize, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Other(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, msg: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            line,
            msg: msg.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Environment variable holding the worker count for record-parallel commands.
pub const WORKERS_ENV: &str = "TABLEKIT_WORKERS";

/// Thread pool sized by [`WORKERS_ENV`]; rayon's default when unset or zero.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let n = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Usage(format!("{WORKERS_ENV} must be a non-negative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Other(e.to_string()))
}
