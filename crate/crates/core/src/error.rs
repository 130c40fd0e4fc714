use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("time {t} outside [{lo}, {hi}]")]
    TimeRange { t: f64, lo: f64, hi: f64 },

    #[error("conditional score is singular at t = {t} (below t_eps = {t_eps})")]
    Singularity { t: f64, t_eps: f64 },

    #[error("numerical error at step {step}, t = {t}: {detail}")]
    Numerical { step: usize, t: f64, detail: String },

    #[error("training diverged at step {step}: loss {loss}")]
    TrainingFailure { step: usize, loss: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("quadrature grid too coarse: refined estimate moved by {diff:e}")]
    GridTooCoarse { diff: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint format error in field `{field}`: {detail}")]
    Format { field: String, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {detail}")]
    Csv { path: PathBuf, detail: String },
}

/// Broad failure class, mapped onto process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Input,
    Config,
    Numerical,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Input => 2,
            ErrorCategory::Config => 3,
            ErrorCategory::Numerical => 4,
            ErrorCategory::Io => 5,
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Input(_)
            | Error::Dimension { .. }
            | Error::TimeRange { .. }
            | Error::Contract(_)
            | Error::Degenerate(_) => ErrorCategory::Input,
            Error::Config(_) => ErrorCategory::Config,
            Error::Singularity { .. }
            | Error::Numerical { .. }
            | Error::TrainingFailure { .. }
            | Error::GridTooCoarse { .. } => ErrorCategory::Numerical,
            Error::Format { .. } | Error::Io { .. } | Error::Csv { .. } => ErrorCategory::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            detail: detail.into(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
