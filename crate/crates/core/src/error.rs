use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
///
/// The variants split into two families: input problems (shape, validation,
/// index, configuration, I/O) and numerical failures (convergence,
/// singularity). [`Error::is_numerical`] tells them apart so front ends can
/// map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{what} index {index} out of range (len {len}){}", row_suffix(*.row))]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
        row: Option<usize>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("eigen solver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    Convergence { sweeps: usize, residual: f64 },

    #[error("singular system: smallest eigenvalue-pair sum {min_pair_sum:e} below {threshold:e}; {hint}")]
    Singular {
        min_pair_sum: f64,
        threshold: f64,
        hint: &'static str,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

fn row_suffix(row: Option<usize>) -> String {
    match row {
        Some(r) => format!(" at row {r}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Convergence { .. } | Error::Singular { .. })
    }

    /// Short machine-readable tag for the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape_mismatch",
            Error::Validation(_) => "validation",
            Error::Index { .. } => "index_out_of_range",
            Error::Config(_) => "configuration",
            Error::Convergence { .. } => "convergence",
            Error::Singular { .. } => "singular",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
        }
    }
}
