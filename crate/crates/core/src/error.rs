use thiserror::Error;

/// Errors raised anywhere in the mining pipeline.
#[derive(Debug, Error)]
pub enum GragraError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sparsification left an empty edge universe (threshold {threshold} too aggressive)")]
    EmptyUniverse { threshold: String },

    #[error("non-finite edge weight {0}")]
    NonFiniteWeight(f64),

    #[error("factor capacity exceeded: insertion needs {needed} patterns, cap is {cap}")]
    FactorCapacity { needed: usize, cap: usize },

    #[error("iterative scaling did not converge after {sweeps} sweeps (residual {residual:e})")]
    NonConvergence { sweeps: usize, residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("edge set is not within the modeled universe")]
    OutsideUniverse,

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl GragraError {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        GragraError::Parse {
            line,
            message: message.into(),
        }
    }

    /// Coarse classification used for process exit codes and FFI status codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            GragraError::Parse { .. } | GragraError::Json(_) | GragraError::NonFiniteWeight(_) => {
                ErrorKind::Parse
            }
            GragraError::InvalidDataset(_)
            | GragraError::Config(_)
            | GragraError::EmptyUniverse { .. }
            | GragraError::Mismatch(_) => ErrorKind::Config,
            _ => ErrorKind::Runtime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Parse,
    Config,
    Runtime,
}

pub type Result<T, E = GragraError> = std::result::Result<T, E>;
