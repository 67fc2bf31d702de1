use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("layer {layer}: {reason}")]
    Layer { layer: usize, reason: String },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("loss bound violated: {0}")]
    LossBound(String),

    #[error("layer {layer}: parameter norm {norm} exceeds recorded bound {bound}")]
    Unclipped { layer: usize, norm: f64, bound: f64 },

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("root finder did not converge after {iterations} iterations (last iterate {last:?}, residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        last: (f64, f64),
        residual: f64,
    },

    #[error("{path}: row {row}: {reason}")]
    Data {
        path: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("{path}: byte offset {offset}: {reason}")]
    Idx {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(String),

    /// A training failure together with the resolved config that produced it.
    #[error("training aborted: {source}; config: {config}")]
    Aborted {
        #[source]
        source: Box<Error>,
        config: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used in machine-readable error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Layer { .. } => "layer",
            Error::Model(_) => "model",
            Error::Config(_) => "config",
            Error::LossBound(_) => "loss_bound",
            Error::Unclipped { .. } => "unclipped",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Data { .. } => "data",
            Error::Idx { .. } => "idx",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Toml(_) => "toml",
            Error::Aborted { source, .. } => source.code(),
        }
    }
}
