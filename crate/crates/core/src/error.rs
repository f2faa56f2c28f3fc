use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("newton iteration did not converge after {iterations} iterations (gradient max-norm {grad_norm:e})")]
    Convergence { iterations: usize, grad_norm: f64 },

    #[error("value {value} lies outside the grid support [{lo}, {hi}]")]
    OutOfSupport { value: f64, lo: f64, hi: f64 },

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    #[error("region fit failed at iteration {iter} (centers {centers:?}): {source}")]
    Chain {
        iter: usize,
        centers: Vec<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("missing column: {0}")]
    MissingColumn(String),

    #[error("no usable rows after dropping incomplete records")]
    EmptyData,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code for the failure class: I/O 2, configuration 3, numerical 4.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 2,
            Error::Numerical(_) | Error::Convergence { .. } | Error::Chain { .. } => 4,
            Error::InvalidArgument(_)
            | Error::InvalidState(_)
            | Error::OutOfSupport { .. }
            | Error::UnsupportedDimension(_)
            | Error::MissingColumn(_)
            | Error::EmptyData => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
