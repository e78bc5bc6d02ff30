use thiserror::Error;

/// Errors produced by the expansion library.
#[derive(Debug, Error)]
pub enum KleError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("point {x} lies outside the domain [{a}, {b}]")]
    OutOfDomain { x: f64, a: f64, b: f64 },

    #[error(
        "kernel is not admissible: eigenvalue {min_eigenvalue:e} is below the \
         clipping threshold -{threshold:e}"
    )]
    InadmissibleKernel { min_eigenvalue: f64, threshold: f64 },

    #[error("mode {index} has a zero eigenvalue ({lambda:e}); it cannot be used")]
    DegenerateMode { index: usize, lambda: f64 },

    #[error(
        "variance ratio {threshold} is unreachable: {available} eigenvalues capture only \
         {achieved:.6} of the total variance; increase the number of quadrature nodes"
    )]
    InsufficientSpectrum {
        threshold: f64,
        achieved: f64,
        available: usize,
    },

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl KleError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        KleError::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        KleError::Numeric(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        KleError::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, KleError>;
