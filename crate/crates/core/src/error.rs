use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("decomposition of {which} failed: {reason}")]
    Decomposition { which: String, reason: String },

    #[error("ill-conditioned {what} (condition number {cond:.3e})")]
    Conditioning { what: String, cond: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("sampler diverged at iteration {iteration}: {reason}")]
    Sampler { iteration: usize, reason: String },

    #[error(
        "no proposal accepted in the last {window} iterations; \
         increase the ABC tolerance or enable annealing"
    )]
    Stall { window: usize },

    #[error("summary spec mismatch: {0} vs {1}")]
    Comparison(String, String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
