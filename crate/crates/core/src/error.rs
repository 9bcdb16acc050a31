use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("model training diverged: {message}")]
    Diverged {
        message: String,
        /// Parameters from the last epoch whose loss was finite.
        last_snapshot: Box<crate::ensemble::GaussianEnsemble>,
    },

    #[error("did not converge within {iterations} iterations (last change {last_delta:e})")]
    NonConvergence {
        iterations: usize,
        last_delta: f64,
        last_policy: Box<crate::soft_pi::TabularPolicy>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed artifact {path}: {message}")]
    Artifact { path: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub(crate) fn ensure_finite(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::param(format!("{name}[{i}] is not finite"))),
        None => Ok(()),
    }
}
