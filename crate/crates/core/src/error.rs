use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid sampler, training or run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition (mismatched sizes, bad indices, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A sampled parameter set does not describe a drivable trajectory.
    #[error("infeasible sample: {0}")]
    Infeasible(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("enumeration of {configurations} configurations exceeds budget {budget}")]
    Budget { configurations: f64, budget: u64 },

    #[error("scenario generation failed: {0}")]
    Generation(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Divergence { epoch: usize, reason: String },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: unsupported {what} version {found} (expected {expected})")]
    Version {
        path: PathBuf,
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("invalid scene {scene}: {reason}")]
    InvalidScene { scene: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("oracle checks failed: {}", .0.join(", "))]
    OracleMismatch(Vec<String>),

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error("json output: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable name of the variant, used in command-line error messages.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Contract(_) => "contract",
            Error::Infeasible(_) => "infeasible",
            Error::NonFinite(_) => "non_finite",
            Error::Budget { .. } => "budget",
            Error::Generation(_) => "generation",
            Error::Divergence { .. } => "divergence",
            Error::Parse { .. } => "parse",
            Error::Version { .. } => "version",
            Error::InvalidScene { .. } => "invalid_scene",
            Error::Io { .. } => "io",
            Error::OracleMismatch(_) => "oracle_mismatch",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// 2 for bad input or configuration, 3 for failed oracle checks, 1 for
    /// everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Parse { .. }
            | Error::Version { .. }
            | Error::InvalidScene { .. }
            | Error::Io { .. } => 2,
            Error::OracleMismatch(_) => 3,
            _ => 1,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
