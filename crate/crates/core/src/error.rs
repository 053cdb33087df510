use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("feeder is not radial: {0}")]
    NotRadial(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("phase mismatch: {0}")]
    PhaseMismatch(String),

    #[error("invalid feeder: {0}")]
    InvalidFeeder(String),

    #[error("power flow did not converge in {iterations} iterations (mismatch trace: {trace:?})")]
    NonConvergence { iterations: usize, trace: Vec<f64> },

    #[error("voltage collapse at node `{node}`: {pu:.4} pu")]
    VoltageCollapse { node: String, pu: f64 },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("missing sensor `{0}`")]
    MissingSensor(String),

    #[error("series do not overlap in time")]
    EmptyOverlap,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
