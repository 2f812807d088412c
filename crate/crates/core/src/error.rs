use std::path::PathBuf;

use crate::market::OperatorId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("operator {id}: {reason}")]
    InvalidProfile { id: OperatorId, reason: String },

    #[error("invalid market parameters: {0}")]
    InvalidParams(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("operator {0} is not a candidate in this scenario")]
    UnknownOperator(OperatorId),

    #[error("joint covariance of operator {id} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    IllConditioned { id: OperatorId, min_eigenvalue: f64 },

    #[error("invalid Monte Carlo configuration: {0}")]
    ConfigInvalid(String),

    #[error("no belief set supplied for {0}")]
    MissingBelief(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}
