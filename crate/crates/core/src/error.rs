use std::path::PathBuf;

use thiserror::Error;

use crate::env::StateId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state space too large: {states} states exceeds the limit of {limit}")]
    Capacity { states: u128, limit: u128 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty sample")]
    EmptySample,

    #[error("unknown state id {0}")]
    UnknownState(StateId),

    #[error(
        "normal equations are singular (min/max eigenvalue ratio {ratio:.3e}); use a positive ridge strength"
    )]
    Singular { ratio: f64 },

    #[error("all effective sample weights are zero")]
    DegenerateWeights,

    #[error("density ratio support violated: target mass on states {states:?} not covered by the sample")]
    Coverage { states: Vec<StateId> },

    #[error("density ratio estimation failed: {0}")]
    EstimationFailure(String),

    #[error("behavior cloning requires trajectories, but the sample carries none")]
    MissingTrajectories,

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("functional cannot evaluate signed measures; use bootstrap_bias instead")]
    SignedUnsupported,

    #[error("too many failed replicates: {failed} of {total}")]
    ReplicateFailures { failed: usize, total: usize },

    #[error("bias report does not belong to this functional/sample pair: {0}")]
    Pairing(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
