use thiserror::Error;

use crate::domain::StateActionPair;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pair {pair} is outside the class domain ({states} states x {actions} actions)")]
    InvalidPair {
        pair: StateActionPair,
        states: usize,
        actions: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "exact enumeration over {size} functions exceeds the limit of {limit}; \
         use the bucketed sensitivity estimator instead"
    )]
    EnumerationLimit { size: usize, limit: usize },

    #[error("least-squares normal equations not satisfied after regularization (residual {residual:.3e})")]
    IllConditioned { residual: f64 },

    #[error("environment step failed: {0}")]
    Environment(String),

    #[error("episode {episode}, level {level}: {source}")]
    AtLevel {
        episode: usize,
        level: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_level(self, episode: usize, level: usize) -> Self {
        Error::AtLevel {
            episode,
            level,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
