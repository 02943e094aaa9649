//! Environments, exact dynamic-programming oracles, regret accounting and
//! experiment orchestration for `flsvi-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod envs;
pub mod mdp;
pub mod output;
pub mod runner;
pub mod verify;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] flsvi_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl HarnessError {
    /// 1 for invariant violations, 2 for configuration errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Core(flsvi_core::Error::InvalidParameter { .. }) => 2,
            _ => 1,
        }
    }
}
