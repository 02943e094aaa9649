//! F-LSVI: optimistic least-squares value iteration for episodic MDPs with a
//! general value-function class, using sensitivity-sampled stable bonuses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod bonus;
pub mod domain;
pub mod error;
pub mod function_class;
pub mod record;
pub mod sensitivity;

pub use agent::{
    act, beta_for_episode, plan_episode, rollout, train, train_with_observer, AgentConfig, EpisodeValueStack,
    EpisodicEnv, PolicyTable, RegretOracle, ReplayBuffer, Transition,
};
pub use bonus::{
    compute_beta, stable_bonus, BetaMode, BetaParams, BonusConfig, BonusFunction, BonusStats, SensitivitySource,
};
pub use domain::{
    dataset_norm, set_norm, sq_set_distance, ConfidenceRegion, HorizonParams, PairMultiset, RegressionDataset,
    StateActionPair,
};
pub use error::{Error, Result};
pub use function_class::{CoverKind, FiniteClass, FunctionClass, LinearClass, LinearFunction, TabularClass, TabularFunction};
pub use record::{EpisodeRecord, ExperimentRecord};
