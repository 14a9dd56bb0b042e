//! Offline black-box optimization: search-space definitions, trial records,
//! the tree-structured Parzen estimator sampler, and grid/random baselines.

mod domain;
mod parzen;
mod tpe;
mod trial;

pub use domain::{Condition, DomainKind, ParamDomain, ParamValue, Params, SearchSpace};
pub use parzen::TruncatedParzen;
pub use tpe::{grid, random_sample, sample_prior, suggest, TpeConfig};
pub use trial::{TrialMetadata, TrialRecord, TrialState};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizerError {
    #[error("search space has no parameters")]
    EmptySpace,
    #[error("invalid domain for '{name}': {reason}")]
    InvalidDomain { name: String, reason: String },
    #[error("duplicate parameter '{0}'")]
    DuplicateParam(String),
    #[error("condition of '{param}' refers to unknown or later parameter '{parent}'")]
    BadCondition { param: String, parent: String },
    #[error("grid level {value} lies outside the domain of '{name}'")]
    LevelOutOfDomain { name: String, value: String },
    #[error("expected {expected} grid level lists, got {got}")]
    LevelArity { expected: usize, got: usize },
    #[error("invalid TPE configuration: {0}")]
    Config(String),
}
