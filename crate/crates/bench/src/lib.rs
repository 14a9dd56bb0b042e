//! Experiment orchestration for the RAN power-tuning benchmark: test
//! scenarios, offline optimizer studies, RL training and evaluation,
//! hyperparameter search, the moving-user trial and the scorecard.

pub mod config;
pub mod offline;
pub mod scenarios;
pub mod dynamic;
pub mod hpo;
pub mod rl;
pub mod scorecard;
