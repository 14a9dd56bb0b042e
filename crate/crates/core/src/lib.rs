//! Simulation, optimization and learning core for benchmarking online
//! reinforcement learning against offline black-box search on LTE eNB
//! transmit-power tuning.
//!
//! The numeric kernels (radio formulas, scoring, GAE, the actor-critic
//! network and its optimizers) are generic over [`num::Scalar`]; the
//! aliases below fix the precision used by the simulator and the default
//! training pipeline.

pub mod envproto;
pub mod optimizer;
pub mod num;
pub mod radio;
pub mod ransim;
pub mod rlagent;
pub mod scoring;
pub mod study;

pub use num::Scalar;

/// Precision of the simulator and the default training pipeline.
pub type Real = f64;

/// Actor-critic network in the default precision.
pub type ActorCritic = rlagent::ActorCritic<Real>;
/// Single-precision actor-critic network.
pub type ActorCriticF32 = rlagent::ActorCritic<f32>;
