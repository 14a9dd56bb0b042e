//! Actor-critic agent: network with hand-written backpropagation, GAE,
//! PPO and A2C updates, the training loop, greedy evaluation and
//! checkpoints.

mod checkpoint;
mod evaluate;
mod gae;
mod hyper;
mod loss;
mod nn;
mod optim;
mod train;

pub use checkpoint::{Checkpoint, TensorInfo, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use evaluate::{eval_config, evaluate, median_trial, run_greedy, EvalTrial, TrajectoryPoint};
pub use gae::gae;
pub use hyper::{Algo, HyperParams};
pub use loss::{loss_and_grad, normalize_advantages, LossCoefs, LossStats, Minibatch, Surrogate};
pub use nn::{log_softmax, ActorCritic, Activation, LayerSpec, NetShape, PolicyArch, Tape};
pub use optim::{clip_grad_norm, GradientOptimizer, OptimizerKind};
pub use train::{greedy_action, sample_action, train, update, RolloutBuffer, TrainOutcome, UpdateStats};

use crate::envproto::EnvError;

#[derive(Debug, thiserror::Error)]
pub enum RlError {
    #[error("expected size {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("{0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}
