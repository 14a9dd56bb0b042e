use serde::{Deserialize, Serialize};

use super::optim::OptimizerKind;
use super::RlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algo {
    A2C,
    PPO,
}

/// Training hyperparameters. Defaults are the tuned choices; the A2C-only
/// and PPO-only fields are ignored by the other algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub algo: Algo,
    pub ent_coef: f64,
    pub gae_lambda: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    /// Steps collected per environment between updates.
    pub n_steps: usize,
    pub vf_coef: f64,
    pub n_envs: usize,
    // A2C
    pub normalize_advantage: bool,
    pub use_rms_prop: bool,
    // PPO
    pub clip_range: f64,
    pub batch_size: usize,
    pub n_epochs: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            algo: Algo::PPO,
            ent_coef: 1e-3,
            gae_lambda: 0.95,
            gamma: 0.98,
            learning_rate: 3e-5,
            max_grad_norm: 1.0,
            n_steps: 256,
            vf_coef: 0.25,
            n_envs: 16,
            normalize_advantage: false,
            use_rms_prop: true,
            clip_range: 0.2,
            batch_size: 128,
            n_epochs: 20,
        }
    }
}

impl HyperParams {
    pub fn rollout_len(&self) -> usize {
        self.n_steps * self.n_envs
    }

    pub fn optimizer(&self) -> OptimizerKind {
        match self.algo {
            Algo::A2C if self.use_rms_prop => OptimizerKind::RmsProp,
            _ => OptimizerKind::Adam,
        }
    }

    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: String| Err(RlError::Config(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gae_lambda {} outside [0, 1]", self.gae_lambda));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm must be positive".into());
        }
        if !(self.ent_coef >= 0.0 && self.vf_coef >= 0.0) {
            return bad("loss coefficients must be non-negative".into());
        }
        if self.n_steps == 0 || self.n_envs == 0 {
            return bad("n_steps and n_envs must be positive".into());
        }
        if self.algo == Algo::PPO {
            if !(self.clip_range > 0.0) {
                return bad("clip_range must be positive".into());
            }
            if self.n_epochs == 0 || self.batch_size == 0 {
                return bad("n_epochs and batch_size must be positive".into());
            }
            if self.batch_size > self.rollout_len() {
                return bad(format!(
                    "batch_size {} exceeds the rollout of {} transitions",
                    self.batch_size,
                    self.rollout_len()
                ));
            }
        }
        Ok(())
    }
}
