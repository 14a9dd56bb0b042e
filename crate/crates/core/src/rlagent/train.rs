use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gae::gae;
use super::hyper::{Algo, HyperParams};
use super::loss::{loss_and_grad, LossCoefs, LossStats, Minibatch, Surrogate};
use super::nn::{log_softmax, ActorCritic, NetShape, PolicyArch};
use super::optim::{clip_grad_norm, GradientOptimizer};
use super::RlError;
use crate::envproto::{EnvError, Environment, Transition};
use crate::num::Scalar;

/// Transitions of one collection phase, stored env-major
/// (`index = env · n_steps + step`).
#[derive(Debug, Clone)]
pub struct RolloutBuffer<S> {
    n_envs: usize,
    n_steps: usize,
    obs_len: usize,
    pub obs: Vec<S>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<S>,
    pub values: Vec<S>,
    pub rewards: Vec<S>,
    pub dones: Vec<bool>,
    pub advantages: Vec<S>,
    pub returns: Vec<S>,
    filled: Vec<usize>,
}

impl<S: Scalar> RolloutBuffer<S> {
    pub fn new(n_envs: usize, n_steps: usize, obs_len: usize) -> Self {
        let n = n_envs * n_steps;
        Self {
            n_envs,
            n_steps,
            obs_len,
            obs: vec![S::zero(); n * obs_len],
            actions: vec![0; n],
            log_probs: vec![S::zero(); n],
            values: vec![S::zero(); n],
            rewards: vec![S::zero(); n],
            dones: vec![false; n],
            advantages: vec![S::zero(); n],
            returns: vec![S::zero(); n],
            filled: vec![0; n_envs],
        }
    }

    pub fn len(&self) -> usize {
        self.n_envs * self.n_steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_full(&self) -> bool {
        self.filled.iter().all(|&f| f == self.n_steps)
    }

    pub fn clear(&mut self) {
        self.filled.iter_mut().for_each(|f| *f = 0);
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(&mut self, env: usize, obs: &[S], action: usize, log_prob: S, value: S, reward: S, done: bool) {
        let step = self.filled[env];
        assert!(step < self.n_steps, "rollout buffer full for env {env}");
        let i = env * self.n_steps + step;
        self.obs[i * self.obs_len..(i + 1) * self.obs_len].copy_from_slice(obs);
        self.actions[i] = action;
        self.log_probs[i] = log_prob;
        self.values[i] = value;
        self.rewards[i] = reward;
        self.dones[i] = done;
        self.filled[env] += 1;
    }

    /// Fills `advantages` and `returns` from the stored rewards and values.
    pub fn compute_advantages(&mut self, last_values: &[S], gamma: S, lambda: S) {
        assert!(self.is_full(), "advantages need a full buffer");
        for e in 0..self.n_envs {
            let r = e * self.n_steps..(e + 1) * self.n_steps;
            let (adv, ret) =
                gae(&self.rewards[r.clone()], &self.values[r.clone()], &self.dones[r.clone()], last_values[e], gamma, lambda);
            self.advantages[r.clone()].copy_from_slice(&adv);
            self.returns[r].copy_from_slice(&ret);
        }
    }

    fn gather(&self, idx: &[usize]) -> Gathered<S> {
        let mut obs = Array2::zeros((idx.len(), self.obs_len));
        for (row, &i) in idx.iter().enumerate() {
            obs.row_mut(row).assign(&ndarray::ArrayView1::from(&self.obs[i * self.obs_len..(i + 1) * self.obs_len]));
        }
        Gathered {
            obs,
            actions: idx.iter().map(|&i| self.actions[i]).collect(),
            log_probs: idx.iter().map(|&i| self.log_probs[i]).collect(),
            advantages: idx.iter().map(|&i| self.advantages[i]).collect(),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
        }
    }
}

struct Gathered<S> {
    obs: Array2<S>,
    actions: Vec<usize>,
    log_probs: Vec<S>,
    advantages: Vec<S>,
    returns: Vec<S>,
}

impl<S> Gathered<S> {
    fn minibatch(&self) -> Minibatch<'_, S> {
        Minibatch {
            obs: self.obs.view(),
            actions: &self.actions,
            old_log_probs: &self.log_probs,
            advantages: &self.advantages,
            returns: &self.returns,
        }
    }
}

/// One row of the learning curve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub update: usize,
    pub timesteps: u64,
    /// Episodes that finished during this rollout.
    pub episodes: usize,
    /// Mean final score of those episodes.
    pub mean_episode_score: Option<f64>,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub policy: ActorCritic<S>,
    pub curve: Vec<UpdateStats>,
}

/// Samples an action from a row of log-probabilities.
pub fn sample_action<S: Scalar, R: Rng + ?Sized>(log_probs: &[S], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.as_f64().exp();
        if u < acc {
            return i;
        }
    }
    // Rounding left a sliver above the cumulative sum; take the last
    // action with non-zero probability.
    log_probs.iter().rposition(|lp| lp.as_f64() > f64::NEG_INFINITY).unwrap_or(0)
}

/// Index of the largest logit (first on ties).
pub fn greedy_action<S: Scalar>(logits: &[S]) -> usize {
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate() {
        if l > logits[best] {
            best = i;
        }
    }
    best
}

struct Worker<E> {
    env: E,
    rng: ChaCha8Rng,
    obs: Vec<f64>,
}

fn to_scalar<S: Scalar>(xs: &[f64]) -> Vec<S> {
    xs.iter().map(|&x| S::lit(x)).collect()
}

/// Applies one update from a full buffer. Returns averaged loss stats and
/// the mean pre-clipping gradient norm.
pub fn update<S: Scalar, R: Rng + ?Sized>(
    net: &mut ActorCritic<S>,
    opt: &mut GradientOptimizer<S>,
    buffer: &RolloutBuffer<S>,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<(LossStats, f64), RlError> {
    let lr = S::lit(hp.learning_rate);
    let max_norm = S::lit(hp.max_grad_norm);
    let mut idx: Vec<usize> = (0..buffer.len()).collect();
    let mut sum = LossStats::default();
    let mut norm_sum = 0.0;
    let mut count = 0usize;
    let mut step = |net: &mut ActorCritic<S>, batch: &[usize], surrogate, normalize| -> Result<(), RlError> {
        let g = buffer.gather(batch);
        let coefs = LossCoefs { ent_coef: S::lit(hp.ent_coef), vf_coef: S::lit(hp.vf_coef), normalize_advantage: normalize };
        let (stats, mut grads) = loss_and_grad(net, &g.minibatch(), surrogate, coefs)?;
        norm_sum += clip_grad_norm(&mut grads, max_norm).as_f64();
        opt.apply(net.params_mut(), &grads, lr);
        sum.total += stats.total;
        sum.policy += stats.policy;
        sum.value += stats.value;
        sum.entropy += stats.entropy;
        sum.approx_kl += stats.approx_kl;
        sum.clip_fraction += stats.clip_fraction;
        count += 1;
        Ok(())
    };
    match hp.algo {
        Algo::A2C => step(net, &idx, Surrogate::Vanilla, hp.normalize_advantage)?,
        Algo::PPO => {
            let clip = Surrogate::Clipped(S::lit(hp.clip_range));
            for _ in 0..hp.n_epochs {
                idx.shuffle(rng);
                for batch in idx.chunks_exact(hp.batch_size) {
                    step(net, batch, clip, true)?;
                }
            }
        }
    }
    let c = count.max(1) as f64;
    let avg = LossStats {
        total: sum.total / c,
        policy: sum.policy / c,
        value: sum.value / c,
        entropy: sum.entropy / c,
        approx_kl: sum.approx_kl / c,
        clip_fraction: sum.clip_fraction / c,
    };
    Ok((avg, norm_sum / c))
}

fn forward_rows<S: Scalar>(net: &ActorCritic<S>, rows: &[Vec<f64>]) -> Result<(Array2<S>, Vec<S>), RlError> {
    let d = net.shape().obs_len;
    let flat: Vec<S> = rows.iter().flat_map(|r| r.iter().map(|&x| S::lit(x))).collect();
    let x = ArrayView2::from_shape((rows.len(), d), &flat).map_err(|_| RlError::Shape { expected: d, got: rows.first().map_or(0, Vec::len) })?;
    let (logits, values) = net.forward_batch(x)?;
    Ok((log_softmax(&logits), values.to_vec()))
}

/// Trains a fresh actor-critic for `⌊total_timesteps / (n_steps·n_envs)⌋`
/// updates. `make_env(i)` builds the `i`-th parallel environment;
/// `on_update` sees every learning-curve row with the updated policy.
pub fn train<S, E, F, C>(
    mut make_env: F,
    hp: &HyperParams,
    arch: &PolicyArch,
    total_timesteps: u64,
    seed: u64,
    mut on_update: C,
) -> Result<TrainOutcome<S>, RlError>
where
    S: Scalar,
    E: Environment,
    F: FnMut(usize) -> Result<E, EnvError>,
    C: FnMut(&UpdateStats, &ActorCritic<S>),
{
    hp.validate()?;
    let per_update = hp.rollout_len() as u64;
    if total_timesteps < per_update {
        return Err(RlError::Config(format!(
            "total_timesteps {total_timesteps} is below one rollout of {per_update}"
        )));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut workers = Vec::with_capacity(hp.n_envs);
    for i in 0..hp.n_envs {
        let env = make_env(i)?;
        workers.push(Worker { env, rng: ChaCha8Rng::seed_from_u64(master.random()), obs: Vec::new() });
    }
    let shape = NetShape {
        obs_len: workers[0].env.observation_len(),
        groups: workers[0].env.observation_groups(),
        num_actions: workers[0].env.num_actions(),
    };
    if workers.iter().any(|w| w.env.observation_len() != shape.obs_len || w.env.num_actions() != shape.num_actions) {
        return Err(RlError::Config("parallel environments disagree on observation or action size".into()));
    }
    let mut net = ActorCritic::<S>::new(arch.clone(), shape, master.random())?;
    let mut opt = GradientOptimizer::new(hp.optimizer(), net.num_params());
    for w in &mut workers {
        let s = w.rng.random();
        w.obs = w.env.reset(s)?;
    }

    let gamma = S::lit(hp.gamma);
    let mut buffer = RolloutBuffer::<S>::new(hp.n_envs, hp.n_steps, shape.obs_len);
    let n_updates = (total_timesteps / per_update) as usize;
    let mut curve = Vec::with_capacity(n_updates);
    for u in 0..n_updates {
        buffer.clear();
        let mut finished_scores = Vec::new();
        let mut reward_sum = 0.0;
        for _ in 0..hp.n_steps {
            let rows: Vec<Vec<f64>> = workers.iter().map(|w| w.obs.clone()).collect();
            let (logp, values) = forward_rows(&net, &rows)?;
            let actions: Vec<usize> = workers
                .iter_mut()
                .enumerate()
                .map(|(e, w)| sample_action(logp.row(e).as_slice().expect("contiguous row"), &mut w.rng))
                .collect();
            let results: Vec<Result<Transition, EnvError>> =
                workers.par_iter_mut().zip(&actions).map(|(w, &a)| w.env.step(a)).collect();
            let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

            // Truncated episodes bootstrap from the value of their final observation.
            let trunc: Vec<usize> = (0..hp.n_envs).filter(|&e| results[e].truncated && !results[e].terminated).collect();
            let tail_values = if trunc.is_empty() {
                Vec::new()
            } else {
                forward_rows(&net, &trunc.iter().map(|&e| results[e].observation.clone()).collect::<Vec<_>>())?.1
            };
            for (e, tr) in results.into_iter().enumerate() {
                let mut reward = S::lit(tr.reward);
                reward_sum += tr.reward;
                if let Some(k) = trunc.iter().position(|&t| t == e) {
                    reward += gamma * tail_values[k];
                }
                let done = tr.terminated || tr.truncated;
                let a = actions[e];
                let w = &mut workers[e];
                buffer.push(e, &to_scalar::<S>(&w.obs), a, logp[[e, a]], values[e], reward, done);
                if done {
                    if let Some(s) = tr.final_score {
                        finished_scores.push(s);
                    }
                    let s = w.rng.random();
                    w.obs = w.env.reset(s)?;
                } else {
                    w.obs = tr.observation;
                }
            }
        }
        let rows: Vec<Vec<f64>> = workers.iter().map(|w| w.obs.clone()).collect();
        let (_, last_values) = forward_rows(&net, &rows)?;
        buffer.compute_advantages(&last_values, gamma, S::lit(hp.gae_lambda));
        let (loss, grad_norm) = update(&mut net, &mut opt, &buffer, hp, &mut master)?;

        let stats = UpdateStats {
            update: u + 1,
            timesteps: (u as u64 + 1) * per_update,
            episodes: finished_scores.len(),
            mean_episode_score: (!finished_scores.is_empty())
                .then(|| finished_scores.iter().sum::<f64>() / finished_scores.len() as f64),
            mean_reward: reward_sum / per_update as f64,
            policy_loss: loss.policy,
            value_loss: loss.value,
            entropy: loss.entropy,
            approx_kl: loss.approx_kl,
            clip_fraction: loss.clip_fraction,
            grad_norm,
        };
        on_update(&stats, &net);
        curve.push(stats);
    }
    Ok(TrainOutcome { policy: net, curve })
}
