use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nn::ActorCritic;
use super::train::greedy_action;
use super::RlError;
use crate::envproto::{EnvConfig, RanEnv};
use crate::num::Scalar;

/// One sample of a power trajectory, taken after each interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    /// Milliseconds since the end of warmup.
    pub t_ms: u64,
    pub powers_dbm: Vec<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTrial {
    pub seed: u64,
    pub initial_powers_dbm: Vec<f64>,
    pub initial_score: f64,
    pub final_score: f64,
    pub trajectory: Vec<TrajectoryPoint>,
}

/// Environment settings for evaluation: random initial powers, a fixed
/// duration, and out-of-bounds actions ignored instead of ending the run.
pub fn eval_config(base: &EnvConfig, duration_ms: u64) -> EnvConfig {
    let mut cfg = base.clone();
    cfg.settings.randomize_init = true;
    cfg.settings.oob_means_gameover = false;
    cfg.settings.train_duration_ms = duration_ms;
    cfg
}

/// Runs one greedy episode from the initial powers drawn by `seed`.
pub fn run_greedy<S: Scalar>(policy: &ActorCritic<S>, cfg: &EnvConfig, seed: u64) -> Result<EvalTrial, RlError> {
    let mut env = RanEnv::new(cfg.clone())?;
    let mut obs = env.reset(seed)?;
    let start = env.simulator().expect("episode started").clock_ms();
    let initial_powers_dbm = env.powers_dbm().expect("episode started");
    let initial_score = env.initial_score().expect("episode started");
    let mut trajectory = Vec::with_capacity(cfg.steps_per_episode() as usize);
    let final_score = loop {
        let x: Vec<S> = obs.data.iter().map(|&v| S::lit(v)).collect();
        let (logits, _) = policy.forward(&x)?;
        let r = env.step(greedy_action(&logits))?;
        trajectory.push(TrajectoryPoint { t_ms: r.info.t_ms - start, powers_dbm: r.info.powers_dbm, score: r.info.score });
        if r.done {
            break r.info.score;
        }
        obs = r.observation;
    };
    Ok(EvalTrial { seed, initial_powers_dbm, initial_score, final_score, trajectory })
}

/// `n_trials` greedy runs of `duration_ms` each, from random initial powers.
/// Trial seeds are drawn from `seed`, so the result depends only on it.
pub fn evaluate<S: Scalar>(
    policy: &ActorCritic<S>,
    base: &EnvConfig,
    n_trials: usize,
    duration_ms: u64,
    seed: u64,
) -> Result<Vec<EvalTrial>, RlError> {
    let cfg = eval_config(base, duration_ms);
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..n_trials).map(|_| rng.random()).collect();
    seeds.par_iter().map(|&s| run_greedy(policy, &cfg, s)).collect()
}

/// Index of the median-scoring trial (lower median for even counts).
pub fn median_trial(trials: &[EvalTrial]) -> Option<usize> {
    let mut idx: Vec<usize> = (0..trials.len()).collect();
    idx.sort_by(|&a, &b| trials[a].final_score.total_cmp(&trials[b].final_score).then(a.cmp(&b)));
    idx.get(trials.len().saturating_sub(1) / 2).copied()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ransim::sample_scenario;
    use crate::rlagent::{NetShape, PolicyArch};

    fn policy(cfg: &EnvConfig) -> ActorCritic<f64> {
        let shape = NetShape { obs_len: cfg.observation_shape().iter().product(), groups: 3, num_actions: 7 };
        ActorCritic::new(PolicyArch { width: 8, ..PolicyArch::default() }, shape, 3).unwrap()
    }

    #[test]
    fn trajectories_and_determinism() {
        let cfg = EnvConfig::new(sample_scenario(4, 12));
        let p = policy(&cfg);
        let a = evaluate(&p, &cfg, 3, 3000, 11).unwrap();
        let b = evaluate(&p, &cfg, 3, 3000, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        for t in &a {
            assert_eq!(t.trajectory.len(), 30);
            assert_eq!(t.trajectory[0].t_ms, 100);
            assert_eq!(t.trajectory.last().unwrap().t_ms, 3000);
            assert!(t.trajectory.iter().all(|p| p.powers_dbm.iter().all(|&x| (20.0..=40.0).contains(&x))));
            assert_eq!(t.final_score, t.trajectory.last().unwrap().score);
        }
    }

    #[test]
    fn median_index() {
        let mk = |s: f64| EvalTrial { seed: 0, initial_powers_dbm: vec![], initial_score: 0.0, final_score: s, trajectory: vec![] };
        let trials: Vec<_> = [3.0, 1.0, 2.0].into_iter().map(mk).collect();
        assert_eq!(median_trial(&trials), Some(2));
        assert_eq!(median_trial(&[]), None);
    }
}
