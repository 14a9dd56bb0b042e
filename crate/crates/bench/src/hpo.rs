//! TPE search over environment and agent hyperparameters.

use std::collections::BTreeMap;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use ranbench_core::optimizer::{suggest, ParamValue, Params, SearchSpace, TrialMetadata, TrialRecord};
use ranbench_core::ransim::ScenarioSpec;
use ranbench_core::rlagent::{evaluate, Activation, Algo};
use ranbench_core::study::StudyStore;
use serde_json::json;

use crate::config::BenchConfig;
use crate::rl::train_agent;

pub const DEFAULT_SPACE: &str = include_str!("../spaces/rl_hparams.toml");

pub fn parse_space(text: &str) -> anyhow::Result<SearchSpace> {
    let space: SearchSpace = toml::from_str(text)?;
    space.validate()?;
    Ok(space)
}

pub fn default_space() -> SearchSpace {
    parse_space(DEFAULT_SPACE).expect("bundled search space is valid")
}

fn num(v: &ParamValue, name: &str) -> anyhow::Result<f64> {
    v.as_f64().filter(|_| !matches!(v, ParamValue::Bool(_))).ok_or_else(|| anyhow!("'{name}' must be numeric, got {v}"))
}

fn count(v: &ParamValue, name: &str) -> anyhow::Result<usize> {
    match *v {
        ParamValue::Int(i) if i >= 0 => Ok(i as usize),
        _ => bail!("'{name}' must be a non-negative integer, got {v}"),
    }
}

fn flag(v: &ParamValue, name: &str) -> anyhow::Result<bool> {
    v.as_bool().ok_or_else(|| anyhow!("'{name}' must be a boolean, got {v}"))
}

/// Overrides the matching fields of `base` with a sampled assignment.
pub fn apply(base: &BenchConfig, params: &Params) -> anyhow::Result<BenchConfig> {
    let mut cfg = base.clone();
    let (env, hp, arch) = (&mut cfg.env, &mut cfg.hyper, &mut cfg.arch);
    for (name, v) in params {
        let n = name.as_str();
        match n {
            "train_duration" => env.train_duration_ms = count(v, n)? as u64,
            "randomize" => env.randomize_init = flag(v, n)?,
            "history" => env.history_len = count(v, n)?,
            "step_size" => env.step_size_tenths = count(v, n)? as u32,
            "num_rsrq_quantiles" => env.rsrq_quantiles = count(v, n)?,
            "oob_means_gameover" => env.oob_means_gameover = flag(v, n)?,
            "oob_penalty_factor" => env.oob_penalty_factor = num(v, n)?,
            "ent_coeff" => hp.ent_coef = num(v, n)?,
            "gae_lambda" => hp.gae_lambda = num(v, n)?,
            "gamma" => hp.gamma = num(v, n)?,
            "learning_rate" => hp.learning_rate = num(v, n)?,
            "max_grad_norm" => hp.max_grad_norm = num(v, n)?,
            "n_steps" => hp.n_steps = count(v, n)?,
            "vf_coeff" => hp.vf_coef = num(v, n)?,
            "n_envs" => hp.n_envs = count(v, n)?,
            "normalization_advantage" => hp.normalize_advantage = flag(v, n)?,
            "use_rms_prop" => hp.use_rms_prop = flag(v, n)?,
            "clip_range" => hp.clip_range = num(v, n)?,
            "batch_size" => hp.batch_size = count(v, n)?,
            "n_epochs" => hp.n_epochs = count(v, n)?,
            "net_arch" => arch.width = count(v, n)?,
            "ortho_init" => arch.ortho_init = flag(v, n)?,
            "algo" => {
                hp.algo = match v.as_str() {
                    Some("A2C") => Algo::A2C,
                    Some("PPO") => Algo::PPO,
                    _ => bail!("'algo' must be A2C or PPO, got {v}"),
                }
            }
            "activation_fn" => {
                arch.activation = match v.as_str() {
                    Some("tanh") => Activation::Tanh,
                    Some("relu") => Activation::Relu,
                    _ => bail!("'activation_fn' must be tanh or relu, got {v}"),
                }
            }
            _ => bail!("unknown hyperparameter '{name}'"),
        }
    }
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpoOptions {
    pub study: String,
    pub n_trials: usize,
    pub timesteps_per_trial: u64,
    pub eval_trials: usize,
    pub eval_duration_ms: u64,
    pub eval_seed: u64,
}

impl HpoOptions {
    pub fn from_config(cfg: &BenchConfig) -> Self {
        let h = &cfg.hpo;
        Self {
            study: "hpo".into(),
            n_trials: h.n_trials,
            timesteps_per_trial: h.timesteps_per_trial,
            eval_trials: h.eval_trials,
            eval_duration_ms: h.eval_duration_ms,
            eval_seed: h.eval_seed,
        }
    }
}

/// Trains with the suggested settings and returns the mean final score of
/// greedy evaluation runs on every scenario. A budget smaller than one
/// rollout of the suggested `n_envs × n_steps` is raised to one rollout.
pub fn objective(cfg: &BenchConfig, scenarios: &[ScenarioSpec], opts: &HpoOptions, seed: u64) -> anyhow::Result<f64> {
    cfg.validate()?;
    let steps = opts.timesteps_per_trial.max(cfg.hyper.rollout_len() as u64);
    let agent = train_agent(cfg, scenarios, steps, seed, |_, _| {})?;
    let mut scores = Vec::new();
    for s in scenarios {
        let trials = evaluate(&agent.policy, &cfg.env_config(s.clone()), opts.eval_trials, opts.eval_duration_ms, opts.eval_seed)?;
        scores.extend(trials.iter().map(|t| t.final_score));
    }
    anyhow::ensure!(!scores.is_empty(), "no evaluation runs");
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Runs (or resumes) the search. Trials whose configuration is unusable or
/// whose training diverges are stored as failed, with the reason, and do
/// not inform later suggestions.
pub fn run_hpo(
    store: &mut StudyStore,
    base: &BenchConfig,
    space: &SearchSpace,
    scenarios: &[ScenarioSpec],
    opts: &HpoOptions,
    seed: u64,
    mut on_trial: impl FnMut(&TrialRecord),
) -> anyhow::Result<String> {
    store.create_study(&opts.study, space)?;
    let done = store.trials(&opts.study).count();
    for i in done..opts.n_trials {
        let trial_seed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        let history: Vec<_> = store.trials(&opts.study).cloned().collect();
        let params = suggest(space, &history, &base.tpe, trial_seed)?;
        let start = Instant::now();
        let result = apply(base, &params).and_then(|cfg| objective(&cfg, scenarios, opts, trial_seed));
        let mut meta = TrialMetadata { wall_time_s: start.elapsed().as_secs_f64(), seed: trial_seed, attrs: BTreeMap::new() };
        let id = match result {
            Ok(score) => store.append_trial(&opts.study, params, score, meta)?,
            Err(e) => {
                meta.attrs.insert("error".into(), json!(format!("{e:#}")));
                store.append_failed(&opts.study, params, meta)?
            }
        };
        on_trial(store.trial(&opts.study, id).context("trial just stored")?);
    }
    Ok(opts.study.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ranbench_core::optimizer::{random_sample, DomainKind};

    #[test]
    fn bundled_space_matches_table() {
        let s = default_space();
        assert_eq!(s.params.len(), 24);
        let cats = |n: &str| match &s.get(n).unwrap().kind {
            DomainKind::Categorical { choices } => choices.len(),
            _ => 0,
        };
        assert_eq!(cats("history"), 20);
        assert_eq!(cats("n_steps"), 9);
        assert_eq!(cats("max_grad_norm"), 9);
        assert_eq!(s.get("ent_coeff").unwrap().kind, DomainKind::LogUniform { low: 1e-8, high: 0.1 });
        assert_eq!(s.get("clip_range").unwrap().when.as_ref().unwrap().equals, ParamValue::from("PPO"));
    }

    #[test]
    fn every_sample_applies() {
        let s = default_space();
        for p in random_sample(&s, 200, 1).unwrap() {
            let cfg = apply(&BenchConfig::default(), &p).unwrap();
            let ppo = p["algo"] == ParamValue::from("PPO");
            assert_eq!(p.contains_key("clip_range"), ppo);
            assert_eq!(p.contains_key("use_rms_prop"), !ppo);
            assert_eq!(cfg.hyper.algo == Algo::PPO, ppo);
            assert!((1..=20).contains(&cfg.env.history_len));
        }
    }

    #[test]
    fn apply_rejects_unknown_and_mistyped() {
        let base = BenchConfig::default();
        let one = |k: &str, v: ParamValue| Params::from([(k.to_string(), v)]);
        assert!(apply(&base, &one("bogus", 1i64.into())).is_err());
        assert!(apply(&base, &one("history", 2.5.into())).is_err());
        assert!(apply(&base, &one("algo", "SAC".into())).is_err());
        assert_eq!(apply(&base, &one("step_size", 7i64.into())).unwrap().env.step_size_tenths, 7);
    }
}
