//! Training on the test scenarios, checkpoints, and evaluation runs recorded
//! in the study store.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use ranbench_core::envproto::{EnvSettings, RanEnv};
use ranbench_core::optimizer::{TrialMetadata, TrialRecord};
use ranbench_core::ransim::ScenarioSpec;
use ranbench_core::rlagent::{evaluate, train, ActorCritic, Checkpoint, EvalTrial, TrainOutcome, TrajectoryPoint, UpdateStats};
use ranbench_core::study::StudyStore;
use serde_json::{json, Value};

use crate::config::BenchConfig;
use crate::offline::{params_of, power_space};

/// Trains one agent on all given scenarios: parallel environment `i` runs
/// scenario `i mod len`.
pub fn train_agent(
    cfg: &BenchConfig,
    scenarios: &[ScenarioSpec],
    total_timesteps: u64,
    seed: u64,
    on_update: impl FnMut(&UpdateStats, &ActorCritic<f64>),
) -> anyhow::Result<TrainOutcome<f64>> {
    anyhow::ensure!(!scenarios.is_empty(), "no training scenarios");
    let configs: Vec<_> = scenarios.iter().map(|s| cfg.env_config(s.clone())).collect();
    let out = train(
        |i| RanEnv::new(configs[i % configs.len()].clone()),
        &cfg.hyper,
        &cfg.arch,
        total_timesteps,
        seed,
        on_update,
    )?;
    Ok(out)
}

/// Checkpoint metadata: the environment settings the policy was trained
/// with (they fix the observation layout) plus run provenance.
pub fn checkpoint_metadata(cfg: &BenchConfig, scenarios: &[ScenarioSpec], timesteps: u64, seed: u64) -> BTreeMap<String, Value> {
    let names: Vec<&str> = scenarios.iter().map(|s| s.name.as_str()).collect();
    BTreeMap::from([
        ("env".to_string(), serde_json::to_value(&cfg.env).expect("settings serialize")),
        ("hyper".to_string(), serde_json::to_value(&cfg.hyper).expect("settings serialize")),
        ("scenarios".to_string(), json!(names)),
        ("timesteps".to_string(), json!(timesteps)),
        ("seed".to_string(), json!(seed)),
    ])
}

pub fn save_agent(path: &Path, policy: &ActorCritic<f64>, metadata: BTreeMap<String, Value>) -> anyhow::Result<()> {
    Checkpoint::from_policy(policy, metadata).save(path)?;
    Ok(())
}

/// Loads a policy and, when recorded, the environment settings it expects.
pub fn load_agent(path: &Path) -> anyhow::Result<(ActorCritic<f64>, Option<EnvSettings>)> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let env = match ck.metadata.get("env") {
        Some(v) => Some(serde_json::from_value(v.clone()).context("checkpoint env settings")?),
        None => None,
    };
    Ok((ck.to_policy()?, env))
}

pub fn rl_study_name(scenario: &str) -> String {
    format!("{scenario}/rl")
}

fn trajectory_value(points: &[TrajectoryPoint]) -> Value {
    Value::Array(
        points
            .iter()
            .map(|p| {
                let mut row = vec![json!(p.t_ms)];
                row.extend(p.powers_dbm.iter().map(|&x| json!(x)));
                row.push(json!(p.score));
                Value::Array(row)
            })
            .collect(),
    )
}

/// Inverse of the compact `[t_ms, p_1, .., p_n, score]` rows kept in trial metadata.
pub fn trajectory_of(record: &TrialRecord) -> Option<Vec<TrajectoryPoint>> {
    let rows = record.metadata.attrs.get("trajectory")?.as_array()?;
    rows.iter()
        .map(|r| {
            let r = r.as_array()?;
            let (first, rest) = r.split_first()?;
            let (last, powers) = rest.split_last()?;
            Some(TrajectoryPoint {
                t_ms: first.as_u64()?,
                powers_dbm: powers.iter().map(Value::as_f64).collect::<Option<_>>()?,
                score: last.as_f64()?,
            })
        })
        .collect()
}

/// Greedy evaluation from `n_trials` random initial power triples; every
/// trial is appended to `<scenario>/rl` with its initial powers as params
/// and its trajectory in the metadata. Refuses to extend a non-empty study.
pub fn evaluate_into_store(
    store: &mut StudyStore,
    cfg: &BenchConfig,
    policy: &ActorCritic<f64>,
    scenario: &ScenarioSpec,
    n_trials: usize,
    duration_ms: u64,
    seed: u64,
) -> anyhow::Result<(String, Vec<EvalTrial>)> {
    let name = rl_study_name(&scenario.name);
    if store.trials(&name).next().is_some() {
        bail!("study '{name}' already holds evaluation trials; use a fresh store");
    }
    let trials = evaluate(policy, &cfg.env_config(scenario.clone()), n_trials, duration_ms, seed)?;
    store.create_study(&name, &power_space(cfg))?;
    for t in &trials {
        let meta = TrialMetadata {
            wall_time_s: 0.0,
            seed: t.seed,
            attrs: BTreeMap::from([
                ("initial_score".to_string(), json!(t.initial_score)),
                ("trajectory".to_string(), trajectory_value(&t.trajectory)),
            ]),
        };
        store.append_trial(&name, params_of(&t.initial_powers_dbm), t.final_score, meta)?;
    }
    Ok((name, trials))
}

/// Complete trial with the median score (lower median; ties by id).
pub fn median_record<'a>(store: &'a StudyStore, study: &'a str) -> Option<&'a TrialRecord> {
    let mut v: Vec<&TrialRecord> = store.trials(study).filter(|t| t.complete_score().is_some()).collect();
    v.sort_by(|a, b| a.score.unwrap().total_cmp(&b.score.unwrap()).then(a.trial_id.cmp(&b.trial_id)));
    v.get(v.len().saturating_sub(1) / 2).copied()
}

pub fn write_trajectory<W: Write>(out: W, points: &[TrajectoryPoint]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = points.first().map_or(0, |p| p.powers_dbm.len());
    let mut header = vec!["t_ms".to_string()];
    header.extend((1..=n).map(|b| format!("power_{b}")));
    header.push("score".into());
    w.write_record(&header)?;
    for p in points {
        let mut row = vec![p.t_ms.to_string()];
        row.extend(p.powers_dbm.iter().map(|x| x.to_string()));
        row.push(p.score.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curve<W: Write>(out: W, curve: &[UpdateStats]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in curve {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
