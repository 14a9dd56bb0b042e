//! Long trial with UEs travelling between the position sets of several test
//! scenarios while one agent keeps adjusting powers.

use std::io::Write;

use anyhow::{bail, Context};
use ranbench_core::envproto::RanEnv;
use ranbench_core::ransim::{ScenarioSpec, SimEventKind, Waypoint};
use ranbench_core::rlagent::{greedy_action, ActorCritic, TrajectoryPoint};
use serde::Serialize;

use crate::config::BenchConfig;

/// UEs holding the positions of `scenario` from `start_ms` to `end_ms`
/// (milliseconds since the agent took over).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DwellInterval {
    pub scenario: String,
    pub start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicRun {
    pub samples: Vec<TrajectoryPoint>,
    pub intervals: Vec<DwellInterval>,
}

impl DynamicRun {
    /// Mean score over the samples in `(end - window, end]` of an interval.
    pub fn tail_mean(&self, interval: &DwellInterval, window_ms: u64) -> Option<f64> {
        let from = interval.end_ms.saturating_sub(window_ms);
        let v: Vec<f64> =
            self.samples.iter().filter(|p| p.t_ms > from && p.t_ms <= interval.end_ms).map(|p| p.score).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Which interval, if any, covers time `t_ms`.
    pub fn label_at(&self, t_ms: u64) -> Option<&str> {
        self.intervals.iter().find(|i| i.start_ms < t_ms && t_ms <= i.end_ms).map(|i| i.scenario.as_str())
    }
}

/// The moving scenario: start at the first route stop, then visit the stops
/// in order for `cycles` rounds. The first dwell also covers the warmup so
/// that the agent sees a full dwell there too; arrival registers on the
/// first simulator tick.
pub fn route_scenario(cfg: &BenchConfig, route: &[ScenarioSpec], cycles: usize) -> anyhow::Result<ScenarioSpec> {
    let Some(first) = route.first() else { bail!("empty route") };
    if route.iter().any(|s| s.num_ues() != first.num_ues()) {
        bail!("route scenarios differ in UE count");
    }
    let d = &cfg.dynamic;
    let warmup_s = cfg.env.warmup_ms.saturating_sub(cfg.radio.tick_ms) as f64 / 1000.0;
    let waypoints: Vec<Waypoint> = (0..cycles)
        .flat_map(|_| route.iter())
        .enumerate()
        .map(|(k, s)| Waypoint {
            targets: s.ue_positions.clone(),
            dwell_s: if k == 0 { d.dwell_s + warmup_s } else { d.dwell_s },
        })
        .collect();
    let names: Vec<&str> = route.iter().map(|s| s.name.as_str()).collect();
    let spec = ScenarioSpec {
        name: format!("route:{}", names.join(">")),
        seed: first.seed,
        ue_speed: d.speed_mps,
        ue_positions: first.ue_positions.clone(),
        clusters: Vec::new(),
        waypoints,
    };
    spec.validate()?;
    Ok(spec)
}

/// Runs the agent greedily from equal default powers until the last dwell ends.
pub fn run_dynamic(cfg: &BenchConfig, policy: &ActorCritic<f64>, route: &[ScenarioSpec], cycles: usize) -> anyhow::Result<DynamicRun> {
    let spec = route_scenario(cfg, route, cycles)?;
    // generous horizon: every dwell plus straight-line travel, plus a minute
    let mut horizon_s = 60.0;
    let mut at = &spec.ue_positions;
    for w in &spec.waypoints {
        horizon_s += w.dwell_s + ScenarioSpec::max_displacement(at, &w.targets) / spec.ue_speed;
        at = &w.targets;
    }
    let interval = cfg.env.interaction_interval_ms;
    let stops: Vec<String> = (0..cycles).flat_map(|_| route.iter().map(|s| s.name.clone())).collect();
    let mut env_cfg = cfg.env_config(spec);
    env_cfg.settings.randomize_init = false;
    env_cfg.settings.oob_means_gameover = false;
    env_cfg.settings.train_duration_ms = ((horizon_s * 1000.0) as u64).div_ceil(interval) * interval;
    let mut env = RanEnv::new(env_cfg)?;
    let mut obs = env.reset(0)?.data;
    let start = env.simulator().context("episode started")?.clock_ms();

    let mut samples = Vec::new();
    let mut intervals = Vec::new();
    let mut open: Option<u64> = Some(0);
    while intervals.len() < stops.len() {
        let (logits, _) = policy.forward(&obs)?;
        let r = env.step(greedy_action(&logits))?;
        for e in &r.info.events {
            let t = e.t_ms.saturating_sub(start);
            match e.kind {
                SimEventKind::DwellStart { .. } => open = Some(t),
                SimEventKind::DwellEnd { index } => {
                    let start_ms = open.take().context("dwell ended before it started")?;
                    intervals.push(DwellInterval { scenario: stops[index].clone(), start_ms, end_ms: t });
                }
                _ => {}
            }
        }
        samples.push(TrajectoryPoint { t_ms: r.info.t_ms - start, powers_dbm: r.info.powers_dbm, score: r.info.score });
        if r.done && intervals.len() < stops.len() {
            bail!("route did not finish within {horizon_s:.0} s");
        }
        obs = r.observation.data;
    }
    Ok(DynamicRun { samples, intervals })
}

/// Time series with a `scenario` column naming the dwell each sample falls in
/// (empty while travelling).
pub fn write_run<W: Write>(out: W, run: &DynamicRun) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_ms", "power_1", "power_2", "power_3", "score", "scenario"])?;
    for p in &run.samples {
        let mut row = vec![p.t_ms.to_string()];
        row.extend(p.powers_dbm.iter().map(|x| x.to_string()));
        row.push(p.score.to_string());
        row.push(run.label_at(p.t_ms).unwrap_or_default().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_intervals<W: Write>(out: W, run: &DynamicRun) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for i in &run.intervals {
        w.serialize(i)?;
    }
    w.flush()?;
    Ok(())
}
