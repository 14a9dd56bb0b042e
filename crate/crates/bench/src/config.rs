use std::path::Path;

use anyhow::Context;
use ranbench_core::envproto::{EnvConfig, EnvSettings};
use ranbench_core::optimizer::TpeConfig;
use ranbench_core::radio::RadioParams;
use ranbench_core::ransim::ScenarioSpec;
use ranbench_core::rlagent::{HyperParams, PolicyArch};
use ranbench_core::scoring::ScoreParams;
use serde::{Deserialize, Serialize};

/// Static-power trials: grid levels, TPE resolution and simulated length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfflineSettings {
    /// Simulated time after warmup; the score is read at its end.
    pub trial_duration_ms: u64,
    pub grid_levels_dbm: Vec<f64>,
    /// TPE suggestions are rounded to this step before simulation.
    pub resolution_db: f64,
    pub n_trials: usize,
}

impl Default for OfflineSettings {
    fn default() -> Self {
        Self {
            trial_duration_ms: 10_000,
            grid_levels_dbm: vec![20.0, 25.0, 30.0, 35.0, 40.0],
            resolution_db: 0.1,
            n_trials: 125,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlSettings {
    pub total_timesteps: u64,
    pub eval_trials: usize,
    pub eval_duration_ms: u64,
    /// Save a checkpoint every this many updates (0 = only at the end).
    pub checkpoint_every: usize,
}

impl Default for RlSettings {
    fn default() -> Self {
        Self { total_timesteps: 1_000_000, eval_trials: 100, eval_duration_ms: 30_000, checkpoint_every: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpoSettings {
    pub n_trials: usize,
    pub timesteps_per_trial: u64,
    /// Evaluation runs per test scenario for the objective.
    pub eval_trials: usize,
    pub eval_duration_ms: u64,
    pub eval_seed: u64,
}

impl Default for HpoSettings {
    fn default() -> Self {
        Self { n_trials: 100, timesteps_per_trial: 200_000, eval_trials: 5, eval_duration_ms: 30_000, eval_seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicSettings {
    pub dwell_s: f64,
    pub speed_mps: f64,
    pub cycles: usize,
    /// Test scenarios visited in order, by name.
    pub route: Vec<String>,
}

impl Default for DynamicSettings {
    fn default() -> Self {
        Self { dwell_s: 30.0, speed_mps: 14.0, cycles: 2, route: vec!["TS1".into(), "TS2".into(), "TS3".into()] }
    }
}

/// Everything a run can be configured with; every table is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub score: ScoreParams,
    pub radio: RadioParams,
    pub env: EnvSettings,
    pub tpe: TpeConfig,
    pub hyper: HyperParams,
    pub arch: PolicyArch,
    pub offline: OfflineSettings,
    pub rl: RlSettings,
    pub hpo: HpoSettings,
    pub dynamic: DynamicSettings,
}

impl BenchConfig {
    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.score.validate()?;
        self.tpe.validate()?;
        self.hyper.validate()?;
        let o = &self.offline;
        anyhow::ensure!(o.resolution_db > 0.0, "offline.resolution_db must be positive");
        anyhow::ensure!(!o.grid_levels_dbm.is_empty(), "offline.grid_levels_dbm is empty");
        anyhow::ensure!(self.dynamic.dwell_s > 0.0 && self.dynamic.speed_mps > 0.0, "dynamic dwell and speed must be positive");
        Ok(())
    }

    pub fn env_config(&self, scenario: ScenarioSpec) -> EnvConfig {
        EnvConfig { scenario, settings: self.env.clone(), score: self.score, radio: self.radio.clone() }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
