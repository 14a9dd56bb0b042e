use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::num::quantile_sorted;
use crate::radio::RadioParams;
use crate::ransim::{ScenarioSpec, SimError, SimEvent, SimEventKind, Simulator, NUM_ENBS};
use crate::scoring::ScoreParams;

/// RSRQ mapped to 0 in the observation; 0 dB maps to 1.
const RSRQ_FLOOR_DB: f64 = -20.0;
/// Observed quantile of an eNB with no attached UEs.
const EMPTY_CELL_QUANTILE: f64 = -1.0;

/// Environment knobs (the tunable "env" hyperparameters plus timing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSettings {
    /// Timesteps of history in each observation.
    pub history_len: usize,
    /// Number of RSRQ quantile bins; contributes `rsrq_quantiles - 1` cut points.
    pub rsrq_quantiles: usize,
    /// Power increment in tenths of a dB.
    pub step_size_tenths: u32,
    pub randomize_init: bool,
    pub train_duration_ms: u64,
    pub oob_means_gameover: bool,
    pub oob_penalty_factor: f64,
    pub interaction_interval_ms: u64,
    pub warmup_ms: u64,
    pub default_power_dbm: f64,
}

impl Default for EnvSettings {
    fn default() -> Self {
        Self {
            history_len: 16,
            rsrq_quantiles: 1,
            step_size_tenths: 3,
            randomize_init: true,
            train_duration_ms: 10_000,
            oob_means_gameover: true,
            oob_penalty_factor: 1.0,
            interaction_interval_ms: 100,
            warmup_ms: 4000,
            default_power_dbm: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub scenario: ScenarioSpec,
    pub settings: EnvSettings,
    pub score: ScoreParams,
    pub radio: RadioParams,
}

impl EnvConfig {
    pub fn new(scenario: ScenarioSpec) -> Self {
        Self {
            scenario,
            settings: EnvSettings::default(),
            score: ScoreParams::default(),
            radio: RadioParams::default(),
        }
    }

    pub fn with_settings(mut self, settings: EnvSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let s = &self.settings;
        let bad = |m: &str| Err(EnvError::Config(m.to_owned()));
        if s.history_len == 0 {
            return bad("history_len must be at least 1");
        }
        if s.rsrq_quantiles == 0 {
            return bad("rsrq_quantiles must be at least 1");
        }
        if s.step_size_tenths == 0 {
            return bad("step size must be positive");
        }
        if s.interaction_interval_ms == 0 || !s.interaction_interval_ms.is_multiple_of(self.radio.tick_ms) {
            return bad("interaction interval must be a positive multiple of the simulator tick");
        }
        if s.train_duration_ms == 0 || !s.train_duration_ms.is_multiple_of(s.interaction_interval_ms) {
            return bad("train_duration must be a positive multiple of the interaction interval");
        }
        if !s.warmup_ms.is_multiple_of(self.radio.tick_ms) {
            return bad("warmup must be a multiple of the simulator tick");
        }
        if !(s.oob_penalty_factor >= 0.0) {
            return bad("oob_penalty_factor must be non-negative");
        }
        self.score.validate().map_err(|e| EnvError::Config(e.to_string()))?;
        self.scenario.validate().map_err(|e| EnvError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn features_per_enb(&self) -> usize {
        self.settings.rsrq_quantiles + 1
    }

    pub fn observation_shape(&self) -> [usize; 3] {
        [NUM_ENBS, self.settings.history_len, self.features_per_enb()]
    }

    pub fn steps_per_episode(&self) -> u64 {
        self.settings.train_duration_ms / self.settings.interaction_interval_ms
    }
}

/// Discrete action index: 0 is a no-op, `2i-1` lowers eNB `i` (1-based), `2i` raises it.
pub type ActionId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerAction {
    Noop,
    Decrease(usize),
    Increase(usize),
}

/// Decodes an action id into a 0-based eNB adjustment.
pub fn decode_action(action: ActionId, num_enbs: usize) -> Option<PowerAction> {
    match action {
        0 => Some(PowerAction::Noop),
        a if a <= 2 * num_enbs => {
            let enb = (a - 1) / 2;
            Some(if a % 2 == 1 { PowerAction::Decrease(enb) } else { PowerAction::Increase(enb) })
        }
        _ => None,
    }
}

/// `N × T × (Q+1)` observation tensor, flattened eNB-major, then time, then feature.
/// Time index `T-1` is the most recent interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub shape: [usize; 3],
    pub data: Vec<f64>,
}

impl Observation {
    pub fn at(&self, enb: usize, t: usize, f: usize) -> f64 {
        let [_, tl, fl] = self.shape;
        self.data[(enb * tl + t) * fl + f]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub t_ms: u64,
    pub score: f64,
    pub oob: bool,
    /// Episode ended by an out-of-bounds action rather than by running out of time.
    pub terminated: bool,
    pub powers_dbm: Vec<f64>,
    pub events: Vec<SimEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("invalid environment configuration: {0}")]
    Config(String),
    #[error("step called on a finished episode")]
    EpisodeDone,
    #[error("step called before reset")]
    NotReset,
    #[error("action {0} is not a valid action id")]
    InvalidAction(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Other(String),
}

/// Outcome of one step in the agent-facing view of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    /// Environment-specific score reported at episode end.
    pub final_score: Option<f64>,
}

/// Gym-style discrete-action environment consumed by the agent.
pub trait Environment: Send {
    fn observation_len(&self) -> usize;
    fn num_actions(&self) -> usize;
    /// Number of equal-sized blocks the observation splits into.
    fn observation_groups(&self) -> usize {
        1
    }
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, EnvError>;
    fn step(&mut self, action: usize) -> Result<Transition, EnvError>;
}

#[derive(Debug, Clone)]
struct Episode {
    sim: Simulator,
    /// Transmit powers in tenths of a dBm; integer so that ±ΔP round-trips exactly.
    powers: Vec<i32>,
    /// Per-interaction feature slices, `N × (Q+1)` each, newest at the back.
    history: VecDeque<Vec<f64>>,
    initial_score: f64,
    last_score: f64,
    steps: u64,
    done: bool,
}

/// The power-tuning environment.
#[derive(Debug, Clone)]
pub struct RanEnv {
    config: EnvConfig,
    episode: Option<Episode>,
}

fn to_tenths(dbm: f64) -> i32 {
    (dbm * 10.0).round() as i32
}

fn from_tenths(tenths: i32) -> f64 {
    tenths as f64 / 10.0
}

impl RanEnv {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(Self { config, episode: None })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn num_actions(&self) -> usize {
        2 * NUM_ENBS + 1
    }

    pub fn simulator(&self) -> Option<&Simulator> {
        self.episode.as_ref().map(|e| &e.sim)
    }

    pub fn powers_dbm(&self) -> Option<Vec<f64>> {
        self.episode.as_ref().map(|e| e.powers.iter().map(|&p| from_tenths(p)).collect())
    }

    /// Score right after warmup.
    pub fn initial_score(&self) -> Option<f64> {
        self.episode.as_ref().map(|e| e.initial_score)
    }

    pub fn last_score(&self) -> Option<f64> {
        self.episode.as_ref().map(|e| e.last_score)
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_none_or(|e| e.done)
    }

    /// Starts an episode: initial powers (default or uniform on the 0.1 dB
    /// grid over the allowed range), warmup without agent interaction, and
    /// the first observation with one live timestep.
    pub fn reset(&mut self, episode_seed: u64) -> Result<Observation, EnvError> {
        let s = &self.config.settings;
        let (lo, hi) = (to_tenths(self.config.radio.min_power_dbm), to_tenths(self.config.radio.max_power_dbm));
        let powers: Vec<i32> = if s.randomize_init {
            let mut rng = ChaCha8Rng::seed_from_u64(episode_seed);
            (0..NUM_ENBS).map(|_| rng.random_range(lo..=hi)).collect()
        } else {
            vec![to_tenths(s.default_power_dbm); NUM_ENBS]
        };
        self.reset_with_powers(&powers.iter().map(|&p| from_tenths(p)).collect::<Vec<_>>())
    }

    /// Starts an episode from explicit initial powers (rounded to 0.1 dB).
    pub fn reset_with_powers(&mut self, powers_dbm: &[f64]) -> Result<Observation, EnvError> {
        if powers_dbm.len() != NUM_ENBS || powers_dbm.iter().any(|p| !p.is_finite()) {
            return Err(EnvError::Config(format!("expected {NUM_ENBS} finite initial powers")));
        }
        let powers: Vec<i32> = powers_dbm.iter().map(|&p| to_tenths(p)).collect();
        let mut sim = Simulator::new(&self.config.scenario, self.config.radio.clone(), 0.0)?;
        sim.set_retention_ms(self.config.score.window_ms.max(1000) * 2);
        for (b, &p) in powers.iter().enumerate() {
            sim.set_tx_power(b, from_tenths(p))?;
        }
        sim.advance(self.config.settings.warmup_ms)?;
        let score = sim.score_now(&self.config.score)?.value;
        let mut episode = Episode {
            sim,
            powers,
            history: VecDeque::with_capacity(self.config.settings.history_len),
            initial_score: score,
            last_score: score,
            steps: 0,
            done: false,
        };
        let slice = self.live_slice(&episode);
        episode.history.push_back(slice);
        self.episode = Some(episode);
        Ok(self.observation())
    }

    fn live_slice(&self, ep: &Episode) -> Vec<f64> {
        let cfg = &self.config;
        let (lo, hi) = (cfg.radio.min_power_dbm, cfg.radio.max_power_dbm);
        let n_ues = ep.sim.num_ues() as f64;
        let q = cfg.settings.rsrq_quantiles;
        let mut per_enb: Vec<Vec<f64>> = vec![Vec::new(); NUM_ENBS];
        if q > 1 {
            for (ue, att) in ep.sim.attachments().iter().enumerate() {
                if let Some(b) = *att {
                    let m = ep.sim.measure(ue).expect("UE index in range");
                    per_enb[b].push(m[b].rsrq_db);
                }
            }
        }
        let load = ep.sim.load();
        let mut slice = Vec::with_capacity(NUM_ENBS * (q + 1));
        for b in 0..NUM_ENBS {
            slice.push((from_tenths(ep.powers[b]) - lo) / (hi - lo));
            slice.push(load[b] as f64 / n_ues);
            let rsrqs = &mut per_enb[b];
            rsrqs.sort_by(f64::total_cmp);
            for k in 1..q {
                let v = match quantile_sorted(rsrqs, k as f64 / q as f64) {
                    Some(r) => ((r - RSRQ_FLOOR_DB) / -RSRQ_FLOOR_DB).clamp(0.0, 1.0),
                    None => EMPTY_CELL_QUANTILE,
                };
                slice.push(v);
            }
        }
        slice
    }

    /// Current observation assembled from the stored history slices.
    pub fn observation(&self) -> Observation {
        let shape = self.config.observation_shape();
        let [n, t_len, f] = shape;
        let mut data = vec![0.0; n * t_len * f];
        if let Some(ep) = &self.episode {
            let offset = t_len - ep.history.len();
            for (k, slice) in ep.history.iter().enumerate() {
                let t = offset + k;
                for b in 0..n {
                    let dst = (b * t_len + t) * f;
                    data[dst..dst + f].copy_from_slice(&slice[b * f..(b + 1) * f]);
                }
            }
        }
        Observation { shape, data }
    }

    /// Applies one action, advances one interaction interval and returns the
    /// score change since the previous interaction as reward.
    ///
    /// An action that would leave the power range is ignored and costs
    /// `oob_penalty_factor`; with `oob_means_gameover` the episode ends at once
    /// without advancing time.
    pub fn step(&mut self, action: ActionId) -> Result<StepResult, EnvError> {
        let decoded = decode_action(action, NUM_ENBS).ok_or(EnvError::InvalidAction(action))?;
        let cfg = self.config.clone();
        let s = &cfg.settings;
        let ep = self.episode.as_mut().ok_or(EnvError::NotReset)?;
        if ep.done {
            return Err(EnvError::EpisodeDone);
        }
        let (lo, hi) = (to_tenths(cfg.radio.min_power_dbm), to_tenths(cfg.radio.max_power_dbm));
        let delta = s.step_size_tenths as i32;
        let target = match decoded {
            PowerAction::Noop => None,
            PowerAction::Decrease(b) => Some((b, ep.powers[b] - delta)),
            PowerAction::Increase(b) => Some((b, ep.powers[b] + delta)),
        };
        let oob = target.is_some_and(|(_, p)| p < lo || p > hi);
        let powers_dbm = |ep: &Episode| ep.powers.iter().map(|&p| from_tenths(p)).collect::<Vec<_>>();

        if oob && s.oob_means_gameover {
            ep.done = true;
            let info = StepInfo {
                t_ms: ep.sim.clock_ms(),
                score: ep.last_score,
                oob: true,
                terminated: true,
                powers_dbm: powers_dbm(ep),
                events: Vec::new(),
            };
            return Ok(StepResult { observation: self.observation(), reward: -s.oob_penalty_factor, done: true, info });
        }
        if let (Some((b, p)), false) = (target, oob) {
            ep.powers[b] = p;
            ep.sim.set_tx_power(b, from_tenths(p))?;
        }
        let events = ep.sim.advance(s.interaction_interval_ms)?;
        let score = ep.sim.score_now(&cfg.score)?.value;
        let mut reward = score - ep.last_score;
        if oob {
            reward -= s.oob_penalty_factor;
        }
        ep.last_score = score;
        ep.steps += 1;
        ep.done = ep.steps * s.interaction_interval_ms >= s.train_duration_ms;
        let done = ep.done;
        let info = StepInfo {
            t_ms: ep.sim.clock_ms(),
            score,
            oob,
            terminated: false,
            powers_dbm: powers_dbm(ep),
            events,
        };

        let ep_ref = self.episode.as_ref().expect("episode present");
        let slice = self.live_slice(ep_ref);
        let ep = self.episode.as_mut().expect("episode present");
        if ep.history.len() == s.history_len {
            ep.history.pop_front();
        }
        ep.history.push_back(slice);
        Ok(StepResult { observation: self.observation(), reward, done, info })
    }
}

impl Environment for RanEnv {
    fn observation_len(&self) -> usize {
        self.config.observation_shape().iter().product()
    }

    fn num_actions(&self) -> usize {
        RanEnv::num_actions(self)
    }

    fn observation_groups(&self) -> usize {
        NUM_ENBS
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, EnvError> {
        RanEnv::reset(self, seed).map(|o| o.data)
    }

    fn step(&mut self, action: usize) -> Result<Transition, EnvError> {
        let r = RanEnv::step(self, action)?;
        Ok(Transition {
            terminated: r.info.terminated,
            truncated: r.done && !r.info.terminated,
            final_score: r.done.then_some(r.info.score),
            observation: r.observation.data,
            reward: r.reward,
        })
    }
}

/// Handover events as `(ue, from, to)` with 0-based eNB indices.
pub(crate) fn handovers(events: &[SimEvent]) -> impl Iterator<Item = (u64, usize, usize, usize)> + '_ {
    events.iter().filter_map(|e| match e.kind {
        SimEventKind::Handover { ue, from, to } => Some((e.t_ms, ue, from, to)),
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ransim::sample_scenario;

    fn config(randomize: bool) -> EnvConfig {
        let settings = EnvSettings { randomize_init: randomize, ..Default::default() };
        EnvConfig::new(sample_scenario(21, 12)).with_settings(settings)
    }

    #[test]
    fn action_decoding() {
        assert_eq!(decode_action(0, 3), Some(PowerAction::Noop));
        assert_eq!(decode_action(1, 3), Some(PowerAction::Decrease(0)));
        assert_eq!(decode_action(2, 3), Some(PowerAction::Increase(0)));
        assert_eq!(decode_action(5, 3), Some(PowerAction::Decrease(2)));
        assert_eq!(decode_action(6, 3), Some(PowerAction::Increase(2)));
        assert_eq!(decode_action(7, 3), None);
        assert_eq!((0..10).filter(|&a| decode_action(a, 3).is_some()).count(), 7);
    }

    #[test]
    fn default_reset_uses_thirty_dbm() {
        let mut env = RanEnv::new(config(false)).unwrap();
        let obs = env.reset(99).unwrap();
        assert_eq!(env.powers_dbm().unwrap(), vec![30.0; 3]);
        assert_eq!(obs.shape, [3, 16, 2]);
        assert_eq!(obs.data.len(), 96);
        // only the newest timestep is live
        for b in 0..3 {
            assert_eq!(obs.at(b, 15, 0), 0.5);
            for t in 0..15 {
                assert_eq!(obs.at(b, t, 0), 0.0);
                assert_eq!(obs.at(b, t, 1), 0.0);
            }
        }
        let total: f64 = (0..3).map(|b| obs.at(b, 15, 1)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(env.simulator().unwrap().clock_ms(), 4000);
    }

    #[test]
    fn randomized_reset_is_reproducible() {
        let mut a = RanEnv::new(config(true)).unwrap();
        let mut b = RanEnv::new(config(true)).unwrap();
        a.reset(5).unwrap();
        b.reset(5).unwrap();
        let p = a.powers_dbm().unwrap();
        assert_eq!(p, b.powers_dbm().unwrap());
        assert!(p.iter().all(|x| (20.0..=40.0).contains(x)));
        b.reset(6).unwrap();
        assert_ne!(p, b.powers_dbm().unwrap());
    }

    #[test]
    fn oob_increase_ends_game() {
        let mut env = RanEnv::new(config(false)).unwrap();
        env.reset_with_powers(&[40.0, 30.0, 30.0]).unwrap();
        let r = env.step(2).unwrap();
        assert_eq!(r.reward, -1.0);
        assert!(r.done && r.info.terminated && r.info.oob);
        assert_eq!(env.powers_dbm().unwrap()[0], 40.0);
        assert!(matches!(env.step(0), Err(EnvError::EpisodeDone)));
    }

    #[test]
    fn oob_without_gameover_is_ignored_and_penalized() {
        let mut cfg = config(false);
        cfg.settings.oob_means_gameover = false;
        cfg.settings.oob_penalty_factor = 0.01;
        let mut env = RanEnv::new(cfg).unwrap();
        env.reset_with_powers(&[20.0, 30.0, 30.0]).unwrap();
        let before = env.last_score().unwrap();
        let r = env.step(1).unwrap();
        assert!(!r.done && r.info.oob);
        assert_eq!(env.powers_dbm().unwrap()[0], 20.0);
        assert!((r.reward - (r.info.score - before - 0.01)).abs() < 1e-12);
    }

    #[test]
    fn increase_then_decrease_restores_power() {
        let mut env = RanEnv::new(config(true)).unwrap();
        env.reset(3).unwrap();
        let p0 = env.powers_dbm().unwrap();
        let b = if p0[1] <= 39.0 { 1 } else { 2 };
        env.step(2 * b + 2).unwrap();
        env.step(2 * b + 1).unwrap();
        assert_eq!(env.powers_dbm().unwrap(), p0);
    }

    #[test]
    fn episode_length_and_invalid_actions() {
        let mut env = RanEnv::new(config(false)).unwrap();
        assert!(matches!(env.step(0), Err(EnvError::NotReset)));
        env.reset(0).unwrap();
        assert!(matches!(env.step(7), Err(EnvError::InvalidAction(7))));
        let mut n = 0;
        loop {
            n += 1;
            if env.step(0).unwrap().done {
                break;
            }
        }
        assert_eq!(n, 100);
    }

    #[test]
    fn history_shifts_without_recomputation() {
        let mut cfg = config(true);
        cfg.settings.history_len = 4;
        cfg.settings.rsrq_quantiles = 3;
        let mut env = RanEnv::new(cfg).unwrap();
        let mut seen = vec![env.reset(8).unwrap()];
        for a in [2, 4, 0, 5, 1, 6] {
            seen.push(env.step(a).unwrap().observation);
        }
        let f = 4;
        for k in 1..seen.len() {
            for lag in 1..4.min(k + 1) {
                for b in 0..3 {
                    for j in 0..f {
                        assert_eq!(seen[k].at(b, 3 - lag, j), seen[k - lag].at(b, 3, j));
                    }
                }
            }
        }
    }

    #[test]
    fn empty_cells_report_sentinel_quantiles() {
        let mut cfg = config(false);
        cfg.settings.rsrq_quantiles = 4;
        let mut env = RanEnv::new(cfg).unwrap();
        let obs = env.reset(1).unwrap();
        let load = env.simulator().unwrap().load();
        for b in 0..3 {
            for j in 2..5 {
                let v = obs.at(b, 15, j);
                if load[b] == 0 {
                    assert_eq!(v, -1.0);
                } else {
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = config(false);
        cfg.settings.train_duration_ms = 10_050;
        assert!(RanEnv::new(cfg).is_err());
        let mut cfg = config(false);
        cfg.settings.history_len = 0;
        assert!(RanEnv::new(cfg).is_err());
    }
}
