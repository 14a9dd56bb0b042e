//! Static-power studies: equal-power baseline, full grid, TPE and random search.

use std::fmt;
use std::time::Instant;

use anyhow::Context;
use rayon::prelude::*;
use ranbench_core::optimizer::{grid, random_sample, suggest, ParamDomain, ParamValue, Params, SearchSpace, TrialMetadata};
use ranbench_core::ransim::{ScenarioSpec, Simulator, NUM_ENBS};
use ranbench_core::study::StudyStore;

use crate::config::BenchConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Baseline,
    Grid,
    Tpe,
    Random,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Baseline => "baseline",
            Method::Grid => "grid",
            Method::Tpe => "tpe",
            Method::Random => "random",
        })
    }
}

/// `TS1/grid`, `TS1/baseline`; seeded methods carry their seed: `TS1/tpe/seed-0`.
pub fn study_name(scenario: &str, method: Method, seed: u64) -> String {
    match method {
        Method::Baseline | Method::Grid => format!("{scenario}/{method}"),
        Method::Tpe | Method::Random => format!("{scenario}/{method}/seed-{seed}"),
    }
}

pub fn power_param(b: usize) -> String {
    format!("p{}", b + 1)
}

pub fn power_space(cfg: &BenchConfig) -> SearchSpace {
    let (lo, hi) = (cfg.radio.min_power_dbm, cfg.radio.max_power_dbm);
    SearchSpace::new((0..NUM_ENBS).map(|b| ParamDomain::uniform(&power_param(b), lo, hi)).collect())
        .expect("power space is valid")
}

pub fn powers_of(params: &Params) -> anyhow::Result<Vec<f64>> {
    (0..NUM_ENBS)
        .map(|b| {
            let k = power_param(b);
            params.get(&k).and_then(ParamValue::as_f64).with_context(|| format!("trial lacks power '{k}'"))
        })
        .collect()
}

pub fn params_of(powers: &[f64]) -> Params {
    powers.iter().enumerate().map(|(b, &p)| (power_param(b), ParamValue::Float(p))).collect()
}

/// Score after warmup plus the trial duration with the powers held fixed.
pub fn trial_score(cfg: &BenchConfig, scenario: &ScenarioSpec, powers: &[f64]) -> anyhow::Result<f64> {
    let mut sim = Simulator::new(scenario, cfg.radio.clone(), cfg.env.default_power_dbm)?;
    for (b, &p) in powers.iter().enumerate() {
        sim.set_tx_power(b, p)?;
    }
    sim.advance(cfg.env.warmup_ms + cfg.offline.trial_duration_ms)?;
    Ok(sim.score_now(&cfg.score)?.value)
}

pub fn grid_points(cfg: &BenchConfig) -> Vec<Vec<f64>> {
    let levels: Vec<Vec<ParamValue>> =
        (0..NUM_ENBS).map(|_| cfg.offline.grid_levels_dbm.iter().map(|&p| ParamValue::Float(p)).collect()).collect();
    grid(&power_space(cfg), &levels)
        .expect("grid levels lie in the power range")
        .iter()
        .map(|p| powers_of(p).expect("grid point has every power"))
        .collect()
}

fn round_to(x: f64, step: f64) -> f64 {
    // the division keeps results like 27.3 exact in their shortest form
    (x / step).round() / (1.0 / step)
}

struct Outcome {
    params: Params,
    score: f64,
    wall_time_s: f64,
}

fn evaluate(cfg: &BenchConfig, scenario: &ScenarioSpec, params: Params) -> anyhow::Result<Outcome> {
    let start = Instant::now();
    let score = trial_score(cfg, scenario, &powers_of(&params)?)?;
    Ok(Outcome { params, score, wall_time_s: start.elapsed().as_secs_f64() })
}

/// Runs (or resumes) one offline study and returns its name. Trials already
/// in the store count towards `n_trials`; grid and baseline ignore it.
///
/// Grid and random candidates are fixed up front and evaluated in parallel on
/// at most `jobs` threads; results are appended in candidate order by this
/// thread alone. TPE is sequential.
pub fn run_offline(
    store: &mut StudyStore,
    cfg: &BenchConfig,
    scenario: &ScenarioSpec,
    method: Method,
    n_trials: usize,
    seed: u64,
    jobs: usize,
) -> anyhow::Result<String> {
    let name = study_name(&scenario.name, method, seed);
    let space = power_space(cfg);
    store.create_study(&name, &space)?;
    let done = store.trials(&name).count();
    let meta = |o: &Outcome| TrialMetadata { wall_time_s: o.wall_time_s, seed, ..TrialMetadata::default() };

    let candidates: Vec<Params> = match method {
        Method::Baseline => vec![params_of(&[cfg.env.default_power_dbm; NUM_ENBS])],
        Method::Grid => grid_points(cfg).iter().map(|p| params_of(p)).collect(),
        Method::Random => random_sample(&space, n_trials, seed)?
            .into_iter()
            .map(|p| params_of(&powers_of(&p).expect("sampled").iter().map(|&x| round_to(x, cfg.offline.resolution_db)).collect::<Vec<_>>()))
            .collect(),
        Method::Tpe => {
            for i in done..n_trials {
                let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
                let history: Vec<_> = store.trials(&name).cloned().collect();
                let raw = suggest(&space, &history, &cfg.tpe, s)?;
                let powers: Vec<f64> = powers_of(&raw)?.iter().map(|&x| round_to(x, cfg.offline.resolution_db)).collect();
                let o = evaluate(cfg, scenario, params_of(&powers))?;
                store.append_trial(&name, o.params.clone(), o.score, meta(&o))?;
            }
            return Ok(name);
        }
    };
    let pending = candidates.get(done..).unwrap_or_default();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let outcomes: Vec<anyhow::Result<Outcome>> =
        pool.install(|| pending.par_iter().map(|p| evaluate(cfg, scenario, p.clone())).collect());
    for o in outcomes {
        let o = o?;
        store.append_trial(&name, o.params.clone(), o.score, meta(&o))?;
    }
    Ok(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ranbench_core::ransim::sample_scenario;

    fn short() -> BenchConfig {
        let mut cfg = BenchConfig::default();
        cfg.offline.trial_duration_ms = 2000;
        cfg.env.warmup_ms = 1000;
        cfg
    }

    #[test]
    fn rounding_to_tenths() {
        assert_eq!(round_to(27.34, 0.1), 27.3);
        assert_eq!(round_to(39.96, 0.1), 40.0);
        assert_eq!(round_to(20.0, 0.1), 20.0);
    }

    #[test]
    fn names() {
        assert_eq!(study_name("TS2", Method::Grid, 9), "TS2/grid");
        assert_eq!(study_name("TS2", Method::Tpe, 9), "TS2/tpe/seed-9");
    }

    #[test]
    fn grid_is_full_product() {
        let pts = grid_points(&BenchConfig::default());
        assert_eq!(pts.len(), 125);
        assert_eq!(pts[0], vec![20.0, 20.0, 20.0]);
        assert_eq!(pts[1], vec![20.0, 20.0, 25.0]);
        assert_eq!(pts[124], vec![40.0, 40.0, 40.0]);
    }

    #[test]
    fn tpe_study_is_reproducible_and_resumable() {
        let cfg = short();
        let mut sc = sample_scenario(1, 12);
        sc.name = "X".into();
        let dir = tempfile::tempdir().unwrap();
        let mut a = StudyStore::open(dir.path().join("a.jsonl")).unwrap();
        let mut b = StudyStore::open(dir.path().join("b.jsonl")).unwrap();
        let name = run_offline(&mut a, &cfg, &sc, Method::Tpe, 14, 5, 1).unwrap();
        run_offline(&mut b, &cfg, &sc, Method::Tpe, 9, 5, 1).unwrap();
        run_offline(&mut b, &cfg, &sc, Method::Tpe, 14, 5, 1).unwrap();
        let strip = |s: &StudyStore| s.trials(&name).map(|t| (t.params.clone(), t.score)).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(strip(&a).len(), 14);
        for (p, _) in strip(&a) {
            for x in powers_of(&p).unwrap() {
                assert!((20.0..=40.0).contains(&x));
                assert_eq!(x, round_to(x, 0.1));
            }
        }
    }

    #[test]
    fn baseline_is_single_equal_power_trial() {
        let cfg = short();
        let mut sc = sample_scenario(2, 12);
        sc.name = "X".into();
        let dir = tempfile::tempdir().unwrap();
        let mut st = StudyStore::open(dir.path().join("s.jsonl")).unwrap();
        let name = run_offline(&mut st, &cfg, &sc, Method::Baseline, 50, 0, 1).unwrap();
        run_offline(&mut st, &cfg, &sc, Method::Baseline, 50, 0, 1).unwrap();
        let trials: Vec<_> = st.trials(&name).collect();
        assert_eq!(trials.len(), 1);
        assert_eq!(powers_of(&trials[0].params).unwrap(), vec![30.0; 3]);
        assert_eq!(trials[0].score, Some(trial_score(&cfg, &sc, &[30.0; 3]).unwrap()));
    }
}
