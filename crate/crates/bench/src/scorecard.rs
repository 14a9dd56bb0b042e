//! Per-scenario comparison of the equal-power baseline, grid and TPE optima,
//! and the RL agent's evaluation runs.

use std::fmt::Write as _;

use anyhow::bail;
use ranbench_core::study::StudyStore;

use crate::offline::{study_name, Method};
use crate::rl::rl_study_name;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRow {
    pub scenario: String,
    pub baseline: f64,
    pub grid_best: f64,
    pub tpe_best: f64,
    /// `(trial_id, score)` of every complete RL evaluation run.
    pub rl: Vec<(u64, f64)>,
}

impl ScenarioRow {
    fn sorted_rl(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.rl.iter().map(|r| r.1).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn rl_min(&self) -> Option<f64> {
        self.sorted_rl().first().copied()
    }

    pub fn rl_max(&self) -> Option<f64> {
        self.sorted_rl().last().copied()
    }

    pub fn rl_median(&self) -> Option<f64> {
        let v = self.sorted_rl();
        let n = v.len();
        match n {
            0 => None,
            _ if n % 2 == 1 => Some(v[n / 2]),
            _ => Some(0.5 * (v[n / 2 - 1] + v[n / 2])),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scorecard {
    pub rows: Vec<ScenarioRow>,
}

fn require(store: &StudyStore, study: &str) -> anyhow::Result<()> {
    if store.space(study).is_none() {
        bail!("missing study '{study}'");
    }
    if store.trials(study).all(|t| t.complete_score().is_none()) {
        bail!("study '{study}' has no complete trials");
    }
    Ok(())
}

impl Scorecard {
    /// Collects one row per scenario. `tpe_seed` selects the TPE study; when
    /// `rl_trials` is given the RL study must hold exactly that many runs.
    pub fn assemble(store: &StudyStore, scenarios: &[String], tpe_seed: u64, rl_trials: Option<usize>) -> anyhow::Result<Self> {
        let mut rows = Vec::new();
        for sc in scenarios {
            let best = |study: String| -> anyhow::Result<f64> {
                require(store, &study)?;
                let t = store.best_trial(&study)?;
                Ok(t.score.expect("best trial is complete"))
            };
            let base_study = study_name(sc, Method::Baseline, tpe_seed);
            let n_base = store.trials(&base_study).count();
            let baseline = best(base_study.clone())?;
            if n_base != 1 {
                bail!("study '{base_study}' should hold one trial, found {n_base}");
            }
            let grid_best = best(study_name(sc, Method::Grid, tpe_seed))?;
            let tpe_best = best(study_name(sc, Method::Tpe, tpe_seed))?;
            let rl_study = rl_study_name(sc);
            require(store, &rl_study)?;
            let rl: Vec<(u64, f64)> = store.trials(&rl_study).filter_map(|t| Some((t.trial_id, t.complete_score()?))).collect();
            if let Some(n) = rl_trials {
                if rl.len() != n {
                    bail!("study '{rl_study}' holds {} complete runs, expected {n}", rl.len());
                }
            }
            rows.push(ScenarioRow { scenario: sc.clone(), baseline, grid_best, tpe_best, rl });
        }
        Ok(Self { rows })
    }

    /// Tab-separated summary, one line per scenario.
    pub fn render(&self) -> String {
        let mut out = String::from("scenario\tbaseline\tgrid_best\ttpe_best\trl_trials\trl_min\trl_median\trl_max\n");
        let f = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{}",
                r.scenario,
                r.baseline,
                r.grid_best,
                r.tpe_best,
                r.rl.len(),
                f(r.rl_min()),
                f(r.rl_median()),
                f(r.rl_max())
            )
            .expect("writing to a string");
        }
        out
    }

    /// Long-form RL scores: `scenario, trial_id, score`.
    pub fn render_points(&self) -> String {
        let mut out = String::from("scenario\ttrial_id\tscore\n");
        for r in &self.rows {
            for (id, s) in &r.rl {
                writeln!(out, "{}\t{id}\t{s:.6}", r.scenario).expect("writing to a string");
            }
        }
        out
    }
}
