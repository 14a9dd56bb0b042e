use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::domain::{DomainKind, ParamDomain, ParamValue, Params, SearchSpace};
use super::parzen::TruncatedParzen;
use super::trial::TrialRecord;
use super::OptimizerError;

/// Settings of the TPE sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpeConfig {
    /// Trials sampled from the prior before the density model kicks in.
    pub n_startup: usize,
    /// Candidates drawn from `l(x)` per parameter.
    pub n_candidates: usize,
    /// Fraction of the history treated as "good" ...
    pub gamma_fraction: f64,
    /// ... capped at this many trials.
    pub gamma_cap: usize,
    pub prior_weight: f64,
    /// Smallest component width as a fraction of the domain span.
    pub min_bandwidth_frac: f64,
    /// Pseudo-count added to every category.
    pub categorical_smoothing: f64,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            n_startup: 10,
            n_candidates: 24,
            gamma_fraction: 0.1,
            gamma_cap: 25,
            prior_weight: 1.0,
            min_bandwidth_frac: 0.01,
            categorical_smoothing: 1.0,
        }
    }
}

impl TpeConfig {
    /// Number of good trials for a history of `n` (`n ≥ 2` gives a value in `[1, n-1]`).
    pub fn n_good(&self, n: usize) -> usize {
        let g = ((self.gamma_fraction * n as f64).ceil() as usize).min(self.gamma_cap);
        g.clamp(1, n.saturating_sub(1).max(1))
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: &str| Err(OptimizerError::Config(m.into()));
        if self.n_startup == 0 {
            return bad("n_startup must be at least 1");
        }
        if self.n_candidates == 0 {
            return bad("n_candidates must be at least 1");
        }
        if !(self.gamma_fraction > 0.0 && self.gamma_fraction <= 1.0) || self.gamma_cap == 0 {
            return bad("gamma must select at least one trial");
        }
        if !(self.prior_weight > 0.0 && self.min_bandwidth_frac > 0.0 && self.categorical_smoothing > 0.0) {
            return bad("prior weight, bandwidth floor and smoothing must be positive");
        }
        Ok(())
    }
}

/// Draws one value of `domain` from its prior.
pub fn sample_prior<R: Rng + ?Sized>(domain: &ParamDomain, rng: &mut R) -> ParamValue {
    match &domain.kind {
        DomainKind::Uniform { low, high } => ParamValue::Float((low + rng.random::<f64>() * (high - low)).min(*high)),
        DomainKind::LogUniform { low, high } => {
            let (a, b) = (low.ln(), high.ln());
            ParamValue::Float((a + rng.random::<f64>() * (b - a)).exp().clamp(*low, *high))
        }
        DomainKind::Categorical { choices } => choices[rng.random_range(0..choices.len())].clone(),
    }
}

fn sample_all_prior<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Params {
    let mut params = Params::new();
    for d in &space.params {
        if d.is_active(&params) {
            params.insert(d.name.clone(), sample_prior(d, rng));
        }
    }
    params
}

/// `n` independent prior samples.
pub fn random_sample(space: &SearchSpace, n: usize, seed: u64) -> Result<Vec<Params>, OptimizerError> {
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| sample_all_prior(space, &mut rng)).collect())
}

/// Full Cartesian product of `levels` (one list per parameter, in space
/// order), first parameter varying slowest. Conditions are ignored.
pub fn grid(space: &SearchSpace, levels: &[Vec<ParamValue>]) -> Result<Vec<Params>, OptimizerError> {
    space.validate()?;
    if levels.len() != space.params.len() {
        return Err(OptimizerError::LevelArity { expected: space.params.len(), got: levels.len() });
    }
    for (d, lv) in space.params.iter().zip(levels) {
        if let Some(v) = lv.iter().find(|v| !d.contains(v)) {
            return Err(OptimizerError::LevelOutOfDomain { name: d.name.clone(), value: v.to_string() });
        }
    }
    if levels.iter().any(Vec::is_empty) {
        return Ok(Vec::new());
    }
    let total: usize = levels.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; levels.len()];
    for _ in 0..total {
        out.push(
            space.params.iter().zip(levels).zip(&idx).map(|((d, lv), &i)| (d.name.clone(), lv[i].clone())).collect(),
        );
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < levels[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(out)
}

/// Ranks trials best first: higher score, then lower trial id.
fn rank(history: &mut [(&TrialRecord, f64)]) {
    history.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.trial_id.cmp(&b.0.trial_id)));
}

enum Estimator {
    Numeric { good: TruncatedParzen, bad: TruncatedParzen, log_scale: bool },
    Categorical { good: Vec<f64>, bad: Vec<f64>, choices: Vec<ParamValue> },
}

impl Estimator {
    fn fit(domain: &ParamDomain, good: &[&ParamValue], bad: &[&ParamValue], cfg: &TpeConfig) -> Self {
        match &domain.kind {
            DomainKind::Uniform { low, high } | DomainKind::LogUniform { low, high } => {
                let log_scale = matches!(domain.kind, DomainKind::LogUniform { .. });
                let tf = |x: f64| if log_scale { x.ln() } else { x };
                let (lo, hi) = (tf(*low), tf(*high));
                let xs = |vs: &[&ParamValue]| vs.iter().filter_map(|v| v.as_f64()).map(tf).collect::<Vec<_>>();
                let fit = |obs: &[f64]| TruncatedParzen::fit(obs, lo, hi, cfg.prior_weight, cfg.min_bandwidth_frac);
                Estimator::Numeric { good: fit(&xs(good)), bad: fit(&xs(bad)), log_scale }
            }
            DomainKind::Categorical { choices } => {
                let weights = |vs: &[&ParamValue]| {
                    let mut w = vec![cfg.categorical_smoothing; choices.len()];
                    for v in vs {
                        if let Some(i) = choices.iter().position(|c| c == *v) {
                            w[i] += 1.0;
                        }
                    }
                    let total: f64 = w.iter().sum();
                    w.into_iter().map(|x| x / total).collect::<Vec<_>>()
                };
                Estimator::Categorical { good: weights(good), bad: weights(bad), choices: choices.clone() }
            }
        }
    }

    /// Draws candidates from the good density and keeps the one with the
    /// largest `log l(x) - log g(x)`.
    fn best_candidate<R: Rng + ?Sized>(&self, n_candidates: usize, rng: &mut R) -> ParamValue {
        match self {
            Estimator::Numeric { good, bad, log_scale } => {
                let mut best = (f64::NEG_INFINITY, None);
                for _ in 0..n_candidates {
                    let x = good.sample(rng);
                    let ratio = good.log_pdf(x) - bad.log_pdf(x);
                    if best.1.is_none() || ratio > best.0 {
                        best = (ratio, Some(x));
                    }
                }
                let x = best.1.expect("at least one candidate");
                ParamValue::Float(if *log_scale { x.exp().clamp(good.low.exp(), good.high.exp()) } else { x })
            }
            Estimator::Categorical { good, bad, choices } => {
                let mut best = (f64::NEG_INFINITY, None);
                for _ in 0..n_candidates {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut k = good.len() - 1;
                    for (i, w) in good.iter().enumerate() {
                        acc += w;
                        if u < acc {
                            k = i;
                            break;
                        }
                    }
                    let ratio = good[k].ln() - bad[k].ln();
                    if best.1.is_none() || ratio > best.0 {
                        best = (ratio, Some(k));
                    }
                }
                choices[best.1.expect("at least one candidate")].clone()
            }
        }
    }
}

/// Suggests the next parameter assignment (maximization).
///
/// Below `n_startup` complete trials every parameter comes from its prior.
/// After that each active parameter is modelled independently from the
/// complete trials that contain it.
pub fn suggest(
    space: &SearchSpace,
    history: &[TrialRecord],
    cfg: &TpeConfig,
    seed: u64,
) -> Result<Params, OptimizerError> {
    space.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let complete: Vec<(&TrialRecord, f64)> =
        history.iter().filter_map(|t| t.complete_score().map(|s| (t, s))).collect();
    if complete.len() < cfg.n_startup {
        return Ok(sample_all_prior(space, &mut rng));
    }

    let mut params = Params::new();
    for d in &space.params {
        if !d.is_active(&params) {
            continue;
        }
        let mut relevant: Vec<(&TrialRecord, f64)> =
            complete.iter().copied().filter(|(t, _)| t.params.contains_key(&d.name)).collect();
        if relevant.len() < 2 {
            params.insert(d.name.clone(), sample_prior(d, &mut rng));
            continue;
        }
        rank(&mut relevant);
        let n_good = cfg.n_good(relevant.len());
        let values: Vec<&ParamValue> = relevant.iter().map(|(t, _)| &t.params[&d.name]).collect();
        let (good, bad) = values.split_at(n_good);
        let est = Estimator::fit(d, good, bad, cfg);
        params.insert(d.name.clone(), est.best_candidate(cfg.n_candidates, &mut rng));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::TrialMetadata;

    fn quad_space() -> SearchSpace {
        SearchSpace::new(vec![ParamDomain::uniform("x", 0.0, 1.0)]).unwrap()
    }

    fn record(id: u64, x: f64, score: f64) -> TrialRecord {
        let mut p = Params::new();
        p.insert("x".into(), x.into());
        TrialRecord::new("s", id, p, score, TrialMetadata::default())
    }

    #[test]
    fn gamma_schedule() {
        let cfg = TpeConfig::default();
        assert_eq!(cfg.n_good(2), 1);
        assert_eq!(cfg.n_good(10), 1);
        assert_eq!(cfg.n_good(11), 2);
        assert_eq!(cfg.n_good(60), 6);
        assert_eq!(cfg.n_good(1000), 25);
        for n in 2..300 {
            let g = cfg.n_good(n);
            assert!(g >= 1 && g < n);
        }
    }

    #[test]
    fn startup_and_singleton_categorical() {
        let space = SearchSpace::new(vec![ParamDomain::categorical("c", ["a".into()])]).unwrap();
        for seed in 0..10 {
            let p = suggest(&space, &[], &TpeConfig::default(), seed).unwrap();
            assert_eq!(p["c"], ParamValue::Str("a".into()));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let hist: Vec<_> = (0..20).map(|i| record(i, i as f64 / 20.0, -(i as f64 / 20.0 - 0.3).powi(2))).collect();
        let a = suggest(&quad_space(), &hist, &TpeConfig::default(), 9).unwrap();
        let b = suggest(&quad_space(), &hist, &TpeConfig::default(), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn equal_scores_do_not_break_the_model() {
        let hist: Vec<_> = (0..30).map(|i| record(i, (i as f64 * 0.37) % 1.0, 1.0)).collect();
        for seed in 0..50 {
            let p = suggest(&quad_space(), &hist, &TpeConfig::default(), seed).unwrap();
            let x = p["x"].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn failed_trials_are_ignored() {
        let mut hist: Vec<_> = (0..12).map(|i| record(i, i as f64 / 12.0, 0.0)).collect();
        hist.push(record(12, 0.5, f64::NAN));
        assert_eq!(hist[12].state, crate::optimizer::TrialState::Failed);
        assert!(suggest(&quad_space(), &hist, &TpeConfig::default(), 0).is_ok());
    }

    #[test]
    fn log_uniform_suggestions_in_bounds() {
        let space = SearchSpace::new(vec![ParamDomain::log_uniform("lr", 1e-5, 1.0)]).unwrap();
        let mut hist = Vec::new();
        for i in 0..40u64 {
            let p = suggest(&space, &hist, &TpeConfig::default(), i).unwrap();
            let lr = p["lr"].as_f64().unwrap();
            assert!((1e-5..=1.0).contains(&lr));
            hist.push(TrialRecord::new("s", i, p, -(lr.log10() + 3.0).abs(), TrialMetadata::default()));
        }
    }

    #[test]
    fn conditional_branches() {
        let space = SearchSpace::new(vec![
            ParamDomain::categorical("algo", ["A2C".into(), "PPO".into()]),
            ParamDomain::categorical("use_rms_prop", [false.into(), true.into()]).when("algo", "A2C"),
            ParamDomain::categorical("clip_range", [0.1.into(), 0.2.into()]).when("algo", "PPO"),
        ])
        .unwrap();
        let mut hist = Vec::new();
        for i in 0..40u64 {
            let p = suggest(&space, &hist, &TpeConfig::default(), i).unwrap();
            space.check(&p).unwrap();
            let score = if p["algo"].as_str() == Some("PPO") { 1.0 } else { 0.0 };
            hist.push(TrialRecord::new("s", i, p, score, TrialMetadata::default()));
        }
    }

    #[test]
    fn grid_product() {
        let space = SearchSpace::new(vec![
            ParamDomain::uniform("p1", 20.0, 40.0),
            ParamDomain::uniform("p2", 20.0, 40.0),
            ParamDomain::uniform("p3", 20.0, 40.0),
        ])
        .unwrap();
        let lv: Vec<ParamValue> = [20.0, 25.0, 30.0, 35.0, 40.0].into_iter().map(ParamValue::from).collect();
        let g = grid(&space, &[lv.clone(), lv.clone(), lv.clone()]).unwrap();
        assert_eq!(g.len(), 125);
        assert_eq!(g[0]["p3"], 20.0.into());
        assert_eq!(g[1]["p3"], 25.0.into());
        assert_eq!(g[5]["p2"], 25.0.into());
        for (i, a) in g.iter().enumerate() {
            for b in &g[..i] {
                assert_ne!(a, b);
            }
        }
        let single = grid(&space, &[vec![20.0.into()], vec![20.0.into()], vec![20.0.into()]]).unwrap();
        assert_eq!(single.len(), 1);
        assert!(grid(&space, &[vec![50.0.into()], lv.clone(), lv]).is_err());
    }

    #[test]
    fn random_sample_counts() {
        assert!(random_sample(&quad_space(), 0, 1).unwrap().is_empty());
        assert_eq!(random_sample(&quad_space(), 5, 1).unwrap(), random_sample(&quad_space(), 5, 1).unwrap());
    }
}
