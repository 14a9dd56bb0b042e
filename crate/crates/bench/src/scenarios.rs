//! The six committed test scenarios and the seed scan that produced them.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, Context};
use ranbench_core::ransim::{sample_scenario, ScenarioSpec, Simulator};

use crate::config::BenchConfig;
use crate::offline::{grid_points, trial_score};

pub const NUM_UES: usize = 12;

const MANIFESTS: [(&str, &str); 6] = [
    ("TS1", include_str!("../scenarios/ts1.toml")),
    ("TS2", include_str!("../scenarios/ts2.toml")),
    ("TS3", include_str!("../scenarios/ts3.toml")),
    ("TS4", include_str!("../scenarios/ts4.toml")),
    ("TS5", include_str!("../scenarios/ts5.toml")),
    ("TS6", include_str!("../scenarios/ts6.toml")),
];

pub fn parse_manifest(text: &str) -> anyhow::Result<ScenarioSpec> {
    let spec: ScenarioSpec = toml::from_str(text)?;
    spec.validate()?;
    Ok(spec)
}

pub fn manifest_text(spec: &ScenarioSpec, note: &str) -> String {
    let mut out = String::new();
    for line in note.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(&toml::to_string(spec).expect("scenario serializes"));
    out
}

/// TS1..TS6, parsed from the manifests compiled into the binary.
pub fn test_scenarios() -> Vec<ScenarioSpec> {
    MANIFESTS
        .iter()
        .map(|(name, text)| {
            let spec = parse_manifest(text).unwrap_or_else(|e| panic!("bundled manifest {name}: {e:#}"));
            assert_eq!(spec.name, *name, "bundled manifest name");
            spec
        })
        .collect()
}

/// A bundled scenario by name (`TS3`), or a manifest file path.
pub fn resolve(name_or_path: &str) -> anyhow::Result<ScenarioSpec> {
    if let Some(s) = test_scenarios().into_iter().find(|s| s.name.eq_ignore_ascii_case(name_or_path)) {
        return Ok(s);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        let text = std::fs::read_to_string(path)?;
        return parse_manifest(&text).with_context(|| format!("manifest {}", path.display()));
    }
    bail!("unknown scenario '{name_or_path}' (expected TS1..TS6 or a manifest path)")
}

/// Resolves a comma-separated list; `all` means TS1..TS6.
pub fn resolve_list(list: &str) -> anyhow::Result<Vec<ScenarioSpec>> {
    if list.eq_ignore_ascii_case("all") {
        return Ok(test_scenarios());
    }
    list.split(',').map(|s| resolve(s.trim())).collect()
}

/// How a sampled scenario behaves under equal and gridded static powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Screening {
    pub seed: u64,
    /// Distinct serving eNBs after warmup with every eNB at the default power.
    pub enbs_used: usize,
    pub baseline: f64,
    pub grid_best: f64,
    pub grid_best_powers: Vec<f64>,
}

impl Screening {
    pub fn note(&self) -> String {
        format!(
            "seed {}: {} serving eNB(s) at equal power, baseline {:.6}, grid best {:.6} at {:?} dBm",
            self.seed, self.enbs_used, self.baseline, self.grid_best, self.grid_best_powers
        )
    }
}

pub fn serving_enbs(cfg: &BenchConfig, spec: &ScenarioSpec) -> anyhow::Result<usize> {
    let mut sim = Simulator::new(spec, cfg.radio.clone(), cfg.env.default_power_dbm)?;
    sim.advance(cfg.env.warmup_ms)?;
    Ok(sim.attachments().iter().flatten().collect::<BTreeSet<_>>().len())
}

pub fn screen(cfg: &BenchConfig, seed: u64) -> anyhow::Result<Screening> {
    let spec = sample_scenario(seed, NUM_UES);
    let enbs_used = serving_enbs(cfg, &spec)?;
    let p0 = cfg.env.default_power_dbm;
    let baseline = trial_score(cfg, &spec, &[p0, p0, p0])?;
    let (mut grid_best, mut grid_best_powers) = (f64::NEG_INFINITY, Vec::new());
    if enbs_used <= 2 {
        for p in grid_points(cfg) {
            let s = trial_score(cfg, &spec, &p)?;
            if s > grid_best {
                (grid_best, grid_best_powers) = (s, p);
            }
        }
    }
    Ok(Screening { seed, enbs_used, baseline, grid_best, grid_best_powers })
}

/// Scans seeds upwards from `start` and keeps the first `count` whose
/// equal-power attachment uses at most two eNBs and whose grid optimum
/// strictly beats the equal-power baseline.
pub fn select(cfg: &BenchConfig, start: u64, count: usize, max_seed: u64) -> anyhow::Result<Vec<(ScenarioSpec, Screening)>> {
    let mut out = Vec::new();
    for seed in start..max_seed {
        if out.len() == count {
            break;
        }
        let s = screen(cfg, seed)?;
        if s.enbs_used <= 2 && s.grid_best > s.baseline {
            let mut spec = sample_scenario(seed, NUM_UES);
            spec.name = format!("TS{}", out.len() + 1);
            out.push((spec, s));
        }
    }
    if out.len() < count {
        bail!("only {} qualifying seeds in {start}..{max_seed}", out.len());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_manifests_parse() {
        let ts = test_scenarios();
        assert_eq!(ts.len(), 6);
        for (i, s) in ts.iter().enumerate() {
            assert_eq!(s.name, format!("TS{}", i + 1));
            assert_eq!(s.num_ues(), NUM_UES);
            assert_eq!(*s, { let mut r = sample_scenario(s.seed, NUM_UES); r.name = s.name.clone(); r });
        }
    }

    #[test]
    fn manifest_round_trip() {
        let mut s = sample_scenario(3, NUM_UES);
        s.name = "x".into();
        assert_eq!(parse_manifest(&manifest_text(&s, "a\nb")).unwrap(), s);
    }

    #[test]
    fn bundled_scenarios_concentrate_load() {
        let cfg = BenchConfig::default();
        for s in test_scenarios() {
            assert!(serving_enbs(&cfg, &s).unwrap() <= 2, "{}", s.name);
        }
    }
}
