use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{distance, Point};

pub const NUM_ENBS: usize = 3;
/// Side of the equilateral eNB triangle.
pub const ENB_SPACING_M: f64 = 1000.0;

const MIN_CLUSTER_RADIUS_M: f64 = 50.0;
const MAX_CLUSTER_RADIUS_M: f64 = 300.0;
const MAX_CLUSTERS: usize = 3;

/// Static configuration of one eNB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnbConfig {
    /// 1-based identifier.
    pub id: usize,
    pub position: Point,
    /// Direction of the antenna main lobe, degrees counter-clockwise from +x.
    pub boresight_deg: f64,
    pub tx_power_dbm: f64,
    /// Which third of the band this eNB owns.
    pub subband_index: usize,
    pub bandwidth_hz: f64,
}

/// eNBs on the vertices of an equilateral triangle centred at the origin,
/// each pointing at the centroid and owning its own third of the band.
pub fn enb_layout(tx_power_dbm: f64, bandwidth_hz: f64) -> Vec<EnbConfig> {
    let r = arena_radius();
    (0..NUM_ENBS)
        .map(|i| {
            let angle = 90.0 + 120.0 * i as f64;
            let rad = angle.to_radians();
            EnbConfig {
                id: i + 1,
                position: [r * rad.cos(), r * rad.sin()],
                boresight_deg: angle - 180.0,
                tx_power_dbm,
                subband_index: i,
                bandwidth_hz,
            }
        })
        .collect()
}

/// Radius of the circumcircle of the eNB triangle, which bounds the arena.
pub fn arena_radius() -> f64 {
    ENB_SPACING_M / 3f64.sqrt()
}

pub fn in_arena(p: Point) -> bool {
    p[0].hypot(p[1]) <= arena_radius()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub center: Point,
    pub radius: f64,
    pub ue_count: usize,
}

/// Positions all UEs travel to before dwelling there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub targets: Vec<Point>,
    pub dwell_s: f64,
}

/// Deterministic description of a UE placement (and optional movement plan).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub ue_speed: f64,
    pub ue_positions: Vec<Point>,
    #[serde(default)]
    pub clusters: Vec<ClusterSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub waypoints: Vec<Waypoint>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario has no UEs")]
    NoUes,
    #[error("UE {0} lies outside the arena")]
    OutsideArena(usize),
    #[error("waypoint {0} has {1} targets, expected one per UE")]
    WaypointArity(usize, usize),
    #[error("UE speed must be positive when waypoints are given")]
    Speed,
    #[error("invalid scenario manifest: {0}")]
    Parse(String),
}

impl ScenarioSpec {
    pub fn num_ues(&self) -> usize {
        self.ue_positions.len()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.ue_positions.is_empty() {
            return Err(ScenarioError::NoUes);
        }
        if let Some(i) = self.ue_positions.iter().position(|&p| !in_arena(p)) {
            return Err(ScenarioError::OutsideArena(i));
        }
        for (k, w) in self.waypoints.iter().enumerate() {
            if w.targets.len() != self.num_ues() {
                return Err(ScenarioError::WaypointArity(k, w.targets.len()));
            }
        }
        if !self.waypoints.is_empty() && !(self.ue_speed > 0.0) {
            return Err(ScenarioError::Speed);
        }
        Ok(())
    }

    /// Longest straight-line distance any UE covers between two position sets.
    pub fn max_displacement(from: &[Point], to: &[Point]) -> f64 {
        from.iter()
            .zip(to)
            .map(|(&a, &b)| distance(a, b))
            .fold(0.0, f64::max)
    }
}

fn uniform_in_disc<R: Rng>(rng: &mut R, center: Point, radius: f64) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    [center[0] + r * theta.cos(), center[1] + r * theta.sin()]
}

/// Hierarchical UE placement: cluster centres, radii and sizes first, then
/// UE positions inside each cluster disc (rejection-sampled into the arena).
pub fn sample_scenario(seed: u64, num_ues: usize) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_clusters = rng.random_range(1..=MAX_CLUSTERS).min(num_ues.max(1));

    // random composition of num_ues into n_clusters positive parts
    let mut cuts: Vec<usize> = if num_ues > 1 && n_clusters > 1 {
        index::sample(&mut rng, num_ues - 1, n_clusters - 1)
            .into_iter()
            .map(|c| c + 1)
            .collect()
    } else {
        Vec::new()
    };
    cuts.sort_unstable();
    let mut counts = Vec::with_capacity(n_clusters);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(num_ues)) {
        counts.push(c - prev);
        prev = c;
    }

    let arena = arena_radius();
    let clusters: Vec<ClusterSpec> = counts
        .into_iter()
        .map(|ue_count| ClusterSpec {
            center: uniform_in_disc(&mut rng, [0.0, 0.0], arena),
            radius: rng.random_range(MIN_CLUSTER_RADIUS_M..=MAX_CLUSTER_RADIUS_M),
            ue_count,
        })
        .collect();

    let mut ue_positions = Vec::with_capacity(num_ues);
    for c in &clusters {
        for _ in 0..c.ue_count {
            let p = loop {
                let p = uniform_in_disc(&mut rng, c.center, c.radius);
                if in_arena(p) {
                    break p;
                }
            };
            ue_positions.push(p);
        }
    }

    ScenarioSpec {
        name: String::new(),
        seed,
        ue_speed: 0.0,
        ue_positions,
        clusters,
        waypoints: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_equilateral_and_faces_centroid() {
        let enbs = enb_layout(30.0, 5e6);
        assert_eq!(enbs.len(), 3);
        for i in 0..3 {
            let d = distance(enbs[i].position, enbs[(i + 1) % 3].position);
            assert!((d - 1000.0).abs() < 1e-9);
            let p = enbs[i].position;
            let to_center = (-p[1]).atan2(-p[0]).to_degrees();
            let diff = crate::radio::wrap_degrees(to_center - enbs[i].boresight_deg);
            assert!(diff.abs() < 1e-9);
        }
        let mut sub: Vec<_> = enbs.iter().map(|e| e.subband_index).collect();
        sub.sort();
        assert_eq!(sub, vec![0, 1, 2]);
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(sample_scenario(42, 12), sample_scenario(42, 12));
        assert_ne!(sample_scenario(42, 12), sample_scenario(43, 12));
    }

    #[test]
    fn sampled_scenarios_are_valid() {
        for seed in 0..300 {
            let s = sample_scenario(seed, 12);
            s.validate().unwrap();
            assert_eq!(s.num_ues(), 12);
            assert!((1..=3).contains(&s.clusters.len()));
            assert_eq!(s.clusters.iter().map(|c| c.ue_count).sum::<usize>(), 12);
            for c in &s.clusters {
                assert!(c.ue_count >= 1);
                assert!((50.0..=300.0).contains(&c.radius));
                assert!(in_arena(c.center));
            }
        }
    }

    #[test]
    fn single_ue_scenario() {
        let s = sample_scenario(7, 1);
        assert_eq!(s.num_ues(), 1);
        assert_eq!(s.clusters.len(), 1);
    }

    #[test]
    fn validation_errors() {
        let mut s = sample_scenario(1, 12);
        s.waypoints.push(Waypoint { targets: vec![[0.0, 0.0]], dwell_s: 1.0 });
        assert!(matches!(s.validate(), Err(ScenarioError::WaypointArity(0, 1))));
        s.waypoints.clear();
        s.ue_positions[3] = [2000.0, 0.0];
        assert!(matches!(s.validate(), Err(ScenarioError::OutsideArena(3))));
    }
}
