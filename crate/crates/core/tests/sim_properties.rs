use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ranbench_core::envproto::{EnvConfig, RanEnv};
use ranbench_core::radio::RadioParams;
use ranbench_core::ransim::*;
use ranbench_core::scoring::ScoreParams;

fn cluster_at(center: Point, n: usize, radius: f64) -> Vec<Point> {
    (0..n)
        .map(|i| {
            let a = i as f64 / n as f64 * std::f64::consts::TAU;
            [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
        })
        .collect()
}

fn static_scenario(ue_positions: Vec<Point>) -> ScenarioSpec {
    ScenarioSpec { name: String::new(), seed: 0, ue_speed: 0.0, ue_positions, clusters: Vec::new(), waypoints: Vec::new() }
}

#[test]
fn balanced_split_beats_concentration() {
    let enbs = enb_layout(30.0, RadioParams::default().bandwidth_hz);
    // Four UEs a few metres in front of each eNB versus all twelve in front of eNB 1.
    let near = |b: usize| {
        let p = enbs[b].position;
        [p[0] * 0.9, p[1] * 0.9]
    };
    let balanced: Vec<Point> = (0..3).flat_map(|b| cluster_at(near(b), 4, 5.0)).collect();
    let piled = cluster_at(near(0), 12, 5.0);
    let score = |pos: Vec<Point>| {
        let mut sim = Simulator::new(&static_scenario(pos), RadioParams::default(), 30.0).unwrap();
        sim.advance(8000).unwrap();
        sim.score_now(&ScoreParams::default()).unwrap().value
    };
    let (b, p) = (score(balanced), score(piled));
    assert!(b > p, "balanced {b} vs concentrated {p}");
}

#[test]
fn data_sinr_ignores_other_enbs() {
    let s = sample_scenario(21, 12);
    let mut sim = Simulator::new(&s, RadioParams::default(), 30.0).unwrap();
    sim.advance(4000).unwrap();
    let before: Vec<_> = (0..12).map(|u| sim.measure(u).unwrap()).collect();
    let att = sim.attachments().to_vec();
    for b in 0..3 {
        sim.set_tx_power(b, if b == 0 { 23.0 } else { 37.0 }).unwrap();
    }
    for u in 0..12 {
        let after = sim.measure(u).unwrap();
        let serving = att[u].unwrap();
        for b in 0..3 {
            if b != serving {
                continue;
            }
            let shift = sim.tx_powers()[b] - 30.0;
            let ratio = 10.0 * (after[b].sinr_data / before[u][b].sinr_data).log10();
            assert!((ratio - shift).abs() < 1e-9);
        }
    }
}

#[test]
fn a2_gate_blocks_handover_with_good_serving_quality() {
    // A UE close to eNB 1 has serving RSRQ near 0 dB, far above the A2 threshold.
    let enbs = enb_layout(30.0, RadioParams::default().bandwidth_hz);
    let p = enbs[0].position;
    let mut sim = Simulator::new(&static_scenario(vec![[p[0] * 0.95, p[1] * 0.95]]), RadioParams::default(), 30.0).unwrap();
    sim.advance(1000).unwrap();
    assert_eq!(sim.attachments()[0], Some(0));
    sim.set_tx_power(1, 40.0).unwrap();
    sim.set_tx_power(2, 40.0).unwrap();
    let events = sim.advance(3000).unwrap();
    assert!(!events.iter().any(|e| matches!(e.kind, SimEventKind::Handover { .. })));
    assert!(sim.measure(0).unwrap()[0].rsrq_db > -6.0);
}

#[test]
fn measurement_db_linear_round_trip() {
    let s = sample_scenario(2, 12);
    let mut sim = Simulator::new(&s, RadioParams::default(), 30.0).unwrap();
    sim.advance(100).unwrap();
    for u in 0..12 {
        for m in sim.measure(u).unwrap() {
            for v in [m.rsrp_dbm, m.rssi_dbm, m.rsrq_db] {
                let back = ranbench_core::radio::linear_to_db(ranbench_core::radio::db_to_linear(v));
                assert!((back - v).abs() <= 1e-9 * v.abs().max(1.0));
            }
            assert!(m.rsrq_db <= 0.0 && m.sinr_data >= 0.0);
        }
    }
}

#[test]
fn random_episodes_telescope() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for ep in 0..10 {
        let mut cfg = EnvConfig::new(sample_scenario(100 + ep, 12));
        cfg.settings.train_duration_ms = 3000;
        cfg.settings.oob_means_gameover = false;
        let mut env = RanEnv::new(cfg).unwrap();
        env.reset(ep).unwrap();
        let start = env.initial_score().unwrap();
        let mut sum = 0.0;
        let mut oob = false;
        loop {
            let r = env.step(rng.random_range(0..7)).unwrap();
            oob |= r.info.oob;
            sum += r.reward + if r.info.oob { 1.0 } else { 0.0 };
            if r.done {
                assert!((sum - (r.info.score - start)).abs() <= 1e-9, "oob seen: {oob}");
                break;
            }
        }
    }
}

#[test]
fn replay_is_exact() {
    let s = sample_scenario(5, 12);
    let run = || {
        let mut sim = Simulator::new(&s, RadioParams::default(), 30.0).unwrap();
        let mut log = Vec::new();
        for k in 0..50 {
            sim.set_tx_power(k % 3, 20.0 + (k % 21) as f64).unwrap();
            log.extend(sim.advance(100).unwrap());
            log.push(SimEvent { t_ms: sim.clock_ms(), kind: SimEventKind::DwellStart { index: 0 } });
        }
        (log, sim.score_now(&ScoreParams::default()).unwrap().value, (0..12).map(|u| sim.window_bytes(u, sim.clock_ms(), 2000)).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}
