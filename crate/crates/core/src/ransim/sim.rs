use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::scenario::{enb_layout, EnbConfig, ScenarioSpec, Waypoint};
use super::{distance, Point};
use crate::radio::{self, RadioParams};
use crate::scoring::{self, ScoreError, ScoreParams, ScoreSnapshot};

/// Per-eNB radio measurement at one UE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkMeasurement {
    pub rsrp_dbm: f64,
    pub rssi_dbm: f64,
    pub rsrq_db: f64,
    /// Data-plane SINR (linear) were this eNB serving; hard reuse leaves only noise.
    pub sinr_data: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimEventKind {
    Attach { ue: usize, enb: usize },
    Handover { ue: usize, from: usize, to: usize },
    /// All UEs reached the targets of waypoint `index` and start dwelling.
    DwellStart { index: usize },
    DwellEnd { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimEvent {
    pub t_ms: u64,
    pub kind: SimEventKind,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("advance of {dt} ms is not a multiple of the {tick} ms tick")]
    TickMultiple { dt: u64, tick: u64 },
    #[error("eNB index {0} out of range")]
    NoSuchEnb(usize),
    #[error("UE index {0} out of range")]
    NoSuchUe(usize),
    #[error("transmit power must be finite")]
    NonFinitePower,
    #[error("history before t={0} ms has been discarded")]
    HistoryExpired(u64),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Scenario(#[from] super::ScenarioError),
}

#[derive(Debug, Clone, Copy)]
struct HandoverTimer {
    since_ms: u64,
}

#[derive(Debug, Clone)]
enum Phase {
    Travel,
    Dwell { until_ms: u64 },
    Finished,
}

#[derive(Debug, Clone)]
struct Mobility {
    schedule: Vec<Waypoint>,
    speed: f64,
    index: usize,
    phase: Phase,
}

impl Mobility {
    fn new(schedule: Vec<Waypoint>, speed: f64) -> Self {
        let phase = if schedule.is_empty() { Phase::Finished } else { Phase::Travel };
        Self { schedule, speed, index: 0, phase }
    }
}

/// Live network state. One instance per worker; not shared across threads.
#[derive(Debug, Clone)]
pub struct Simulator {
    radio: RadioParams,
    enbs: Vec<EnbConfig>,
    ue_positions: Vec<Point>,
    /// Antenna gain minus path loss per (UE, eNB), refreshed when UEs move.
    coupling_db: Vec<Vec<f64>>,
    attachments: Vec<Option<usize>>,
    handover_timers: Vec<Option<HandoverTimer>>,
    rx_history: Vec<VecDeque<(u64, f64)>>,
    retention_ms: u64,
    clock_ms: u64,
    mobility: Mobility,
}

impl Simulator {
    /// Builds a simulator with every eNB at `tx_power_dbm` and no UE attached yet.
    pub fn new(scenario: &ScenarioSpec, radio: RadioParams, tx_power_dbm: f64) -> Result<Self, SimError> {
        scenario.validate()?;
        let enbs = enb_layout(tx_power_dbm, radio.bandwidth_hz);
        let n = scenario.num_ues();
        let mut sim = Self {
            enbs,
            ue_positions: scenario.ue_positions.clone(),
            coupling_db: vec![Vec::new(); n],
            attachments: vec![None; n],
            handover_timers: vec![None; n],
            rx_history: vec![VecDeque::new(); n],
            retention_ms: 10_000,
            clock_ms: 0,
            mobility: Mobility::new(scenario.waypoints.clone(), scenario.ue_speed),
            radio,
        };
        for ue in 0..n {
            sim.refresh_coupling(ue);
        }
        Ok(sim)
    }

    pub fn radio(&self) -> &RadioParams {
        &self.radio
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    pub fn num_ues(&self) -> usize {
        self.ue_positions.len()
    }

    pub fn enbs(&self) -> &[EnbConfig] {
        &self.enbs
    }

    pub fn ue_positions(&self) -> &[Point] {
        &self.ue_positions
    }

    pub fn attachments(&self) -> &[Option<usize>] {
        &self.attachments
    }

    pub fn tx_powers(&self) -> Vec<f64> {
        self.enbs.iter().map(|e| e.tx_power_dbm).collect()
    }

    /// How long delivery history is kept behind the clock.
    pub fn set_retention_ms(&mut self, retention_ms: u64) {
        self.retention_ms = retention_ms;
    }

    pub fn set_tx_power(&mut self, enb: usize, dbm: f64) -> Result<(), SimError> {
        if !dbm.is_finite() {
            return Err(SimError::NonFinitePower);
        }
        self.enbs.get_mut(enb).ok_or(SimError::NoSuchEnb(enb))?.tx_power_dbm = dbm;
        Ok(())
    }

    /// Number of UEs attached to each eNB.
    pub fn load(&self) -> Vec<usize> {
        let mut load = vec![0; self.enbs.len()];
        for b in self.attachments.iter().flatten() {
            load[*b] += 1;
        }
        load
    }

    /// Index of the waypoint the UEs are currently dwelling at, if any.
    pub fn dwelling_at(&self) -> Option<usize> {
        match self.mobility.phase {
            Phase::Dwell { .. } => Some(self.mobility.index),
            _ => None,
        }
    }

    fn refresh_coupling(&mut self, ue: usize) {
        let p = self.ue_positions[ue];
        let r = &self.radio;
        self.coupling_db[ue] = self
            .enbs
            .iter()
            .map(|e| {
                let d = distance(p, e.position);
                let azimuth = (p[1] - e.position[1]).atan2(p[0] - e.position[0]).to_degrees();
                let gain = radio::antenna_gain(azimuth - e.boresight_deg, r.beamwidth_deg, r.max_attenuation_db);
                let loss = radio::pathloss_with(d, r.pathloss_intercept_db, r.pathloss_slope_db, r.min_distance_m);
                gain - loss
            })
            .collect();
    }

    /// Measurements of every eNB at UE `ue`.
    pub fn measure(&self, ue: usize) -> Result<Vec<LinkMeasurement>, SimError> {
        if ue >= self.num_ues() {
            return Err(SimError::NoSuchUe(ue));
        }
        Ok(self.measure_unchecked(ue))
    }

    fn measure_unchecked(&self, ue: usize) -> Vec<LinkMeasurement> {
        let rsrp: Vec<f64> = self
            .enbs
            .iter()
            .zip(&self.coupling_db[ue])
            .map(|(e, c)| e.tx_power_dbm + c)
            .collect();
        let noise_meas = radio::db_to_linear(self.radio.measurement_noise_dbm());
        let noise_data = radio::db_to_linear(self.radio.data_noise_dbm());
        let rx_lin: Vec<f64> = rsrp.iter().map(|&p| radio::db_to_linear(p)).collect();
        let rssi = radio::linear_to_db(rx_lin.iter().sum::<f64>() + noise_meas);
        rsrp.iter()
            .zip(&rx_lin)
            .map(|(&p, &lin)| LinkMeasurement {
                rsrp_dbm: p,
                rssi_dbm: rssi,
                rsrq_db: (p - rssi).min(0.0),
                sinr_data: lin / noise_data,
            })
            .collect()
    }

    /// Initial attachment by strongest RSRP, then A2/A4 RSRQ handovers once the
    /// trigger condition has held for the time-to-trigger.
    pub fn update_attachment(&mut self) -> Vec<SimEvent> {
        self.update_attachment_at(self.clock_ms)
    }

    fn update_attachment_at(&mut self, now: u64) -> Vec<SimEvent> {
        let mut events = Vec::new();
        for ue in 0..self.num_ues() {
            let m = self.measure_unchecked(ue);
            match self.attachments[ue] {
                None => {
                    let best = argmax(m.iter().map(|x| x.rsrp_dbm));
                    self.attachments[ue] = Some(best);
                    self.handover_timers[ue] = None;
                    events.push(SimEvent { t_ms: now, kind: SimEventKind::Attach { ue, enb: best } });
                }
                Some(serving) => {
                    let s = m[serving].rsrq_db;
                    let neighbour = argmax(
                        m.iter()
                            .enumerate()
                            .map(|(b, x)| if b == serving { f64::NEG_INFINITY } else { x.rsrq_db }),
                    );
                    let triggered = neighbour != serving
                        && s < self.radio.a2_threshold_db
                        && m[neighbour].rsrq_db > s + self.radio.a4_offset_db;
                    if !triggered {
                        self.handover_timers[ue] = None;
                        continue;
                    }
                    let since = self.handover_timers[ue].get_or_insert(HandoverTimer { since_ms: now }).since_ms;
                    if now - since >= self.radio.time_to_trigger_ms {
                        self.attachments[ue] = Some(neighbour);
                        self.handover_timers[ue] = None;
                        events.push(SimEvent {
                            t_ms: now,
                            kind: SimEventKind::Handover { ue, from: serving, to: neighbour },
                        });
                    }
                }
            }
        }
        events
    }

    /// Delivers `dt_ms` worth of traffic at the current attachments, logging
    /// bytes at `clock + dt`. Returns bytes per UE.
    pub fn deliver_traffic(&mut self, dt_ms: u64) -> Vec<f64> {
        let load = self.load();
        let noise_data = radio::db_to_linear(self.radio.data_noise_dbm());
        let stamp = self.clock_ms + dt_ms;
        let dt_s = dt_ms as f64 / 1000.0;
        let mut out = vec![0.0; self.num_ues()];
        for ue in 0..self.num_ues() {
            let Some(b) = self.attachments[ue] else { continue };
            let enb = &self.enbs[b];
            let share = enb.bandwidth_hz / 3.0 / load[b] as f64;
            let sinr = radio::db_to_linear(enb.tx_power_dbm + self.coupling_db[ue][b]) / noise_data;
            let rate = radio::capped_rate(share, sinr, self.radio.se_cap, self.radio.cbr_rate_bps);
            let bytes = rate * dt_s / 8.0;
            out[ue] = bytes;
            let log = &mut self.rx_history[ue];
            log.push_back((stamp, bytes));
            while log.front().is_some_and(|&(t, _)| t + self.retention_ms <= stamp) {
                log.pop_front();
            }
        }
        out
    }

    fn move_ues(&mut self, dt_ms: u64, events: &mut Vec<SimEvent>) {
        let now = self.clock_ms + dt_ms;
        match self.mobility.phase {
            Phase::Finished => {}
            Phase::Travel => {
                let step = self.mobility.speed * dt_ms as f64 / 1000.0;
                let targets = self.mobility.schedule[self.mobility.index].targets.clone();
                let mut arrived = true;
                for ue in 0..self.num_ues() {
                    let (p, t) = (self.ue_positions[ue], targets[ue]);
                    let d = distance(p, t);
                    if d == 0.0 {
                        continue;
                    }
                    self.ue_positions[ue] = if d <= step {
                        t
                    } else {
                        arrived = false;
                        [p[0] + (t[0] - p[0]) * step / d, p[1] + (t[1] - p[1]) * step / d]
                    };
                    self.refresh_coupling(ue);
                }
                if arrived {
                    let w = &self.mobility.schedule[self.mobility.index];
                    let dwell = (w.dwell_s * 1000.0).round() as u64;
                    self.mobility.phase = Phase::Dwell { until_ms: now + dwell };
                    events.push(SimEvent { t_ms: now, kind: SimEventKind::DwellStart { index: self.mobility.index } });
                }
            }
            Phase::Dwell { until_ms } => {
                if now >= until_ms {
                    events.push(SimEvent { t_ms: now, kind: SimEventKind::DwellEnd { index: self.mobility.index } });
                    self.mobility.index += 1;
                    self.mobility.phase = if self.mobility.index < self.mobility.schedule.len() {
                        Phase::Travel
                    } else {
                        Phase::Finished
                    };
                    self.move_ues(dt_ms, events);
                }
            }
        }
    }

    /// Runs the simulation forward by `dt_ms`, one tick at a time: movement,
    /// measurement and attachment, traffic delivery, clock.
    pub fn advance(&mut self, dt_ms: u64) -> Result<Vec<SimEvent>, SimError> {
        let tick = self.radio.tick_ms;
        if tick == 0 || !dt_ms.is_multiple_of(tick) {
            return Err(SimError::TickMultiple { dt: dt_ms, tick });
        }
        let mut events = Vec::new();
        for _ in 0..dt_ms / tick {
            self.move_ues(tick, &mut events);
            // attachment decisions are stamped with the end of the tick
            events.extend(self.update_attachment_at(self.clock_ms + tick));
            self.deliver_traffic(tick);
            self.clock_ms += tick;
        }
        Ok(events)
    }

    /// Bytes UE `ue` received in `(t - window, t]`.
    pub fn window_bytes(&self, ue: usize, t_ms: u64, window_ms: u64) -> f64 {
        let start = t_ms.saturating_sub(window_ms);
        self.rx_history[ue]
            .iter()
            .filter(|&&(t, _)| t > start && t <= t_ms)
            .map(|&(_, b)| b)
            .sum()
    }

    /// Sum of UE experiences over the window ending at `t_ms`.
    pub fn total_score(&self, t_ms: u64, params: &ScoreParams) -> Result<ScoreSnapshot, SimError> {
        params.validate()?;
        if t_ms > self.clock_ms {
            return Err(ScoreError::Future { requested: t_ms, clock: self.clock_ms }.into());
        }
        let truncated = t_ms < params.window_ms;
        let start = t_ms.saturating_sub(params.window_ms);
        if self.clock_ms.saturating_sub(self.retention_ms) > start {
            return Err(SimError::HistoryExpired(start));
        }
        let bytes: Vec<f64> = (0..self.num_ues())
            .map(|ue| self.window_bytes(ue, t_ms, params.window_ms))
            .collect();
        Ok(ScoreSnapshot {
            t_ms,
            value: scoring::total_experience(&bytes, params.alpha, params.reference_bytes),
            truncated,
        })
    }

    pub fn score_now(&self, params: &ScoreParams) -> Result<ScoreSnapshot, SimError> {
        self.total_score(self.clock_ms, params)
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ransim::sample_scenario;

    fn scenario(points: Vec<Point>) -> ScenarioSpec {
        ScenarioSpec {
            name: String::new(),
            seed: 0,
            ue_speed: 0.0,
            ue_positions: points,
            clusters: Vec::new(),
            waypoints: Vec::new(),
        }
    }

    fn quiet_radio() -> RadioParams {
        // push noise far below any received power
        RadioParams { thermal_noise_dbm_per_hz: -400.0, ..Default::default() }
    }

    #[test]
    fn equidistant_ue_sees_equal_shares() {
        let sim = Simulator::new(&scenario(vec![[0.0, 0.0]]), quiet_radio(), 30.0).unwrap();
        for m in sim.measure(0).unwrap() {
            assert!((m.rsrq_db + 10.0 * 3f64.log10()).abs() < 1e-9, "{m:?}");
        }
    }

    #[test]
    fn single_dominant_enb_gives_zero_rsrq() {
        let mut sim = Simulator::new(&scenario(vec![[0.0, 0.0]]), quiet_radio(), 30.0).unwrap();
        // other eNBs effectively switched off
        sim.set_tx_power(1, -500.0).unwrap();
        sim.set_tx_power(2, -500.0).unwrap();
        let m = sim.measure(0).unwrap();
        assert!(m[0].rsrq_db.abs() < 1e-9);
        assert!(m.iter().all(|x| x.rsrq_db <= 0.0 && x.sinr_data >= 0.0));
    }

    #[test]
    fn serving_power_shifts_sinr_exactly() {
        let mut sim = Simulator::new(&scenario(vec![[10.0, 200.0]]), RadioParams::default(), 30.0).unwrap();
        let before = sim.measure(0).unwrap();
        sim.set_tx_power(0, 40.0).unwrap();
        let after = sim.measure(0).unwrap();
        let gain = radio::linear_to_db(after[0].sinr_data) - radio::linear_to_db(before[0].sinr_data);
        assert!((gain - 10.0).abs() < 1e-9);
        // other eNBs' data SINR is untouched by eNB 0's power
        assert_eq!(before[1].sinr_data, after[1].sinr_data);
        assert_eq!(before[2].sinr_data, after[2].sinr_data);
    }

    #[test]
    fn attaches_to_nearest_at_equal_power() {
        let enb0 = enb_layout(30.0, 5e6)[0].position;
        let p = [enb0[0], enb0[1] - 50.0];
        let mut sim = Simulator::new(&scenario(vec![p]), RadioParams::default(), 30.0).unwrap();
        let ev = sim.advance(10).unwrap();
        assert_eq!(ev, vec![SimEvent { t_ms: 10, kind: SimEventKind::Attach { ue: 0, enb: 0 } }]);
        assert_eq!(sim.attachments(), &[Some(0)]);
    }

    #[test]
    fn no_handover_above_a2_threshold() {
        let enb0 = enb_layout(30.0, 5e6)[0].position;
        let p = [enb0[0], enb0[1] - 100.0];
        let mut sim = Simulator::new(&scenario(vec![p]), RadioParams::default(), 30.0).unwrap();
        sim.advance(100).unwrap();
        sim.set_tx_power(1, 40.0).unwrap();
        sim.set_tx_power(2, 40.0).unwrap();
        let m = sim.measure(0).unwrap();
        assert!(m[0].rsrq_db > -6.0);
        let ev = sim.advance(5000).unwrap();
        assert!(ev.is_empty());
    }

    #[test]
    fn handover_after_serving_power_drop() {
        // UE between eNB 0 and eNB 1, slightly closer to eNB 0
        let enbs = enb_layout(30.0, 5e6);
        let (a, b) = (enbs[0].position, enbs[1].position);
        let p = [a[0] + 0.45 * (b[0] - a[0]), a[1] + 0.45 * (b[1] - a[1]) - 40.0];
        let mut sim = Simulator::new(&scenario(vec![p]), RadioParams::default(), 30.0).unwrap();
        sim.advance(4000).unwrap();
        assert_eq!(sim.attachments()[0], Some(0));
        sim.set_tx_power(0, 20.0).unwrap();
        sim.set_tx_power(1, 40.0).unwrap();
        let ev = sim.advance(2000).unwrap();
        let ho: Vec<_> = ev
            .iter()
            .filter(|e| matches!(e.kind, SimEventKind::Handover { .. }))
            .collect();
        assert_eq!(ho.len(), 1);
        assert_eq!(ho[0].kind, SimEventKind::Handover { ue: 0, from: 0, to: 1 });
        // the condition first holds on the first tick, then must persist 256 ms
        assert_eq!(ho[0].t_ms, 4000 + 10 + 260);
    }

    #[test]
    fn delivery_shares_and_caps() {
        let enb0 = enb_layout(30.0, 5e6)[0].position;
        let near = [enb0[0], enb0[1] - 60.0];
        let mut sim = Simulator::new(&scenario(vec![near]), RadioParams::default(), 30.0).unwrap();
        sim.advance(10).unwrap();
        let bytes = sim.deliver_traffic(1000);
        // 5/3 MHz · 4.8 bit/s/Hz = 8 Mbit/s for one second
        assert!((bytes[0] - 1.0e6).abs() < 1e-6);

        let pts = vec![near; 12];
        let mut sim = Simulator::new(&scenario(pts), RadioParams::default(), 30.0).unwrap();
        sim.advance(10).unwrap();
        assert_eq!(sim.load(), vec![12, 0, 0]);
        let bytes = sim.deliver_traffic(1000);
        for b in bytes {
            assert!((b - 1.0e6 / 12.0).abs() < 1e-6);
        }
    }

    #[test]
    fn advance_rejects_partial_ticks() {
        let mut sim = Simulator::new(&sample_scenario(3, 12), RadioParams::default(), 30.0).unwrap();
        assert!(matches!(sim.advance(15), Err(SimError::TickMultiple { .. })));
    }

    #[test]
    fn warmup_attaches_everyone_and_is_deterministic() {
        let s = sample_scenario(11, 12);
        let mut a = Simulator::new(&s, RadioParams::default(), 30.0).unwrap();
        a.advance(4000).unwrap();
        assert!(a.attachments().iter().all(Option::is_some));
        let mut b = a.clone();
        a.advance(100).unwrap();
        a.advance(100).unwrap();
        b.advance(100).unwrap();
        b.advance(100).unwrap();
        for ue in 0..12 {
            assert_eq!(a.rx_history[ue], b.rx_history[ue]);
        }
    }

    #[test]
    fn waypoint_travel_time() {
        let mut s = scenario(vec![[-500.0, 0.0]]);
        s.ue_speed = 14.0;
        s.waypoints = vec![Waypoint { targets: vec![[900.0, 0.0]], dwell_s: 5.0 }];
        let mut sim = Simulator::new(&s, RadioParams::default(), 30.0).unwrap();
        let ev = sim.advance(110_000).unwrap();
        let arrive = ev.iter().find(|e| matches!(e.kind, SimEventKind::DwellStart { index: 0 })).unwrap();
        assert!(arrive.t_ms.abs_diff(100_000) <= 10, "{}", arrive.t_ms);
        let leave = ev.iter().find(|e| matches!(e.kind, SimEventKind::DwellEnd { index: 0 })).unwrap();
        assert!(leave.t_ms.abs_diff(arrive.t_ms + 5000) <= 10);
        assert_eq!(sim.ue_positions()[0], [900.0, 0.0]);
    }

    #[test]
    fn score_window_and_errors() {
        let s = sample_scenario(5, 12);
        let mut sim = Simulator::new(&s, RadioParams::default(), 30.0).unwrap();
        let p = ScoreParams::default();
        sim.advance(1000).unwrap();
        assert!(sim.score_now(&p).unwrap().truncated);
        sim.advance(3000).unwrap();
        let snap = sim.score_now(&p).unwrap();
        assert!(!snap.truncated && snap.value > 0.0);
        assert!(matches!(sim.total_score(5000, &p), Err(SimError::Score(ScoreError::Future { .. }))));
        sim.advance(20_000).unwrap();
        assert!(matches!(sim.total_score(1000, &p), Err(SimError::HistoryExpired(_))));
    }

    #[test]
    fn conservation_over_windows() {
        let s = sample_scenario(8, 12);
        let mut sim = Simulator::new(&s, RadioParams::default(), 30.0).unwrap();
        sim.advance(2000).unwrap();
        let mut delivered = [0.0; 12];
        for _ in 0..100 {
            sim.move_ues(10, &mut Vec::new());
            sim.update_attachment_at(sim.clock_ms + 10);
            let b = sim.deliver_traffic(10);
            sim.clock_ms += 10;
            for ue in 0..12 {
                delivered[ue] += b[ue];
            }
        }
        for ue in 0..12 {
            let w = sim.window_bytes(ue, sim.clock_ms(), 1000);
            assert!((w - delivered[ue]).abs() <= 1e-9 * delivered[ue].max(1.0));
        }
    }
}
