//! Link-level radio formulas: antenna pattern, propagation, noise and dB helpers.

use serde::{Deserialize, Serialize};

use crate::num::Scalar;

/// Radio constants of the simulated downlink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    /// Full system bandwidth in Hz; each eNB owns one third of it.
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub thermal_noise_dbm_per_hz: f64,
    /// 3 dB beamwidth of the parabolic sector antenna, degrees.
    pub beamwidth_deg: f64,
    /// Maximum attenuation of the antenna pattern, dB.
    pub max_attenuation_db: f64,
    pub pathloss_intercept_db: f64,
    pub pathloss_slope_db: f64,
    pub min_distance_m: f64,
    /// Spectral-efficiency ceiling, bit/s/Hz.
    pub se_cap: f64,
    /// Per-UE offered load, bit/s.
    pub cbr_rate_bps: f64,
    /// A2 serving-quality threshold on RSRQ, dB.
    pub a2_threshold_db: f64,
    /// A4 neighbour offset over serving RSRQ, dB.
    pub a4_offset_db: f64,
    pub time_to_trigger_ms: u64,
    pub tick_ms: u64,
    pub min_power_dbm: f64,
    pub max_power_dbm: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            bandwidth_hz: 5.0e6,
            noise_figure_db: 9.0,
            thermal_noise_dbm_per_hz: -174.0,
            beamwidth_deg: 70.0,
            max_attenuation_db: 20.0,
            pathloss_intercept_db: 128.1,
            pathloss_slope_db: 37.6,
            min_distance_m: 10.0,
            se_cap: 4.8,
            cbr_rate_bps: 20.0e6,
            a2_threshold_db: -6.0,
            a4_offset_db: 1.0,
            time_to_trigger_ms: 256,
            tick_ms: 10,
            min_power_dbm: 20.0,
            max_power_dbm: 40.0,
        }
    }
}

impl RadioParams {
    /// Bandwidth of one hard-reuse subband.
    pub fn subband_hz(&self) -> f64 {
        self.bandwidth_hz / 3.0
    }

    /// Noise power over the RSSI measurement band (full system band).
    pub fn measurement_noise_dbm(&self) -> f64 {
        thermal_noise_dbm(self.thermal_noise_dbm_per_hz, self.bandwidth_hz, self.noise_figure_db)
    }

    /// Noise power over one data subband.
    pub fn data_noise_dbm(&self) -> f64 {
        thermal_noise_dbm(self.thermal_noise_dbm_per_hz, self.subband_hz(), self.noise_figure_db)
    }
}

#[inline]
pub fn db_to_linear<S: Scalar>(db: S) -> S {
    S::lit(10.0).powf(db / S::lit(10.0))
}

#[inline]
pub fn linear_to_db<S: Scalar>(linear: S) -> S {
    S::lit(10.0) * linear.log10()
}

/// Wraps an angle in degrees into `[-180, 180]`.
pub fn wrap_degrees<S: Scalar>(angle: S) -> S {
    let full = S::lit(360.0);
    let half = S::lit(180.0);
    let mut a = (angle + half) % full;
    if a < S::zero() {
        a += full;
    }
    a - half
}

/// Parabolic sector pattern: `-min(12 (θ/θ3dB)², A_max)` in dB.
pub fn antenna_gain<S: Scalar>(offset_deg: S, beamwidth_deg: S, max_attenuation_db: S) -> S {
    let ratio = wrap_degrees(offset_deg) / beamwidth_deg;
    -(S::lit(12.0) * ratio * ratio).min(max_attenuation_db)
}

/// Log-distance macro-cell path loss with a 10 m distance floor.
pub fn pathloss<S: Scalar>(distance_m: S) -> S {
    pathloss_with(distance_m, S::lit(128.1), S::lit(37.6), S::lit(10.0))
}

pub fn pathloss_with<S: Scalar>(distance_m: S, intercept_db: S, slope_db: S, min_distance_m: S) -> S {
    let d = distance_m.max(min_distance_m);
    intercept_db + slope_db * (d / S::lit(1000.0)).log10()
}

/// Thermal noise power in dBm over `bandwidth_hz` including the receiver noise figure.
pub fn thermal_noise_dbm<S: Scalar>(density_dbm_per_hz: S, bandwidth_hz: S, noise_figure_db: S) -> S {
    density_dbm_per_hz + linear_to_db(bandwidth_hz) + noise_figure_db
}

/// Rate (bit/s) of one UE on a bandwidth share: Shannon bound, spectral-efficiency cap, demand cap.
pub fn capped_rate<S: Scalar>(share_hz: S, sinr_linear: S, se_cap: S, demand_bps: S) -> S {
    let shannon = share_hz * (S::one() + sinr_linear).log2();
    shannon.min(share_hz * se_cap).min(demand_bps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn antenna_pattern_points() {
        assert_eq!(antenna_gain(0.0f64, 70.0, 20.0), 0.0);
        assert_abs_diff_eq!(antenna_gain(35.0f64, 70.0, 20.0), -3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(antenna_gain(-35.0f64, 70.0, 20.0), -3.0, epsilon = 1e-12);
        assert_eq!(antenna_gain(180.0f64, 70.0, 20.0), -20.0);
        // 12·(180/70)² ≈ 79.3 would exceed the cap
        assert!(12.0 * (180.0f64 / 70.0).powi(2) > 20.0);
        assert_abs_diff_eq!(antenna_gain(395.0f64, 70.0, 20.0), -3.0, epsilon = 1e-9);
    }

    #[test]
    fn pathloss_points() {
        assert_abs_diff_eq!(pathloss(1000.0f64), 128.1, epsilon = 1e-12);
        assert_abs_diff_eq!(pathloss(500.0f64), 128.1 + 37.6 * 0.5f64.log10(), epsilon = 1e-12);
        assert_abs_diff_eq!(pathloss(500.0f64), 116.78, epsilon = 5e-3);
        assert_eq!(pathloss(5.0f64), pathloss(10.0f64));
        assert_eq!(pathloss(0.0f32), pathloss(10.0f32));
    }

    #[test]
    fn noise_levels() {
        let p = RadioParams::default();
        assert_abs_diff_eq!(p.measurement_noise_dbm(), -174.0 + 66.9897 + 9.0, epsilon = 1e-3);
        assert_abs_diff_eq!(p.measurement_noise_dbm() - p.data_noise_dbm(), 10.0 * 3f64.log10(), epsilon = 1e-12);
    }

    #[test]
    fn rate_caps() {
        let third = 5.0e6f64 / 3.0;
        // very high SINR: the spectral-efficiency cap binds before the demand cap
        assert_abs_diff_eq!(capped_rate(third, 1e9, 4.8, 20e6), 8.0e6, epsilon = 1e-6);
        assert_eq!(capped_rate(third, 0.0, 4.8, 20e6), 0.0);
        assert_abs_diff_eq!(capped_rate(third, 3.0, 4.8, 20e6), 2.0 * third, epsilon = 1e-6);
        assert_eq!(capped_rate(100e6f64, 1e9, 4.8, 20e6), 20e6);
    }

    #[test]
    fn db_round_trip_f32_and_f64() {
        for &x in &[-120.0f64, -3.0, 0.0, 17.5, 46.0] {
            let back = linear_to_db(db_to_linear(x));
            assert!((back - x).abs() <= 1e-9 * x.abs().max(1.0));
        }
        let y = linear_to_db(db_to_linear(-3.0f32));
        assert!((y + 3.0).abs() < 1e-5);
    }
}
