use rand::Rng;
use statrs::function::erf::{erfc, erfc_inv};

use crate::num::log_sum_exp;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_ppf(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Mixture of Gaussians, each truncated to `[low, high]`: one component per
/// observation plus one broad prior component centred on the interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedParzen {
    pub mus: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Normalised mixture weights.
    pub weights: Vec<f64>,
    pub low: f64,
    pub high: f64,
}

impl TruncatedParzen {
    /// Component widths come from the distance to the neighbouring sorted
    /// observations (the interval ends act as outer neighbours), clipped to
    /// `[min_bandwidth_frac · span, span]`.
    pub fn fit(observations: &[f64], low: f64, high: f64, prior_weight: f64, min_bandwidth_frac: f64) -> Self {
        let span = high - low;
        let mut sorted: Vec<f64> = observations.iter().map(|x| x.clamp(low, high)).collect();
        sorted.sort_by(f64::total_cmp);
        let mut mus = Vec::with_capacity(sorted.len() + 1);
        let mut sigmas = Vec::with_capacity(sorted.len() + 1);
        let mut weights = Vec::with_capacity(sorted.len() + 1);
        for (i, &x) in sorted.iter().enumerate() {
            let left = if i == 0 { low } else { sorted[i - 1] };
            let right = if i + 1 == sorted.len() { high } else { sorted[i + 1] };
            let sigma = (x - left).max(right - x).clamp(min_bandwidth_frac * span, span);
            mus.push(x);
            sigmas.push(sigma);
            weights.push(1.0);
        }
        mus.push(0.5 * (low + high));
        sigmas.push(span);
        weights.push(prior_weight);
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self { mus, sigmas, weights, low, high }
    }

    fn log_mass(&self, k: usize) -> f64 {
        let (mu, s) = (self.mus[k], self.sigmas[k]);
        let mass = std_normal_cdf((self.high - mu) / s) - std_normal_cdf((self.low - mu) / s);
        mass.max(f64::MIN_POSITIVE).ln()
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        if x < self.low || x > self.high {
            return f64::NEG_INFINITY;
        }
        let terms: Vec<f64> = (0..self.mus.len())
            .map(|k| {
                let z = (x - self.mus[k]) / self.sigmas[k];
                self.weights[k].ln() - 0.5 * z * z - LN_SQRT_2PI - self.sigmas[k].ln() - self.log_mass(k)
            })
            .collect();
        log_sum_exp(&terms)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let (mu, s) = (self.mus[k], self.sigmas[k]);
        let pa = std_normal_cdf((self.low - mu) / s);
        let pb = std_normal_cdf((self.high - mu) / s);
        let p = pa + rng.random::<f64>() * (pb - pa);
        let p = p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        (mu + s * std_normal_ppf(p)).clamp(self.low, self.high)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn density_integrates_to_one() {
        let p = TruncatedParzen::fit(&[0.1, 0.15, 0.8], 0.0, 1.0, 1.0, 0.01);
        // trapezoid quadrature
        let n = 20_000;
        let h = 1.0 / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * p.log_pdf(i as f64 * h).exp() * h;
        }
        assert!((total - 1.0).abs() < 1e-4, "{total}");
        assert_eq!(p.log_pdf(-0.1), f64::NEG_INFINITY);
    }

    #[test]
    fn bandwidths_follow_neighbours() {
        let p = TruncatedParzen::fit(&[0.5, 0.2, 0.3], 0.0, 1.0, 1.0, 0.01);
        assert_eq!(p.mus[..3], [0.2, 0.3, 0.5]);
        assert!((p.sigmas[0] - 0.2).abs() < 1e-12);
        assert!((p.sigmas[1] - 0.2).abs() < 1e-12);
        assert!((p.sigmas[2] - 0.5).abs() < 1e-12);
        assert_eq!(p.sigmas[3], 1.0);
        let tight = TruncatedParzen::fit(&[0.5, 0.5, 0.5], 0.0, 1.0, 1.0, 0.01);
        assert!(tight.sigmas[1] >= 0.01);
    }

    #[test]
    fn samples_stay_in_support() {
        let p = TruncatedParzen::fit(&[0.0, 1.0, 1.0], 0.0, 1.0, 1.0, 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            let x = p.sample(&mut rng);
            assert!((0.0..=1.0).contains(&x));
        }
    }
}
