use ndarray::{Array1, ArrayView2};

use super::nn::{log_softmax, ActorCritic};
use super::RlError;
use crate::num::Scalar;

/// A batch of stored transitions with their advantage targets.
#[derive(Debug, Clone, Copy)]
pub struct Minibatch<'a, S> {
    pub obs: ArrayView2<'a, S>,
    pub actions: &'a [usize],
    pub old_log_probs: &'a [S],
    pub advantages: &'a [S],
    pub returns: &'a [S],
}

/// Policy-gradient surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surrogate<S> {
    /// `-log π(a) · Â`.
    Vanilla,
    /// `-min(ρÂ, clip(ρ, 1 ± ε)Â)`.
    Clipped(S),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefs<S> {
    pub ent_coef: S,
    pub vf_coef: S,
    pub normalize_advantage: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    pub total: f64,
    pub policy: f64,
    /// Mean squared error of the value head.
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// `(a - mean) / (std + 1e-8)` with the unbiased standard deviation;
/// single-element batches are returned unchanged.
pub fn normalize_advantages<S: Scalar>(adv: &[S]) -> Vec<S> {
    let n = adv.len();
    if n < 2 {
        return adv.to_vec();
    }
    let nf = S::lit(n as f64);
    let mean = adv.iter().copied().sum::<S>() / nf;
    let var = adv.iter().map(|&a| (a - mean) * (a - mean)).sum::<S>() / (nf - S::one());
    let denom = var.sqrt() + S::lit(1e-8);
    adv.iter().map(|&a| (a - mean) / denom).collect()
}

/// Total loss `pg + vf_coef·MSE(v, R) − ent_coef·H` and its gradient with
/// respect to the network parameters.
pub fn loss_and_grad<S: Scalar>(
    net: &ActorCritic<S>,
    mb: &Minibatch<'_, S>,
    surrogate: Surrogate<S>,
    coefs: LossCoefs<S>,
) -> Result<(LossStats, Vec<S>), RlError> {
    let n = mb.actions.len();
    if mb.obs.nrows() != n || mb.old_log_probs.len() != n || mb.advantages.len() != n || mb.returns.len() != n {
        return Err(RlError::Shape { expected: n, got: mb.obs.nrows() });
    }
    if n == 0 {
        return Err(RlError::Config("empty minibatch".into()));
    }
    let tape = net.forward_tape(mb.obs)?;
    let logp = log_softmax(tape.logits());
    let values = tape.values();
    let adv = if coefs.normalize_advantage { normalize_advantages(mb.advantages) } else { mb.advantages.to_vec() };
    let inv_n = S::one() / S::lit(n as f64);

    let mut dlogits = logp.clone();
    let mut dvalues = Array1::zeros(n);
    let (mut pg, mut ent, mut mse, mut kl, mut clipped) = (S::zero(), S::zero(), S::zero(), S::zero(), 0usize);
    for i in 0..n {
        let a = mb.actions[i];
        let row = logp.row(i);
        if a >= row.len() {
            return Err(RlError::Config(format!("action {a} out of range")));
        }
        let h = -row.iter().map(|&l| l.exp() * l).sum::<S>();
        let log_ratio = row[a] - mb.old_log_probs[i];
        let ratio = log_ratio.exp();
        let (term, dlp) = match surrogate {
            Surrogate::Vanilla => (-row[a] * adv[i], -adv[i]),
            Surrogate::Clipped(eps) => {
                let s1 = ratio * adv[i];
                let s2 = ratio.max(S::one() - eps).min(S::one() + eps) * adv[i];
                if (ratio - S::one()).abs() > eps {
                    clipped += 1;
                }
                if s1 <= s2 {
                    (-s1, -s1)
                } else {
                    (-s2, S::zero())
                }
            }
        };
        pg += term;
        ent += h;
        kl += ratio - S::one() - log_ratio;
        let err = values[i] - mb.returns[i];
        mse += err * err;
        dvalues[i] = coefs.vf_coef * S::lit(2.0) * err * inv_n;
        let mut drow = dlogits.row_mut(i);
        for (j, d) in drow.iter_mut().enumerate() {
            let lj = row[j];
            let pj = lj.exp();
            let onehot = if j == a { S::one() } else { S::zero() };
            *d = dlp * inv_n * (onehot - pj) + coefs.ent_coef * inv_n * pj * (lj + h);
        }
    }
    let (pg, ent, mse) = (pg * inv_n, ent * inv_n, mse * inv_n);
    let total = pg - coefs.ent_coef * ent + coefs.vf_coef * mse;
    if !total.is_finite() {
        return Err(RlError::NonFinite(format!("loss {total}")));
    }
    let grads = net.backward(&tape, dlogits, dvalues.view());
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(RlError::NonFinite("gradient".into()));
    }
    let stats = LossStats {
        total: total.as_f64(),
        policy: pg.as_f64(),
        value: mse.as_f64(),
        entropy: ent.as_f64(),
        approx_kl: (kl * inv_n).as_f64(),
        clip_fraction: clipped as f64 / n as f64,
    };
    Ok((stats, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rlagent::nn::{Activation, NetShape, PolicyArch};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalized_advantages_are_standard() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let adv: Vec<f64> = (0..257).map(|_| rng.random_range(-3.0..10.0)).collect();
        let z = normalize_advantages(&adv);
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let std = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (z.len() - 1) as f64).sqrt();
        assert!(mean.abs() <= 1e-9);
        assert!((std - 1.0).abs() <= 1e-6);
        assert_eq!(normalize_advantages(&[4.0]), vec![4.0]);
    }

    #[test]
    fn unit_ratio_makes_clipping_inert() {
        let shape = NetShape { obs_len: 6, groups: 3, num_actions: 7 };
        let arch = PolicyArch { width: 8, activation: Activation::Tanh, ..PolicyArch::default() };
        let net = ActorCritic::<f64>::new(arch, shape, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let obs = Array2::from_shape_fn((10, 6), |_| rng.random_range(-1.0..1.0));
        let actions: Vec<usize> = (0..10).map(|i| i % 7).collect();
        let lp = log_softmax(&net.forward_batch(obs.view()).unwrap().0);
        let old: Vec<f64> = actions.iter().enumerate().map(|(i, &a)| lp[[i, a]]).collect();
        let adv: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ret = vec![0.5; 10];
        let mb = Minibatch { obs: obs.view(), actions: &actions, old_log_probs: &old, advantages: &adv, returns: &ret };
        let coefs = LossCoefs { ent_coef: 0.0, vf_coef: 0.0, normalize_advantage: false };
        let (s_clip, g_clip) = loss_and_grad(&net, &mb, Surrogate::Clipped(0.2), coefs).unwrap();
        let (s_van, g_van) = loss_and_grad(&net, &mb, Surrogate::Vanilla, coefs).unwrap();
        assert_eq!(s_clip.clip_fraction, 0.0);
        // At ρ = 1 both surrogates share a gradient; their values differ by
        // the constant log π_old term.
        for (a, b) in g_clip.iter().zip(&g_van) {
            assert!((a - b).abs() < 1e-12);
        }
        let mean_adv = adv.iter().sum::<f64>() / 10.0;
        assert!((s_clip.policy + mean_adv).abs() < 1e-12);
        assert!(s_van.policy.is_finite());
    }
}
