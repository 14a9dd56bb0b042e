use serde::{Deserialize, Serialize};

use crate::num::Scalar;

/// Gradient-step rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    RmsProp,
}

/// Adam (`β = 0.9, 0.999`) or RMSProp (`α = 0.99`), both with `ε = 1e-5`
/// added outside the square root.
#[derive(Debug, Clone)]
pub struct GradientOptimizer<S> {
    kind: OptimizerKind,
    eps: S,
    step: i32,
    m: Vec<S>,
    v: Vec<S>,
}

impl<S: Scalar> GradientOptimizer<S> {
    pub fn new(kind: OptimizerKind, num_params: usize) -> Self {
        Self { kind, eps: S::lit(1e-5), step: 0, m: vec![S::zero(); num_params], v: vec![S::zero(); num_params] }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn apply(&mut self, params: &mut [S], grads: &[S], lr: S) {
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        match self.kind {
            OptimizerKind::Adam => {
                let (b1, b2) = (S::lit(0.9), S::lit(0.999));
                let c1 = S::one() - b1.powi(self.step);
                let c2 = S::one() - b2.powi(self.step);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = b1 * self.m[i] + (S::one() - b1) * g;
                    self.v[i] = b2 * self.v[i] + (S::one() - b2) * g * g;
                    params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
                }
            }
            OptimizerKind::RmsProp => {
                let a = S::lit(0.99);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.v[i] = a * self.v[i] + (S::one() - a) * g * g;
                    params[i] -= lr * g / (self.v[i].sqrt() + self.eps);
                }
            }
        }
    }
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm<S: Scalar>(grads: &mut [S], max_norm: S) -> S {
    let norm = grads.iter().map(|&g| g * g).sum::<S>().sqrt();
    let coef = max_norm / (norm + S::lit(1e-6));
    if coef < S::one() {
        grads.iter_mut().for_each(|g| *g *= coef);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut p: Vec<f64> = vec![1.0, -1.0];
        let mut opt = GradientOptimizer::new(OptimizerKind::Adam, 2);
        opt.apply(&mut p, &[0.5, -3.0], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-4);
        assert!((p[1] + 0.9).abs() < 1e-4);
    }

    #[test]
    fn rmsprop_first_step() {
        let mut p: Vec<f64> = vec![0.0];
        let mut opt = GradientOptimizer::new(OptimizerKind::RmsProp, 1);
        opt.apply(&mut p, &[2.0], 0.01);
        let expected = -0.01 * 2.0 / ((0.01f64 * 4.0).sqrt() + 1e-5);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn clipping() {
        let mut g: Vec<f64> = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        let n = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!((n - 1.0).abs() < 1e-6);
        let mut small = vec![0.3, 0.4];
        clip_grad_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.3, 0.4]);
    }
}
