//! User-experience score: a log-shaped utility of the bytes each UE received
//! in a trailing window, summed over UEs.

use serde::{Deserialize, Serialize};

use crate::num::Scalar;

/// Shape and window of the user-experience utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreParams {
    /// Logarithm base; controls how hard starvation is penalized.
    pub alpha: f64,
    pub window_ms: u64,
    /// Window byte count that yields exactly one unit of experience.
    pub reference_bytes: f64,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self {
            alpha: 1000.0,
            window_ms: 2000,
            reference_bytes: 5.0e5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("alpha must exceed 1, got {0}")]
    Alpha(f64),
    #[error("score window must be positive")]
    Window,
    #[error("reference byte count must be positive, got {0}")]
    Reference(f64),
    #[error("score requested at t={requested} ms beyond simulation clock {clock} ms")]
    Future { requested: u64, clock: u64 },
}

impl ScoreParams {
    pub fn validate(&self) -> Result<(), ScoreError> {
        if !(self.alpha > 1.0) {
            return Err(ScoreError::Alpha(self.alpha));
        }
        if self.window_ms == 0 {
            return Err(ScoreError::Window);
        }
        if !(self.reference_bytes > 0.0) {
            return Err(ScoreError::Reference(self.reference_bytes));
        }
        Ok(())
    }
}

/// `log_α((α−1)·r/reference + 1)`: zero for a starved UE, one at the reference byte count.
pub fn ue_experience<S: Scalar>(bytes: S, alpha: S, reference_bytes: S) -> S {
    let x = (alpha - S::one()) * (bytes / reference_bytes) + S::one();
    x.ln() / alpha.ln()
}

/// Sum of per-UE experiences.
pub fn total_experience<S: Scalar>(window_bytes: &[S], alpha: S, reference_bytes: S) -> S {
    window_bytes
        .iter()
        .map(|&r| ue_experience(r, alpha, reference_bytes))
        .sum()
}

/// Total score at one instant together with whether its window had to be truncated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSnapshot {
    pub t_ms: u64,
    pub value: f64,
    /// True when less than a full window of history existed at `t_ms`.
    pub truncated: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_anchors() {
        assert_eq!(ue_experience(0.0f64, 1000.0, 5e5), 0.0);
        assert_eq!(ue_experience(5e5f64, 1000.0, 5e5), 1.0);
        let expected = 9991f64.ln() / 1000f64.ln();
        assert!((ue_experience(5e6f64, 1000.0, 5e5) - expected).abs() <= 1e-12);
        assert!((expected - 1.3332).abs() < 1e-4);
    }

    #[test]
    fn twelve_ues_at_reference_rate() {
        // 2 Mbit/s for 2 s is exactly the reference byte count
        let bytes = vec![2.0e6f64 * 2.0 / 8.0; 12];
        assert_eq!(total_experience(&bytes, 1000.0, 5e5), 12.0);
        assert_eq!(total_experience(&[0.0f64; 12], 1000.0, 5e5), 0.0);
    }

    #[test]
    fn f32_evaluation() {
        assert_eq!(ue_experience(0.0f32, 1000.0, 5e5), 0.0);
        assert!((ue_experience(5e5f32, 1000.0, 5e5) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn params_validation() {
        assert!(ScoreParams::default().validate().is_ok());
        let bad = ScoreParams { alpha: 1.0, ..Default::default() };
        assert_eq!(bad.validate(), Err(ScoreError::Alpha(1.0)));
        let bad = ScoreParams { window_ms: 0, ..Default::default() };
        assert_eq!(bad.validate(), Err(ScoreError::Window));
    }

    proptest! {
        #[test]
        fn unit_anchor_any_alpha(alpha in 1.0001f64..1e6, reference in 1.0f64..1e9) {
            let q = ue_experience(reference, alpha, reference);
            prop_assert!((q - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn monotone_and_concave(r1 in 0.0f64..1e7, gap in 0.0f64..1e7, delta in 1.0f64..1e6) {
            let r2 = r1 + gap;
            let f = |r: f64| ue_experience(r, 1000.0, 5e5);
            prop_assert!(f(r1 + delta) > f(r1));
            let tol = 1e-12;
            prop_assert!(f(r1 + delta) - f(r1) + tol >= f(r2 + delta) - f(r2));
        }

        #[test]
        fn total_monotone_in_each_ue(bytes in proptest::collection::vec(0.0f64..1e7, 12), idx in 0usize..12, extra in 0.0f64..1e6) {
            let before = total_experience(&bytes, 1000.0, 5e5);
            let mut more = bytes.clone();
            more[idx] += extra;
            prop_assert!(total_experience(&more, 1000.0, 5e5) >= before);
        }
    }
}
