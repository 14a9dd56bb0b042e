use crate::num::Scalar;

/// Generalised advantage estimates and value targets.
///
/// `dones[t]` marks that the episode ended with step `t`; the value after
/// the last step is `bootstrap_value`. Truncated episodes should fold the
/// bootstrapped tail into their final reward before calling this.
pub fn gae<S: Scalar>(
    rewards: &[S],
    values: &[S],
    dones: &[bool],
    bootstrap_value: S,
    gamma: S,
    lambda: S,
) -> (Vec<S>, Vec<S>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "gae: sequences of unequal length");
    let mut adv = vec![S::zero(); n];
    let mut acc = S::zero();
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap_value };
        let live = if dones[t] { S::zero() } else { S::one() };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        acc = delta + gamma * lambda * live * acc;
        adv[t] = acc;
    }
    let returns = adv.iter().zip(values).map(|(&a, &v)| a + v).collect();
    (adv, returns)
}
