//! Group-relative advantages.

use crate::taskpolicy::Trajectory;

pub const DEFAULT_DELTA: f64 = 1e-4;

/// Rewards standardised within their group: `(r_i - mean) / (std + delta)`
/// with the population standard deviation. A constant group maps to exact
/// zeros.
pub fn group_advantages(rewards: &[f64], delta: f64) -> Vec<f64> {
    debug_assert!(delta > 0.0);
    if rewards.is_empty() {
        return Vec::new();
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return vec![0.0; rewards.len()];
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + delta;
    rewards.iter().map(|r| (r - mean) / denom).collect()
}

/// The `G` trajectories sampled for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub context: usize,
    pub trajectories: Vec<Trajectory>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl RolloutGroup {
    pub fn new(context: usize, trajectories: Vec<Trajectory>) -> Self {
        let rewards = trajectories.iter().map(|t| t.reward).collect();
        Self {
            context,
            trajectories,
            rewards,
            advantages: Vec::new(),
        }
    }

    pub fn fill_advantages(&mut self, delta: f64) {
        self.advantages = group_advantages(&self.rewards, delta);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_group() {
        let a = group_advantages(&[1.0, 1.0, 0.0, 0.0], 1e-4);
        let expect = 0.5 / (0.5 + 1e-4);
        assert_eq!(a, vec![expect, expect, -expect, -expect]);
        assert!((a[0] - 0.99980).abs() < 1e-5);
    }

    #[test]
    fn pair_group() {
        let a = group_advantages(&[1.0, 0.0], 1e-4);
        assert!((a[0] - 0.99980).abs() < 1e-5);
        assert!((a[1] + 0.99980).abs() < 1e-5);
    }

    #[test]
    fn constant_group_is_zero() {
        let a = group_advantages(&[0.7; 8], 1e-4);
        assert!(a.iter().all(|&x| x == 0.0));
    }

    fn rewards() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 2..16)
    }

    proptest! {
        #[test]
        fn zero_mean_and_unit_scale(r in rewards()) {
            let delta = 1e-4;
            let a = group_advantages(&r, delta);
            let n = a.len() as f64;
            let mean = a.iter().sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-12);
            let m = r.iter().sum::<f64>() / n;
            let s = (r.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
            if s > 0.0 {
                let sa = (a.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
                prop_assert!(sa <= 1.0 + 1e-12);
                prop_assert!((sa - s / (s + delta)).abs() < 1e-9);
            }
        }

        #[test]
        fn ordering_is_preserved(r in rewards()) {
            let a = group_advantages(&r, 1e-4);
            for i in 0..r.len() {
                for j in 0..r.len() {
                    if r[i] < r[j] {
                        prop_assert!(a[i] < a[j]);
                    }
                }
            }
        }
    }
}
