use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PolicySnapshot, TabularPolicy, TaskSpec};
use crate::advantage::RolloutGroup;
use crate::clipping::ClipOutcome;
use crate::regions::RegionLabel;

/// One sampled sequence with the rollout-time probability of each token.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub context: usize,
    pub tokens: Vec<usize>,
    pub p_old: Vec<f64>,
    pub reward: f64,
}

/// One sampled token as seen by the update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub context: usize,
    pub step: usize,
    pub action: usize,
    pub p_old: f64,
    /// Probability under the live policy at the most recent evaluation.
    pub p_theta: f64,
    /// Shared by every token of the trajectory.
    pub advantage: f64,
    pub region: RegionLabel,
    pub outcome: Option<ClipOutcome>,
}

impl TokenRecord {
    pub fn ratio(&self) -> f64 {
        self.p_theta / self.p_old
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent RNG stream for `(seed, round, context)`.
pub fn stream_rng(seed: u64, round: u64, context: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(splitmix64(splitmix64(round) ^ context.rotate_left(32)));
    rng
}

/// Draws one sequence per group member from the snapshot.
fn sample_sequence(snapshot: &PolicySnapshot, context: usize, rng: &mut ChaCha8Rng, cells: &[WeightedIndex<f64>], probs: &[Vec<f64>]) -> Trajectory {
    let horizon = snapshot.policy().horizon();
    let mut tokens = Vec::with_capacity(horizon);
    let mut p_old = Vec::with_capacity(horizon);
    for s in 0..horizon {
        let a = cells[s].sample(rng);
        tokens.push(a);
        p_old.push(probs[s][a]);
    }
    Trajectory {
        context,
        tokens,
        p_old,
        reward: 0.0,
    }
}

/// Snapshots `policy`, then samples `group_size` sequences for every context
/// at temperature 1. Advantages are left empty for the caller to fill.
pub fn sample_rollouts(
    policy: &TabularPolicy,
    task: &TaskSpec,
    group_size: usize,
    seed: u64,
    round: u64,
) -> (Vec<RolloutGroup>, PolicySnapshot) {
    assert!(group_size >= 2, "group size must be at least 2");
    let snapshot = policy.snapshot();
    let mut groups = Vec::with_capacity(task.n_contexts);
    for c in 0..task.n_contexts {
        let probs: Vec<Vec<f64>> = (0..task.horizon).map(|s| snapshot.probs(c, s)).collect();
        let cells: Vec<WeightedIndex<f64>> = probs
            .iter()
            .map(|p| WeightedIndex::new(p).expect("softmax output is a valid weight vector"))
            .collect();
        let mut rng = stream_rng(seed, round, c as u64);
        let trajectories = (0..group_size)
            .map(|_| {
                let mut t = sample_sequence(&snapshot, c, &mut rng, &cells, &probs);
                t.reward = task.verify(c, &t.tokens);
                if task.reward_noise > 0.0 && rng.random::<f64>() < task.reward_noise {
                    t.reward = 1.0 - t.reward;
                }
                t
            })
            .collect();
        groups.push(RolloutGroup::new(c, trajectories));
    }
    (groups, snapshot)
}
