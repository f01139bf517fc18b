use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TaskSpec;
use crate::numerics::{entropy_slice, softmax_slice};

/// How the logit table is initialised.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PolicyInit {
    /// All logits zero: uniform everywhere, entropy `ln V`.
    #[default]
    Zero,
    /// Each cell prefers one token by `logit`, standing in for a pretrained
    /// model. With probability `hit_rate` the preferred token is the cell's
    /// token in the first target, otherwise a uniformly drawn other token.
    Prior { logit: f64, hit_rate: f64, seed: u64 },
}

/// Logits indexed by `(context, step)`. This table is the whole parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_contexts: usize,
    horizon: usize,
    vocab: usize,
    logits: Vec<f64>,
}

impl TabularPolicy {
    pub fn zeros(n_contexts: usize, horizon: usize, vocab: usize) -> Self {
        Self {
            n_contexts,
            horizon,
            vocab,
            logits: vec![0.0; n_contexts * horizon * vocab],
        }
    }

    pub fn for_task(task: &TaskSpec, init: &PolicyInit) -> Self {
        let mut policy = Self::zeros(task.n_contexts, task.horizon, task.vocab);
        if let PolicyInit::Prior { logit, hit_rate, seed } = *init {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for c in 0..task.n_contexts {
                for s in 0..task.horizon {
                    let target = task.targets[c][0][s];
                    let favoured = if rng.random::<f64>() < hit_rate {
                        target
                    } else {
                        let other = rng.random_range(0..task.vocab - 1);
                        if other >= target {
                            other + 1
                        } else {
                            other
                        }
                    };
                    policy.cell_mut(c, s)[favoured] = logit;
                }
            }
        }
        policy
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn n_cells(&self) -> usize {
        self.n_contexts * self.horizon
    }

    /// Flat index of the first logit of cell `(context, step)`.
    pub fn cell_offset(&self, context: usize, step: usize) -> usize {
        (context * self.horizon + step) * self.vocab
    }

    pub fn cell(&self, context: usize, step: usize) -> &[f64] {
        let o = self.cell_offset(context, step);
        &self.logits[o..o + self.vocab]
    }

    pub fn cell_mut(&mut self, context: usize, step: usize) -> &mut [f64] {
        let o = self.cell_offset(context, step);
        &mut self.logits[o..o + self.vocab]
    }

    pub fn probs(&self, context: usize, step: usize) -> Vec<f64> {
        softmax_slice(self.cell(context, step))
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn is_finite(&self) -> bool {
        self.logits.iter().all(|v| v.is_finite())
    }

    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot { table: self.clone() }
    }
}

/// Frozen copy of the policy taken at rollout time.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot {
    table: TabularPolicy,
}

impl PolicySnapshot {
    pub fn probs(&self, context: usize, step: usize) -> Vec<f64> {
        self.table.probs(context, step)
    }

    pub fn policy(&self) -> &TabularPolicy {
        &self.table
    }
}

/// Arithmetic mean of the per-cell entropies.
pub fn mean_policy_entropy(policy: &TabularPolicy) -> f64 {
    let mut total = 0.0;
    for c in 0..policy.n_contexts() {
        for s in 0..policy.horizon() {
            total += entropy_slice(&policy.probs(c, s));
        }
    }
    total / policy.n_cells() as f64
}
