use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seed used to draw preset targets. Fixed so that a preset name always
/// denotes the same task.
const PRESET_SEED: u64 = 0x7a5c_2f01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("unknown task preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid task: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Best fraction of positions matching any target.
    FractionMatch,
    /// 1 if the sequence equals some target, else 0.
    AnyExact,
}

/// A family of prompts ("contexts"), each with one or more target sequences
/// of a fixed length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub n_contexts: usize,
    pub vocab: usize,
    pub horizon: usize,
    /// `targets[c]` lists the accepted sequences for context `c`.
    pub targets: Vec<Vec<Vec<usize>>>,
    pub reward_mode: RewardMode,
    /// Probability that the verifier's verdict is flipped (`r -> 1 - r`)
    /// before it reaches the learner. Keeps rewards within a group from
    /// agreeing forever; 0 for a clean verifier.
    #[serde(default)]
    pub reward_noise: f64,
}

impl TaskSpec {
    pub fn new(
        vocab: usize,
        horizon: usize,
        targets: Vec<Vec<Vec<usize>>>,
        reward_mode: RewardMode,
    ) -> Result<Self, TaskError> {
        let task = Self {
            n_contexts: targets.len(),
            vocab,
            horizon,
            targets,
            reward_mode,
            reward_noise: 0.0,
        };
        task.validate()?;
        Ok(task)
    }

    /// Same task behind a verifier that flips its verdict with probability `q`.
    pub fn with_reward_noise(mut self, q: f64) -> Result<Self, TaskError> {
        self.reward_noise = q;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if !(0.0..0.5).contains(&self.reward_noise) {
            return Err(TaskError::Invalid(format!(
                "reward_noise must lie in [0, 0.5), got {}",
                self.reward_noise
            )));
        }
        if self.vocab < 2 {
            return Err(TaskError::Invalid(format!("vocab must be >= 2, got {}", self.vocab)));
        }
        if self.horizon == 0 {
            return Err(TaskError::Invalid("horizon must be >= 1".into()));
        }
        if self.n_contexts == 0 || self.targets.len() != self.n_contexts {
            return Err(TaskError::Invalid(format!(
                "expected targets for {} contexts, got {}",
                self.n_contexts,
                self.targets.len()
            )));
        }
        for (c, set) in self.targets.iter().enumerate() {
            if set.is_empty() {
                return Err(TaskError::Invalid(format!("context {c} has no targets")));
            }
            for t in set {
                if t.len() != self.horizon {
                    return Err(TaskError::Invalid(format!(
                        "context {c}: target length {} != horizon {}",
                        t.len(),
                        self.horizon
                    )));
                }
                if let Some(&bad) = t.iter().find(|&&tok| tok >= self.vocab) {
                    return Err(TaskError::Invalid(format!(
                        "context {c}: token {bad} outside vocabulary of {}",
                        self.vocab
                    )));
                }
            }
        }
        Ok(())
    }

    /// Random task with `per_context` distinct targets per context.
    pub fn generate(
        n_contexts: usize,
        vocab: usize,
        horizon: usize,
        per_context: usize,
        reward_mode: RewardMode,
        seed: u64,
    ) -> Result<Self, TaskError> {
        if per_context == 0 || (per_context as f64) > (vocab as f64).powi(horizon as i32) {
            return Err(TaskError::Invalid(format!(
                "cannot draw {per_context} distinct targets of length {horizon} over {vocab} tokens"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut targets = Vec::with_capacity(n_contexts);
        for _ in 0..n_contexts {
            let mut set: Vec<Vec<usize>> = Vec::with_capacity(per_context);
            while set.len() < per_context {
                let cand: Vec<usize> = (0..horizon).map(|_| rng.random_range(0..vocab)).collect();
                if !set.contains(&cand) {
                    set.push(cand);
                }
            }
            targets.push(set);
        }
        Self::new(vocab, horizon, targets, reward_mode)
    }

    /// Like [`TaskSpec::generate`] but with the targets of a context
    /// disagreeing at every position, so no single sequence half-satisfies
    /// two of them.
    fn generate_disjoint(
        n_contexts: usize,
        vocab: usize,
        horizon: usize,
        per_context: usize,
        reward_mode: RewardMode,
        seed: u64,
    ) -> Result<Self, TaskError> {
        if per_context > vocab {
            return Err(TaskError::Invalid("more targets than tokens".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut targets = vec![vec![Vec::with_capacity(horizon); per_context]; n_contexts];
        for set in targets.iter_mut() {
            for _ in 0..horizon {
                let picks = sample(&mut rng, vocab, per_context);
                for (m, tok) in picks.iter().enumerate() {
                    set[m].push(tok);
                }
            }
        }
        Self::new(vocab, horizon, targets, reward_mode)
    }

    /// Named presets: `default` (32 contexts, 16 tokens, length 4, one
    /// target, fraction-match reward) and `multi2` (two disjoint targets per
    /// context, exact-match reward, for pass@k studies).
    pub fn preset(name: &str) -> Result<Self, TaskError> {
        match name {
            "default" => Self::generate(32, 16, 4, 1, RewardMode::FractionMatch, PRESET_SEED),
            "multi2" => Self::generate_disjoint(16, 6, 3, 2, RewardMode::AnyExact, PRESET_SEED),
            other => Err(TaskError::UnknownPreset(other.to_string())),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_contexts * self.horizon
    }

    pub fn verify(&self, context: usize, seq: &[usize]) -> f64 {
        verify_reward(seq, &self.targets[context], self.reward_mode)
    }
}

/// Deterministic reward of `seq` against a context's targets, in `[0, 1]`.
pub fn verify_reward(seq: &[usize], targets: &[Vec<usize>], mode: RewardMode) -> f64 {
    match mode {
        RewardMode::AnyExact => {
            if targets.iter().any(|t| t.as_slice() == seq) {
                1.0
            } else {
                0.0
            }
        }
        RewardMode::FractionMatch => {
            let best = targets
                .iter()
                .map(|t| t.iter().zip(seq).filter(|(a, b)| a == b).count())
                .max()
                .unwrap_or(0);
            best as f64 / seq.len().max(1) as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_definitions() {
        let t = vec![vec![1, 2, 3, 4]];
        assert_eq!(verify_reward(&[1, 2, 3, 4], &t, RewardMode::FractionMatch), 1.0);
        assert_eq!(verify_reward(&[1, 2, 0, 0], &t, RewardMode::FractionMatch), 0.5);
        assert_eq!(verify_reward(&[1, 2, 0, 0], &t, RewardMode::AnyExact), 0.0);
        let two = vec![vec![0, 0, 0], vec![5, 1, 2]];
        assert_eq!(verify_reward(&[5, 1, 2], &two, RewardMode::AnyExact), 1.0);
        assert_eq!(verify_reward(&[5, 0, 2], &two, RewardMode::FractionMatch), 2.0 / 3.0);
    }

    #[test]
    fn presets() {
        let d = TaskSpec::preset("default").unwrap();
        assert_eq!((d.n_contexts, d.vocab, d.horizon), (32, 16, 4));
        assert_eq!(d.reward_mode, RewardMode::FractionMatch);
        assert!(d.targets.iter().all(|s| s.len() == 1));
        assert_eq!(d, TaskSpec::preset("default").unwrap());

        let m = TaskSpec::preset("multi2").unwrap();
        assert_eq!(m.reward_mode, RewardMode::AnyExact);
        for set in &m.targets {
            assert_eq!(set.len(), 2);
            assert!(set[0].iter().zip(&set[1]).all(|(a, b)| a != b));
        }
        assert!(matches!(TaskSpec::preset("nope"), Err(TaskError::UnknownPreset(_))));
    }

    #[test]
    fn validation() {
        assert!(TaskSpec::new(4, 2, vec![vec![vec![0, 1]]], RewardMode::AnyExact).is_ok());
        assert!(TaskSpec::new(4, 2, vec![vec![vec![0, 4]]], RewardMode::AnyExact).is_err());
        assert!(TaskSpec::new(4, 2, vec![vec![vec![0]]], RewardMode::AnyExact).is_err());
        assert!(TaskSpec::new(4, 2, vec![vec![]], RewardMode::AnyExact).is_err());
        assert!(TaskSpec::new(1, 2, vec![vec![vec![0, 0]]], RewardMode::AnyExact).is_err());
        let d = TaskSpec::preset("default").unwrap();
        assert!(d.clone().with_reward_noise(0.2).is_ok());
        assert!(d.clone().with_reward_noise(0.5).is_err());
        assert!(d.with_reward_noise(-0.1).is_err());
    }
}
