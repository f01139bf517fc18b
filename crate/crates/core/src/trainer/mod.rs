//! The training loop.
//!
//! Each rollout round snapshots the policy, samples `G` sequences per
//! context, standardises rewards within each group, and then runs `epochs`
//! passes of minibatch gradient ascent on the clipped surrogate. Per-token
//! losses are averaged over the minibatch. The scheduler is consulted once
//! per round, after measuring the mean policy entropy.

mod eval;
mod metrics;

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eval::{eval_pass_at_k, pass_at_k_estimate, PassAtK};
pub use metrics::{fitted_slope, grad_entropy_diag, pearson, GradEntropyDiag, MetricsRow, TooFewRows, METRIC_FIELDS};

use crate::advantage::{RolloutGroup, DEFAULT_DELTA};
use crate::clipping::{clip_ratio, clip_stats_of, ClipMode, ClipOutcome};
use crate::error::MathError;
use crate::numerics::entropy_slice;
use crate::regions::{classify_band, classify_rule, RegionBands, RegionHistogram, RegionLabel};
use crate::scheduler::{Scheduler, StrategyConfig};
use crate::taskpolicy::{
    mean_policy_entropy, sample_rollouts, stream_rng, PolicyInit, TabularPolicy, TaskSpec, TokenRecord,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value during update at round {round}: {detail}\n  offending token: {record:?}")]
    NonFinite {
        round: u64,
        detail: String,
        record: Box<TokenRecord>,
    },
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Optimizer {
    /// Plain gradient ascent.
    #[default]
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

/// Treatment of tokens outside the intervention set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestTreatment {
    /// Plain importance-weighted gradient, no clipping.
    #[default]
    Unclipped,
    /// PPO hard clipping with the scheduled bounds.
    HardClip,
    /// No gradient at all.
    Frozen,
}

/// Region intervention: tokens whose band label is in `regions` get the
/// configured clip treatment, everything else gets `rest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intervention {
    pub regions: Vec<RegionLabel>,
    #[serde(default)]
    pub bands: RegionBands,
    #[serde(default)]
    pub rest: RestTreatment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Evaluate on rounds that are multiples of `every` (and the last round).
    pub every: u64,
    pub k: usize,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub task: TaskSpec,
    pub init: PolicyInit,
    pub strategy: StrategyConfig,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub rounds: u64,
    pub group_size: usize,
    pub seed: u64,
    pub clip_mode: ClipMode,
    pub adv_delta: f64,
    pub optimizer: Optimizer,
    pub intervention: Option<Intervention>,
    pub eval: Option<EvalConfig>,
    pub record_wall_clock: bool,
}

pub const DEFAULT_LEARNING_RATE: f64 = 10.0;

const SHUFFLE_SALT: u64 = 0x5eed_0f0d_e0a1_b2c3;

impl TrainConfig {
    pub fn new(task: TaskSpec) -> Self {
        Self {
            task,
            init: PolicyInit::Zero,
            strategy: StrategyConfig {
                t_max: 500,
                ..Default::default()
            },
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: 4,
            minibatches: 4,
            rounds: 500,
            group_size: 8,
            seed: 7,
            clip_mode: ClipMode::HardClip,
            adv_delta: DEFAULT_DELTA,
            optimizer: Optimizer::Sgd,
            intervention: None,
            eval: None,
            record_wall_clock: false,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        self.task.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        self.strategy.validate().map_err(TrainError::Config)?;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be non-negative, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.minibatches == 0 {
            return bad("minibatches must be >= 1".into());
        }
        if self.rounds == 0 {
            return bad("rounds must be >= 1".into());
        }
        if self.group_size < 2 {
            return bad(format!("group size must be >= 2, got {}", self.group_size));
        }
        if self.adv_delta.is_nan() || self.adv_delta <= 0.0 {
            return bad(format!("adv_delta must be positive, got {}", self.adv_delta));
        }
        if let PolicyInit::Prior { logit, hit_rate, .. } = self.init {
            if !logit.is_finite() || !(0.0..=1.0).contains(&hit_rate) {
                return bad("prior init needs a finite logit and hit_rate in [0, 1]".into());
            }
        }
        if let Some(iv) = &self.intervention {
            if iv.regions.is_empty() {
                return bad("intervention region set is empty".into());
            }
            iv.bands.validate().map_err(TrainError::Config)?;
        }
        if let Some(ev) = &self.eval {
            if ev.every == 0 || ev.k == 0 || ev.k > ev.n_samples || ev.n_samples < 2 {
                return bad(format!("invalid eval settings {ev:?}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// Owns the live policy and scheduler across rounds.
pub struct Trainer {
    cfg: TrainConfig,
    policy: TabularPolicy,
    scheduler: Scheduler,
    adam: Option<AdamState>,
    round: u64,
    started: Instant,
    last_records: Vec<TokenRecord>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let policy = TabularPolicy::for_task(&cfg.task, &cfg.init);
        let adam = matches!(cfg.optimizer, Optimizer::Adam { .. }).then(|| AdamState {
            m: vec![0.0; policy.logits().len()],
            v: vec![0.0; policy.logits().len()],
            t: 0,
        });
        Ok(Self {
            scheduler: Scheduler::new(cfg.strategy),
            cfg,
            policy,
            adam,
            round: 0,
            started: Instant::now(),
            last_records: Vec::new(),
        })
    }

    pub fn policy(&self) -> &TabularPolicy {
        &self.policy
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// Token records of the most recent round, with the outcome of their
    /// final evaluation.
    pub fn last_records(&self) -> &[TokenRecord] {
        &self.last_records
    }

    /// Runs every remaining round.
    pub fn run(&mut self) -> Result<Vec<MetricsRow>, TrainError> {
        let mut rows = Vec::with_capacity(self.cfg.rounds as usize);
        while self.round < self.cfg.rounds {
            rows.push(self.step()?);
        }
        Ok(rows)
    }

    /// Runs one rollout round and returns its metrics.
    pub fn step(&mut self) -> Result<MetricsRow, TrainError> {
        let k = self.round;
        let entropy = mean_policy_entropy(&self.policy);
        let pair = self.scheduler.thresholds(k, entropy);

        let (pass1, passk) = self.maybe_eval(k)?;

        let (mut groups, snapshot) =
            sample_rollouts(&self.policy, &self.cfg.task, self.cfg.group_size, self.cfg.seed, k);
        for g in &mut groups {
            g.fill_advantages(self.cfg.adv_delta);
        }
        let reward_mean = mean_reward(&groups);

        let mut cell_entropy: HashMap<(usize, usize), f64> = HashMap::new();
        let mut records = Vec::new();
        for g in &groups {
            for (traj, &adv) in g.trajectories.iter().zip(&g.advantages) {
                for (s, (&a, &p_old)) in traj.tokens.iter().zip(&traj.p_old).enumerate() {
                    let h = *cell_entropy
                        .entry((g.context, s))
                        .or_insert_with(|| entropy_slice(&snapshot.probs(g.context, s)));
                    records.push(TokenRecord {
                        context: g.context,
                        step: s,
                        action: a,
                        p_old,
                        p_theta: p_old,
                        advantage: adv,
                        region: classify_rule(p_old, h, adv),
                        outcome: None,
                    });
                }
            }
        }

        let bounds: Vec<(f64, f64)> = records
            .iter()
            .map(|r| pair.ratio_bounds(r.p_old))
            .collect::<Result<_, _>>()?;

        let mut order: Vec<usize> = (0..records.len()).collect();
        let mut rng = stream_rng(self.cfg.seed ^ SHUFFLE_SALT, k, u64::MAX);
        let mut outcomes: Vec<ClipOutcome> = Vec::with_capacity(records.len() * self.cfg.epochs);
        let mut grad_norm_sum = 0.0;
        let mut n_updates = 0usize;
        let n_mb = self.cfg.minibatches.min(records.len()).max(1);

        for _epoch in 0..self.cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in split_even(&order, n_mb) {
                let grad = self.minibatch_gradient(k, chunk, &mut records, &bounds, &mut outcomes)?;
                grad_norm_sum += grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                n_updates += 1;
                self.apply(&grad);
                if !self.policy.is_finite() {
                    let record = records[chunk[0]];
                    return Err(TrainError::NonFinite {
                        round: k,
                        detail: "logit table became non-finite after update".into(),
                        record: Box::new(record),
                    });
                }
            }
        }

        let stats = clip_stats_of(&outcomes);
        let regions = histogram(&records);
        self.last_records = records;
        self.round += 1;

        Ok(MetricsRow {
            step: k,
            entropy,
            reward_mean,
            grad_norm: if n_updates > 0 { grad_norm_sum / n_updates as f64 } else { 0.0 },
            clip_frac: stats.clip_fraction,
            eps_up_mean: stats.mean_upper_eps,
            eps_lo_mean: stats.mean_lower_eps,
            regions,
            od_state: self.scheduler.state().mode.as_u8(),
            pass1,
            passk,
            elapsed_s: self
                .cfg
                .record_wall_clock
                .then(|| self.started.elapsed().as_secs_f64()),
        })
    }

    fn maybe_eval(&self, k: u64) -> Result<(Option<f64>, Option<f64>), TrainError> {
        let Some(ev) = self.cfg.eval else {
            return Ok((None, None));
        };
        if !k.is_multiple_of(ev.every) && k + 1 != self.cfg.rounds {
            return Ok((None, None));
        }
        let seed = self.cfg.seed.rotate_left(17) ^ k;
        let r = eval_pass_at_k(&self.policy, &self.cfg.task, ev.k, ev.n_samples, seed)
            .map_err(TrainError::Config)?;
        Ok((Some(r.pass1), Some(r.passk)))
    }

    /// Token-mean gradient of the clipped surrogate over one minibatch,
    /// laid out like the logit table.
    fn minibatch_gradient(
        &self,
        round: u64,
        chunk: &[usize],
        records: &mut [TokenRecord],
        bounds: &[(f64, f64)],
        outcomes: &mut Vec<ClipOutcome>,
    ) -> Result<Vec<f64>, TrainError> {
        let vocab = self.policy.vocab();
        let mut grad = vec![0.0; self.policy.logits().len()];
        let mut live: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
        let scale = 1.0 / chunk.len() as f64;

        for &i in chunk {
            let rec = &mut records[i];
            let probs = live
                .entry((rec.context, rec.step))
                .or_insert_with(|| self.policy.probs(rec.context, rec.step));
            rec.p_theta = probs[rec.action];
            let (r_min, r_max) = bounds[i];
            let outcome = self.token_outcome(rec, r_min, r_max);
            if !outcome.objective.is_finite() || !outcome.grad_coeff.is_finite() {
                return Err(TrainError::NonFinite {
                    round,
                    detail: format!("clipped objective {outcome:?}"),
                    record: Box::new(*rec),
                });
            }
            rec.outcome = Some(outcome);
            outcomes.push(outcome);

            if outcome.grad_coeff != 0.0 {
                let o = self.policy.cell_offset(rec.context, rec.step);
                let w = outcome.grad_coeff * scale;
                for x in 0..vocab {
                    let onehot = if x == rec.action { 1.0 } else { 0.0 };
                    grad[o + x] += w * (onehot - probs[x]);
                }
            }
        }
        Ok(grad)
    }

    fn token_outcome(&self, rec: &mut TokenRecord, r_min: f64, r_max: f64) -> ClipOutcome {
        let ratio = rec.p_theta / rec.p_old;
        let Some(iv) = &self.cfg.intervention else {
            return clip_ratio(ratio, rec.advantage, r_min, r_max, self.cfg.clip_mode);
        };
        rec.region = classify_band(rec.p_theta, rec.p_old, rec.advantage, &iv.bands);
        if iv.regions.contains(&rec.region) {
            return clip_ratio(ratio, rec.advantage, r_min, r_max, self.cfg.clip_mode);
        }
        match iv.rest {
            RestTreatment::Unclipped => ClipOutcome {
                objective: ratio * rec.advantage,
                grad_coeff: ratio * rec.advantage,
                clipped: false,
                r_min,
                r_max,
            },
            RestTreatment::HardClip => clip_ratio(ratio, rec.advantage, r_min, r_max, ClipMode::HardClip),
            RestTreatment::Frozen => ClipOutcome {
                objective: ratio * rec.advantage,
                grad_coeff: 0.0,
                clipped: false,
                r_min,
                r_max,
            },
        }
    }

    fn apply(&mut self, grad: &[f64]) {
        let lr = self.cfg.learning_rate;
        match (&self.cfg.optimizer, &mut self.adam) {
            (Optimizer::Adam { beta1, beta2, eps }, Some(st)) => {
                st.t += 1;
                let c1 = 1.0 - beta1.powi(st.t);
                let c2 = 1.0 - beta2.powi(st.t);
                for (i, z) in self.policy.logits_mut().iter_mut().enumerate() {
                    st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * grad[i];
                    st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    *z += lr * (st.m[i] / c1) / ((st.v[i] / c2).sqrt() + eps);
                }
            }
            _ => {
                for (z, g) in self.policy.logits_mut().iter_mut().zip(grad) {
                    *z += lr * g;
                }
            }
        }
    }
}

fn mean_reward(groups: &[RolloutGroup]) -> f64 {
    let (sum, n) = groups
        .iter()
        .flat_map(|g| g.rewards.iter())
        .fold((0.0, 0usize), |(s, n), r| (s + r, n + 1));
    sum / n.max(1) as f64
}

fn histogram(records: &[TokenRecord]) -> RegionHistogram {
    crate::regions::region_histogram(records)
}

/// Splits `items` into `parts` contiguous chunks whose sizes differ by at
/// most one.
fn split_even(items: &[usize], parts: usize) -> Vec<&[usize]> {
    let base = items.len() / parts;
    let extra = items.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        out.push(&items[start..start + len]);
        start += len;
    }
    out
}

/// Runs a full training job.
pub fn train(cfg: TrainConfig) -> Result<Vec<MetricsRow>, TrainError> {
    Trainer::new(cfg)?.run()
}

/// Runs a region-intervention job; the configuration must name at least one
/// region.
pub fn intervention_train(cfg: TrainConfig) -> Result<Vec<MetricsRow>, TrainError> {
    match &cfg.intervention {
        Some(iv) if !iv.regions.is_empty() => train(cfg),
        _ => Err(TrainError::Config("intervention run without an intervention set".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clipping::ThresholdFn;
    use crate::numerics::{fd_gradient, softmax_slice};
    use crate::regions::RegionLabel;

    fn small(rounds: u64) -> TrainConfig {
        let mut cfg = TrainConfig::new(TaskSpec::preset("default").unwrap());
        cfg.rounds = rounds;
        cfg.strategy.t_max = rounds.max(2);
        cfg
    }

    #[test]
    fn single_on_policy_update_never_clips() {
        let mut cfg = small(1);
        cfg.epochs = 1;
        cfg.minibatches = 1;
        let rows = train(cfg).unwrap();
        assert_eq!(rows[0].clip_frac, 0.0);
    }

    #[test]
    fn several_epochs_drift_off_policy() {
        let mut cfg = small(3);
        cfg.epochs = 4;
        let rows = train(cfg).unwrap();
        assert!(rows.iter().all(|r| r.clip_frac > 0.0), "{rows:?}");
    }

    #[test]
    fn zero_learning_rate_freezes_everything() {
        let mut cfg = small(5);
        cfg.learning_rate = 0.0;
        cfg.init = PolicyInit::Prior {
            logit: 2.0,
            hit_rate: 0.5,
            seed: 1,
        };
        let rows = train(cfg).unwrap();
        assert!(rows.iter().all(|r| r.entropy == rows[0].entropy));
        // rewards are resampled each round, but the policy and the clip
        // statistics stay on-policy
        assert!(rows.iter().all(|r| r.clip_frac == 0.0 && r.grad_norm > 0.0));
    }

    #[test]
    fn same_seed_same_rows() {
        let mut cfg = small(8);
        cfg.strategy.kind = crate::scheduler::StrategyKind::Od;
        let a = train(cfg.clone()).unwrap();
        let b = train(cfg.clone()).unwrap();
        assert_eq!(a, b);
        cfg.seed += 1;
        assert_ne!(train(cfg).unwrap(), a);
    }

    #[test]
    fn rows_are_complete() {
        let mut cfg = small(6);
        cfg.eval = Some(EvalConfig {
            every: 2,
            k: 4,
            n_samples: 8,
        });
        let tokens = (cfg.task.n_contexts * cfg.group_size * cfg.task.horizon) as u64;
        let rows = train(cfg).unwrap();
        for (k, r) in rows.iter().enumerate() {
            assert_eq!(r.step, k as u64);
            let h = r.regions;
            assert_eq!(h.e1 + h.e2 + h.e3 + h.e4 + h.neutral, tokens);
            assert!((0.0..=1.0).contains(&r.clip_frac));
            assert!(r.entropy >= 0.0 && r.entropy <= (16f64).ln() + 1e-12);
            assert!(r.reward_mean.is_finite() && r.grad_norm.is_finite());
            assert!((r.eps_up_mean - 0.2).abs() < 1e-12 && (r.eps_lo_mean - 0.2).abs() < 1e-12);
            assert_eq!(r.elapsed_s, None);
            let eval_round = k % 2 == 0 || k == 5;
            assert_eq!(r.pass1.is_some(), eval_round);
            assert_eq!(r.passk.is_some(), eval_round);
        }
    }

    #[test]
    fn wall_clock_only_on_request() {
        let mut cfg = small(2);
        cfg.record_wall_clock = true;
        assert!(train(cfg).unwrap().iter().all(|r| r.elapsed_s.is_some()));
    }

    /// A trainer and a hand-built batch whose ratios are away from 1.
    fn drifted_batch() -> (Trainer, Vec<TokenRecord>) {
        let mut cfg = small(1);
        cfg.task = TaskSpec::preset("multi2").unwrap();
        let mut trainer = Trainer::new(cfg).unwrap();
        let old = trainer.policy.clone();
        for (i, z) in trainer.policy.logits_mut().iter_mut().enumerate() {
            *z = ((i * 37 % 11) as f64 - 5.0) * 0.05;
        }
        let mut records = Vec::new();
        for i in 0..40usize {
            let (c, s, a) = (i % 5, i % 3, (i * 7) % 6);
            records.push(TokenRecord {
                context: c,
                step: s,
                action: a,
                p_old: old.probs(c, s)[a],
                p_theta: old.probs(c, s)[a],
                advantage: if i % 3 == 0 { -1.3 } else { 0.4 + 0.1 * (i % 4) as f64 },
                region: RegionLabel::Neutral,
                outcome: None,
            });
        }
        (trainer, records)
    }

    #[test]
    fn gradient_matches_finite_differences_of_the_surrogate() {
        let (trainer, mut records) = drifted_batch();
        let chunk: Vec<usize> = (0..records.len()).collect();
        // bounds wide enough that nothing clips: the update is the gradient
        // of the token-mean importance-weighted objective
        let bounds = vec![(1e-6, 1e6); records.len()];
        let mut outcomes = Vec::new();
        let grad = trainer
            .minibatch_gradient(0, &chunk, &mut records, &bounds, &mut outcomes)
            .unwrap();
        assert!(outcomes.iter().all(|o| !o.clipped));

        let (v, horizon) = (trainer.policy.vocab(), trainer.policy.horizon());
        let objective = |z: &[f64]| {
            records
                .iter()
                .map(|r| {
                    let o = (r.context * horizon + r.step) * v;
                    softmax_slice(&z[o..o + v])[r.action] / r.p_old * r.advantage
                })
                .sum::<f64>()
                / records.len() as f64
        };
        let fd = fd_gradient(objective, trainer.policy.logits(), 1e-6).unwrap();
        for (g, f) in grad.iter().zip(&fd) {
            assert!((g - f).abs() < 1e-8, "{g} vs {f}");
        }
    }

    #[test]
    fn gradient_matches_token_by_token_sum_when_clipping() {
        let (trainer, mut records) = drifted_batch();
        let chunk: Vec<usize> = (0..records.len()).collect();
        let bounds = vec![(0.95, 1.05); records.len()];
        let mut outcomes = Vec::new();
        let grad = trainer
            .minibatch_gradient(0, &chunk, &mut records, &bounds, &mut outcomes)
            .unwrap();
        assert!(outcomes.iter().any(|o| o.clipped) && outcomes.iter().any(|o| !o.clipped));

        let v = trainer.policy.vocab();
        let mut oracle = vec![0.0; grad.len()];
        for r in &records {
            let p = trainer.policy.probs(r.context, r.step);
            let ratio = p[r.action] / r.p_old;
            let inside = (0.95..=1.05).contains(&ratio);
            // the min picks the clipped branch only when it is the smaller one
            let clipped = !inside && ratio.clamp(0.95, 1.05) * r.advantage < ratio * r.advantage;
            let coeff = if clipped { 0.0 } else { ratio * r.advantage };
            let o = trainer.policy.cell_offset(r.context, r.step);
            for x in 0..v {
                let e = if x == r.action { 1.0 } else { 0.0 };
                oracle[o + x] += coeff * (e - p[x]) / records.len() as f64;
            }
        }
        for (g, w) in grad.iter().zip(&oracle) {
            assert!((g - w).abs() < 1e-14, "{g} vs {w}");
        }
        for cell in grad.chunks(v) {
            assert!(cell.iter().sum::<f64>().abs() < 1e-8);
        }
    }

    #[test]
    fn every_cell_update_sums_to_zero() {
        for mode in [ClipMode::HardClip, ClipMode::GradPreserve] {
            let mut cfg = small(1);
            cfg.epochs = 1;
            cfg.minibatches = 1;
            cfg.learning_rate = 1.0;
            cfg.clip_mode = mode;
            let mut trainer = Trainer::new(cfg).unwrap();
            let before = trainer.policy.logits().to_vec();
            trainer.step().unwrap();
            let v = trainer.policy.vocab();
            let delta: Vec<f64> = trainer.policy.logits().iter().zip(&before).map(|(a, b)| a - b).collect();
            assert!(delta.iter().any(|d| *d != 0.0));
            for cell in delta.chunks(v) {
                assert!(cell.iter().sum::<f64>().abs() < 1e-8);
            }
        }
    }

    #[test]
    fn dynamic_bounds_show_up_in_epsilon_means() {
        let mut cfg = small(2);
        cfg.strategy.kind = crate::scheduler::StrategyKind::Fixed;
        cfg.strategy.upper_fn = ThresholdFn::default_upper();
        cfg.strategy.lower_fn = ThresholdFn::Constant { eps: 0.2 };
        let rows = train(cfg).unwrap();
        // at p_old = 1/16 the upper bound is 1.5/(1 + 0.25/16) - 1 > 0.47
        assert!(rows[0].eps_up_mean > 0.45);
        assert!((rows[0].eps_lo_mean - 0.2).abs() < 1e-12);
    }

    #[test]
    fn static_run_entropy_and_gradient_norm_fall_together() {
        let rows = train(small(120)).unwrap();
        let diag = grad_entropy_diag(&rows).unwrap();
        assert!(diag.pearson.unwrap() > 0.0, "{diag:?}");
        assert!(diag.max_ratio.is_finite());
    }

    #[test]
    fn empty_intervention_is_rejected() {
        let mut cfg = small(1);
        assert!(intervention_train(cfg.clone()).is_err());
        cfg.intervention = Some(Intervention {
            regions: vec![],
            bands: RegionBands::default(),
            rest: RestTreatment::Unclipped,
        });
        assert!(matches!(intervention_train(cfg), Err(TrainError::Config(_))));
    }

    #[test]
    fn split_even_covers_everything() {
        let items: Vec<usize> = (0..10).collect();
        let parts = split_even(&items, 4);
        assert_eq!(parts.iter().map(|p| p.len()).collect::<Vec<_>>(), vec![3, 3, 2, 2]);
        assert_eq!(parts.concat(), items);
    }
}
