//! Gradient-preserving clipping and policy-entropy control for GRPO-style
//! training, on tabular softmax policies small enough to check exactly.
//!
//! The library is organised bottom-up:
//!
//! * [`numerics`]: softmax, entropy, the closed-form logit gradients and a
//!   finite-difference oracle.
//! * [`regions`]: the E1-E4 classification of sampled tokens.
//! * [`clipping`]: probability-dependent clip thresholds and the per-token
//!   clipped surrogate.
//! * [`advantage`]: group-relative advantages.
//! * [`taskpolicy`]: synthetic verifiable-reward tasks, the tabular policy,
//!   rollout sampling.
//! * [`scheduler`]: static, increase-then-decrease, decrease-increase-decrease
//!   and oscillatory threshold schedules.
//! * [`trainer`]: the rollout/update loop and its metrics.
//! * [`check`]: the self-verification suites behind `gpclip check`.
//! * [`cli`]: configuration files, metrics files and the command-line tool.

pub mod advantage;
pub mod check;
pub mod cli;
pub mod clipping;
pub mod error;
pub mod numerics;
pub mod regions;
pub mod scheduler;
pub mod taskpolicy;
pub mod trainer;

pub use error::{MathError, MathResult};
