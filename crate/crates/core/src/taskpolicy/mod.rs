//! Synthetic verifiable-reward tasks and the tabular softmax policy trained
//! on them.

mod policy;
mod rollout;
mod task;

pub use policy::{mean_policy_entropy, PolicyInit, PolicySnapshot, TabularPolicy};
pub use rollout::{sample_rollouts, stream_rng, TokenRecord, Trajectory};
pub use task::{verify_reward, RewardMode, TaskError, TaskSpec};
