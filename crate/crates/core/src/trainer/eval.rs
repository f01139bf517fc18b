use crate::taskpolicy::{sample_rollouts, TabularPolicy, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassAtK {
    pub k: usize,
    pub pass1: f64,
    pub passk: f64,
}

/// Unbiased pass@k for one prompt with `correct` successes out of `n`
/// samples: `1 - C(n - c, k) / C(n, k)`.
pub fn pass_at_k_estimate(n: usize, correct: usize, k: usize) -> f64 {
    if n - correct < k {
        return 1.0;
    }
    let mut miss = 1.0;
    for i in 0..k {
        miss *= (n - correct - i) as f64 / (n - i) as f64;
    }
    1.0 - miss
}

/// Samples `n_samples` sequences per context and averages the pass@1 and
/// pass@k estimates over contexts. A sample counts as correct when it earns
/// the full reward.
pub fn eval_pass_at_k(
    policy: &TabularPolicy,
    task: &TaskSpec,
    k: usize,
    n_samples: usize,
    seed: u64,
) -> Result<PassAtK, String> {
    if k == 0 || k > n_samples || n_samples < 2 {
        return Err(format!("need 1 <= k <= n_samples and n_samples >= 2, got k={k} n={n_samples}"));
    }
    let (groups, _) = sample_rollouts(policy, task, n_samples, seed, u64::MAX);
    let mut p1 = 0.0;
    let mut pk = 0.0;
    for g in &groups {
        let correct = g.rewards.iter().filter(|&&r| r >= 1.0).count();
        p1 += pass_at_k_estimate(n_samples, correct, 1);
        pk += pass_at_k_estimate(n_samples, correct, k);
    }
    let n = groups.len() as f64;
    Ok(PassAtK {
        k,
        pass1: p1 / n,
        passk: pk / n,
    })
}
