//! Self-verification suites behind the `check` command.
//!
//! Each suite returns the cases it ran and a description of every failure.
//! The ratio-bound functions are injected through [`CheckHooks`] so that the
//! harness itself can be tested against a deliberately broken bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::advantage::group_advantages;
use crate::clipping::{lower_ratio_bound, upper_ratio_bound, ThresholdFn};
use crate::error::MathResult;
use crate::numerics::{
    dot, entropy, entropy_alignment, entropy_grad_logits, fd_gradient, relative_error, softmax, softmax_slice,
    entropy_slice, surrogate_grad_logits, LogitVector, ProbVector, FD_REL_TOL, FD_STEP,
};
use crate::scheduler::{
    lambda_k, phase2_lower, tau_high, tau_low, thresholds_did, thresholds_id, thresholds_od, OdMode, ScheduleState,
    StrategyConfig, StrategyKind,
};

pub type BoundFn = fn(f64, &ThresholdFn) -> MathResult<f64>;

#[derive(Debug, Clone, Copy)]
pub struct CheckHooks {
    pub upper_ratio_bound: BoundFn,
    pub lower_ratio_bound: BoundFn,
    pub seed: u64,
}

impl Default for CheckHooks {
    fn default() -> Self {
        Self {
            upper_ratio_bound,
            lower_ratio_bound,
            seed: 0x0c0f_fee5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub const SUITES: [&str; 6] = [
    "fd_gradients",
    "alignment_consistency",
    "boundary_identities",
    "scheduler_continuity",
    "od_hysteresis",
    "group_advantage",
];

pub fn run_all(hooks: &CheckHooks) -> Vec<SuiteReport> {
    vec![
        fd_gradients(hooks.seed),
        alignment_consistency(hooks.seed),
        boundary_identities(hooks),
        scheduler_continuity(),
        od_hysteresis(),
        group_advantage(hooks.seed),
    ]
}

fn random_logits(rng: &mut ChaCha8Rng) -> LogitVector {
    let v = rng.random_range(2..=32);
    let scale = rng.random_range(0.1..4.0);
    LogitVector::new((0..v).map(|_| scale * rng.random_range(-1.0..1.0)).collect()).expect("finite logits")
}

fn fd_gradients(seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let cases = 1000;
    for case in 0..cases {
        let z = random_logits(&mut rng);
        let p = softmax(&z);
        let a = rng.random_range(0..z.len());
        let adv = rng.random_range(-2.0..2.0);

        let fd_h = fd_gradient(|zz| entropy_slice(&softmax_slice(zz)), z.as_slice(), FD_STEP)
            .expect("valid step");
        let err_h = relative_error(&entropy_grad_logits(&p), &fd_h);
        if err_h > FD_REL_TOL {
            failures.push(format!("case {case}: entropy gradient relative error {err_h:.3e}"));
        }

        let fd_s = fd_gradient(|zz| adv * softmax_slice(zz)[a].ln(), z.as_slice(), FD_STEP).expect("valid step");
        let analytic = surrogate_grad_logits(&p, a, adv).expect("action in range");
        let err_s = relative_error(&analytic, &fd_s);
        if err_s > FD_REL_TOL {
            failures.push(format!("case {case}: surrogate gradient relative error {err_s:.3e}"));
        }
    }
    SuiteReport {
        name: "fd_gradients",
        cases,
        failures,
    }
}

fn alignment_consistency(seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa11);
    let mut failures = Vec::new();
    let cases = 1000;
    for case in 0..cases {
        let z = random_logits(&mut rng);
        let p = softmax(&z);
        let a = rng.random_range(0..z.len());
        let adv = rng.random_range(-2.0..2.0);
        let rep = entropy_alignment(&p, a, adv).expect("action in range");
        let direct = dot(
            &surrogate_grad_logits(&p, a, adv).expect("action in range"),
            &entropy_grad_logits(&p),
        );
        if (rep.inner_product - direct).abs() > 1e-10 {
            failures.push(format!(
                "case {case}: inner product {} vs dot product {direct}",
                rep.inner_product
            ));
        }
    }
    for v in [2, 7, 16, 32] {
        let p = ProbVector::uniform(v).expect("v >= 2");
        let rep = entropy_alignment(&p, 0, 1.0).expect("action in range");
        if rep.inner_product != 0.0 {
            failures.push(format!("uniform V={v}: inner product {} is not exactly 0", rep.inner_product));
        }
        if entropy(&p) <= 0.0 {
            failures.push(format!("uniform V={v}: entropy not positive"));
        }
    }
    SuiteReport {
        name: "alignment_consistency",
        cases: cases + 4,
        failures,
    }
}

fn boundary_identities(hooks: &CheckHooks) -> SuiteReport {
    let upper = ThresholdFn::default_upper();
    let lower = ThresholdFn::default_lower();
    let mut failures = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for i in 1..=99 {
        let p = i as f64 / 100.0;
        let r_max = match (hooks.upper_ratio_bound)(p, &upper) {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("p_old={p}: upper bound error {e}"));
                continue;
            }
        };
        let r_min = match (hooks.lower_ratio_bound)(p, &lower) {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("p_old={p}: lower bound error {e}"));
                continue;
            }
        };
        let up_gap = (1.0 + upper.eval(r_max * p) - r_max).abs();
        let lo_gap = (1.0 - lower.eval(r_min * p) - r_min).abs();
        if up_gap > 1e-12 {
            failures.push(format!("p_old={p}: 1 + H(r_max p) - r_max = {up_gap:.3e}"));
        }
        if lo_gap > 1e-12 {
            failures.push(format!("p_old={p}: 1 - M(r_min p) - r_min = {lo_gap:.3e}"));
        }
        if let Some((pmax, pmin)) = prev {
            // with negative slopes the band narrows as p_old grows
            if r_max > pmax {
                failures.push(format!("p_old={p}: r_max increased"));
            }
            if r_min < pmin {
                failures.push(format!("p_old={p}: r_min decreased"));
            }
        }
        prev = Some((r_max, r_min));
    }
    SuiteReport {
        name: "boundary_identities",
        cases: 99,
        failures,
    }
}

fn scheduler_continuity() -> SuiteReport {
    let probes: Vec<f64> = std::iter::once(0.01)
        .chain((1..10).map(|i| i as f64 / 10.0))
        .chain(std::iter::once(0.99))
        .collect();
    let mut failures = Vec::new();
    let mut cases = 0;
    let t = 1000;
    for rho in [0.3, 0.4, 0.5, 0.6] {
        let split = (rho * t as f64).round() as u64;
        for kind in [StrategyKind::Id, StrategyKind::Did] {
            let cfg = StrategyConfig {
                kind,
                t_max: t,
                phase_ratio: rho,
                ..Default::default()
            };
            let at = match kind {
                StrategyKind::Id => thresholds_id(split, &cfg),
                _ => thresholds_did(split, &cfg),
            };
            let after = match kind {
                StrategyKind::Id => thresholds_id(split + 1, &cfg),
                _ => thresholds_did(split + 1, &cfg),
            };
            let limit_lower = phase2_lower(&cfg, 0.0);
            for &p in &probes {
                cases += 1;
                let want_upper = if kind == StrategyKind::Id {
                    cfg.eps_std
                } else {
                    cfg.upper_fn.eval(p)
                };
                let checks = [
                    ("upper at split", at.upper.eval(p), want_upper),
                    ("upper after split", after.upper.eval(p), want_upper),
                    ("lower at split", at.lower.eval(p), cfg.eps_std),
                    ("phase II lower limit", limit_lower.eval(p), cfg.eps_std),
                ];
                for (what, got, want) in checks {
                    if (got - want).abs() > 1e-12 {
                        failures.push(format!("{kind:?} rho={rho} p={p}: {what} {got} != {want}"));
                    }
                }
            }
        }
    }
    for t in [2, 10, 500, 1000] {
        cases += 1;
        let ends = [lambda_k(0, t), lambda_k(t / 2, t), lambda_k(t, t)];
        if ends != [1.0, 0.0, -1.0] {
            failures.push(format!("T={t}: lambda endpoints {ends:?}"));
        }
        let cfg = StrategyConfig {
            t_max: t,
            ..Default::default()
        };
        if tau_high(t, 1.7, &cfg) != tau_low(1.7, &cfg) {
            failures.push(format!("T={t}: tau_high(T) != tau_low"));
        }
    }
    SuiteReport {
        name: "scheduler_continuity",
        cases,
        failures,
    }
}

fn od_hysteresis() -> SuiteReport {
    let cfg = StrategyConfig {
        kind: StrategyKind::Od,
        t_max: 100,
        ..Default::default()
    };
    let h_init = 2.0;
    // tau_low = 0.4; tau_high(k) = 2.0 - 0.016 k
    let script: [(u64, f64, OdMode); 8] = [
        (0, 2.0, OdMode::Suppress),
        (10, 1.0, OdMode::Suppress),
        (20, 0.4, OdMode::Boost),
        (30, 1.0, OdMode::Boost),
        (40, 1.2, OdMode::Boost),
        (50, 1.3, OdMode::Suppress),
        (60, 0.9, OdMode::Suppress),
        (70, 0.3, OdMode::Boost),
    ];
    let mut state = ScheduleState::default();
    let mut failures = Vec::new();
    for (k, h, want) in script {
        let (pair, next) = thresholds_od(h, k, h_init, &state, &cfg);
        if next.mode != want {
            failures.push(format!("k={k} H={h}: mode {:?}, expected {want:?}", next.mode));
        }
        let (want_upper, want_lower) = match want {
            OdMode::Boost => (cfg.upper_fn, ThresholdFn::Constant { eps: cfg.eps_std }),
            OdMode::Suppress => (ThresholdFn::Constant { eps: cfg.eps_std }, cfg.lower_fn),
        };
        if pair.upper != want_upper || pair.lower != want_lower {
            failures.push(format!("k={k}: wrong threshold pair for {want:?}"));
        }
        state = next;
    }
    SuiteReport {
        name: "od_hysteresis",
        cases: script.len(),
        failures,
    }
}

fn group_advantage(seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e0);
    let mut failures = Vec::new();
    let cases = 1000;
    for case in 0..cases {
        let g = rng.random_range(2..=16);
        let rewards: Vec<f64> = (0..g).map(|_| rng.random_range(0.0..1.0)).collect();
        let adv = group_advantages(&rewards, 1e-4);
        let mean = adv.iter().sum::<f64>() / g as f64;
        if mean.abs() > 1e-12 {
            failures.push(format!("case {case}: mean advantage {mean:.3e}"));
        }
        let shift = rng.random_range(1..g);
        let mut rotated = rewards.clone();
        rotated.rotate_left(shift);
        let adv_rot = group_advantages(&rotated, 1e-4);
        let mut expect = adv.clone();
        expect.rotate_left(shift);
        // summation order changes with the permutation, so allow rounding
        if adv_rot.iter().zip(&expect).any(|(x, y)| (x - y).abs() > 1e-12) {
            failures.push(format!("case {case}: not permutation equivariant"));
        }
        let constant = vec![rewards[0]; g];
        if group_advantages(&constant, 1e-4).iter().any(|&a| a != 0.0) {
            failures.push(format!("case {case}: constant rewards gave non-zero advantages"));
        }
    }
    SuiteReport {
        name: "group_advantage",
        cases,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_build_passes_every_suite() {
        let reports = run_all(&CheckHooks::default());
        assert_eq!(reports.iter().map(|r| r.name).collect::<Vec<_>>(), SUITES);
        for r in &reports {
            assert!(r.passed(), "{}: {:?}", r.name, &r.failures[..r.failures.len().min(3)]);
        }
    }

    fn flipped_lower(p_old: f64, f: &ThresholdFn) -> MathResult<f64> {
        let (a, b) = f.coefficients();
        // sign error in the denominator
        Ok((1.0 - b) / (1.0 - a * p_old))
    }

    #[test]
    fn sign_flip_in_lower_bound_is_caught() {
        let hooks = CheckHooks {
            lower_ratio_bound: flipped_lower,
            ..Default::default()
        };
        let reports = run_all(&hooks);
        let boundary = reports.iter().find(|r| r.name == "boundary_identities").unwrap();
        assert!(!boundary.passed());
        assert!(reports.iter().filter(|r| r.name != "boundary_identities").all(|r| r.passed()));
    }
}
