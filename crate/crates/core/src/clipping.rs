//! Clip threshold functions, their closed-form ratio bounds, and the per-token
//! clipped surrogate.
//!
//! A threshold function gives the clip half-width as a function of the
//! current token probability. For a linear function `eps(p) = slope*p + intercept`
//! the implicit constraint `pi_theta <= (1 + eps(pi_theta)) * pi_old` resolves to
//!
//! ```text
//! r_max = (1 + intercept) / (1 - slope * p_old)
//! r_min = (1 - intercept) / (1 + slope * p_old)
//! ```
//!
//! so both bounds depend only on the rollout-time probability.

use serde::{Deserialize, Serialize};

use crate::error::{MathError, MathResult};
use crate::taskpolicy::TokenRecord;

/// Clip half-width as a function of token probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ThresholdFn {
    Constant { eps: f64 },
    Linear { slope: f64, intercept: f64 },
}

impl ThresholdFn {
    pub fn constant(eps: f64) -> MathResult<Self> {
        let f = ThresholdFn::Constant { eps };
        f.validate()?;
        Ok(f)
    }

    pub fn linear(slope: f64, intercept: f64) -> MathResult<Self> {
        let f = ThresholdFn::Linear { slope, intercept };
        f.validate()?;
        Ok(f)
    }

    /// Default dynamic upper threshold `H(p) = -0.25 p + 0.5`.
    pub fn default_upper() -> Self {
        ThresholdFn::Linear {
            slope: -0.25,
            intercept: 0.5,
        }
    }

    /// Default dynamic lower threshold `M(p) = -0.13 p + 0.3`.
    pub fn default_lower() -> Self {
        ThresholdFn::Linear {
            slope: -0.13,
            intercept: 0.3,
        }
    }

    pub fn validate(&self) -> MathResult<()> {
        match *self {
            ThresholdFn::Constant { eps } => {
                if !(eps.is_finite() && (0.0..1.0).contains(&eps)) {
                    return Err(MathError::InvalidInput(format!(
                        "constant threshold must lie in [0, 1), got {eps}"
                    )));
                }
            }
            ThresholdFn::Linear { slope, intercept } => {
                if !(slope.is_finite() && intercept.is_finite()) {
                    return Err(MathError::InvalidInput("non-finite linear threshold".into()));
                }
                // linear in p, so positivity on [0, 1] is decided at the endpoints
                if intercept <= 0.0 || slope + intercept <= 0.0 {
                    return Err(MathError::InvalidInput(format!(
                        "linear threshold {slope}*p + {intercept} is not positive on [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, p: f64) -> f64 {
        match *self {
            ThresholdFn::Constant { eps } => eps,
            ThresholdFn::Linear { slope, intercept } => slope * p + intercept,
        }
    }

    /// `(slope, intercept)` form; a constant has slope zero.
    pub fn coefficients(&self) -> (f64, f64) {
        match *self {
            ThresholdFn::Constant { eps } => (0.0, eps),
            ThresholdFn::Linear { slope, intercept } => (slope, intercept),
        }
    }

    /// Pointwise `w_self * self + w_other * other`. Mixing two constants gives
    /// a constant; anything else is linear.
    pub fn blend(&self, w_self: f64, other: &ThresholdFn, w_other: f64) -> ThresholdFn {
        match (self, other) {
            (ThresholdFn::Constant { eps: a }, ThresholdFn::Constant { eps: b }) => {
                ThresholdFn::Constant {
                    eps: w_self * a + w_other * b,
                }
            }
            _ => {
                let (sa, ia) = self.coefficients();
                let (sb, ib) = other.coefficients();
                ThresholdFn::Linear {
                    slope: w_self * sa + w_other * sb,
                    intercept: w_self * ia + w_other * ib,
                }
            }
        }
    }
}

/// Upper and lower threshold functions in force at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub upper: ThresholdFn,
    pub lower: ThresholdFn,
}

impl ThresholdPair {
    pub fn symmetric(eps: f64) -> Self {
        Self {
            upper: ThresholdFn::Constant { eps },
            lower: ThresholdFn::Constant { eps },
        }
    }

    /// `(r_min, r_max)` for a token whose rollout probability was `p_old`.
    pub fn ratio_bounds(&self, p_old: f64) -> MathResult<(f64, f64)> {
        Ok((lower_ratio_bound(p_old, &self.lower)?, upper_ratio_bound(p_old, &self.upper)?))
    }
}

fn check_prob(p: f64) -> MathResult<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(MathError::InvalidInput(format!(
            "probability must lie in (0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Largest admissible ratio. Not capped at `1 / p_old`.
pub fn upper_ratio_bound(p_old: f64, f: &ThresholdFn) -> MathResult<f64> {
    check_prob(p_old)?;
    match *f {
        ThresholdFn::Constant { eps } => Ok(1.0 + eps),
        ThresholdFn::Linear { slope, intercept } => {
            let denom = 1.0 - slope * p_old;
            if denom <= 0.0 {
                return Err(MathError::DegenerateBound(format!(
                    "upper bound denominator {denom} at p_old={p_old}"
                )));
            }
            Ok((1.0 + intercept) / denom)
        }
    }
}

/// Smallest admissible ratio; must be positive.
pub fn lower_ratio_bound(p_old: f64, f: &ThresholdFn) -> MathResult<f64> {
    check_prob(p_old)?;
    let r_min = match *f {
        ThresholdFn::Constant { eps } => 1.0 - eps,
        ThresholdFn::Linear { slope, intercept } => {
            let denom = 1.0 + slope * p_old;
            if denom <= 0.0 {
                return Err(MathError::DegenerateBound(format!(
                    "lower bound denominator {denom} at p_old={p_old}"
                )));
            }
            (1.0 - intercept) / denom
        }
    };
    if r_min <= 0.0 {
        return Err(MathError::DegenerateBound(format!(
            "lower ratio bound {r_min} is not positive at p_old={p_old}"
        )));
    }
    Ok(r_min)
}

/// How a clipped ratio feeds the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    /// PPO min/clip: tokens on the clipped branch get no gradient.
    #[default]
    HardClip,
    /// The clamped ratio is a detached weight; clipped tokens keep a gradient.
    GradPreserve,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipOutcome {
    pub objective: f64,
    /// Multiplier on `grad_z ln pi_theta(a|s)`.
    pub grad_coeff: f64,
    pub clipped: bool,
    pub r_min: f64,
    pub r_max: f64,
}

/// Per-token clipped surrogate for a given ratio and explicit bounds.
pub fn clip_ratio(ratio: f64, advantage: f64, r_min: f64, r_max: f64, mode: ClipMode) -> ClipOutcome {
    let clamped = ratio.clamp(r_min, r_max);
    let unclipped_obj = ratio * advantage;
    let clipped_obj = clamped * advantage;
    // the min picks the clipped branch only when it is strictly smaller
    let clipped = clipped_obj < unclipped_obj;
    match mode {
        ClipMode::HardClip => ClipOutcome {
            objective: unclipped_obj.min(clipped_obj),
            grad_coeff: if clipped { 0.0 } else { unclipped_obj },
            clipped,
            r_min,
            r_max,
        },
        ClipMode::GradPreserve => ClipOutcome {
            objective: clipped_obj,
            grad_coeff: clipped_obj,
            clipped,
            r_min,
            r_max,
        },
    }
}

/// Per-token clipped surrogate with bounds derived from `pair` at `p_old`.
pub fn token_objective(
    p_theta: f64,
    p_old: f64,
    advantage: f64,
    pair: &ThresholdPair,
    mode: ClipMode,
) -> MathResult<ClipOutcome> {
    check_prob(p_theta)?;
    let (r_min, r_max) = pair.ratio_bounds(p_old)?;
    Ok(clip_ratio(p_theta / p_old, advantage, r_min, r_max, mode))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClipStats {
    pub clip_fraction: f64,
    pub mean_upper_eps: f64,
    pub mean_lower_eps: f64,
    /// Set when there were no outcomes to average; all means are then zero.
    pub empty: bool,
}

/// Aggregates clip outcomes. Records without an outcome are skipped.
pub fn clip_stats(records: &[TokenRecord]) -> ClipStats {
    clip_stats_of(records.iter().filter_map(|r| r.outcome.as_ref()))
}

pub fn clip_stats_of<'a, I>(outcomes: I) -> ClipStats
where
    I: IntoIterator<Item = &'a ClipOutcome>,
{
    let mut n = 0usize;
    let mut clipped = 0usize;
    let mut up = 0.0;
    let mut lo = 0.0;
    for o in outcomes {
        n += 1;
        clipped += o.clipped as usize;
        up += o.r_max - 1.0;
        lo += 1.0 - o.r_min;
    }
    if n == 0 {
        return ClipStats {
            empty: true,
            ..Default::default()
        };
    }
    let n = n as f64;
    ClipStats {
        clip_fraction: clipped as f64 / n,
        mean_upper_eps: up / n,
        mean_lower_eps: lo / n,
        empty: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> impl Iterator<Item = f64> {
        (1..=99).map(|i| i as f64 / 99.0)
    }

    #[test]
    fn constant_bounds() {
        let c = ThresholdFn::constant(0.2).unwrap();
        for p in grid() {
            assert_eq!(upper_ratio_bound(p, &c).unwrap(), 1.2);
            assert_eq!(lower_ratio_bound(p, &c).unwrap(), 0.8);
        }
    }

    #[test]
    fn linear_upper_examples() {
        let h = ThresholdFn::default_upper();
        assert!((upper_ratio_bound(0.5, &h).unwrap() - 1.5 / 1.125).abs() < 1e-15);
        assert!((upper_ratio_bound(0.5, &h).unwrap() - 1.3333).abs() < 1e-4);
        assert!((upper_ratio_bound(1.0, &h).unwrap() - 1.2).abs() < 1e-15);
    }

    #[test]
    fn linear_lower_examples() {
        let m = ThresholdFn::default_lower();
        let at_one = lower_ratio_bound(1.0, &m).unwrap();
        assert!((at_one - 0.7 / 0.87).abs() < 1e-15);
        assert!((at_one - 0.80460).abs() < 1e-5);
        assert!(1.0 - at_one < 0.2);
        let near_zero = lower_ratio_bound(1e-12, &m).unwrap();
        assert!((near_zero - 0.7).abs() < 1e-9);
    }

    #[test]
    fn degenerate_bounds_are_errors() {
        let steep = ThresholdFn::Linear { slope: 2.0, intercept: 0.1 };
        assert!(matches!(
            upper_ratio_bound(0.6, &steep),
            Err(MathError::DegenerateBound(_))
        ));
        let neg = ThresholdFn::Linear { slope: -2.0, intercept: 2.5 };
        assert!(matches!(
            lower_ratio_bound(0.6, &neg),
            Err(MathError::DegenerateBound(_))
        ));
        // r_min <= 0 when the intercept reaches 1
        let wide = ThresholdFn::Linear { slope: -0.5, intercept: 1.0 };
        assert!(matches!(
            lower_ratio_bound(0.5, &wide),
            Err(MathError::DegenerateBound(_))
        ));
        assert!(upper_ratio_bound(0.0, &ThresholdFn::default_upper()).is_err());
    }

    #[test]
    fn threshold_validation() {
        assert!(ThresholdFn::constant(1.0).is_err());
        assert!(ThresholdFn::constant(-0.1).is_err());
        assert!(ThresholdFn::linear(-0.6, 0.5).is_err());
        assert!(ThresholdFn::linear(0.3, 0.0).is_err());
        assert!(ThresholdFn::default_upper().validate().is_ok());
        assert!(ThresholdFn::default_lower().validate().is_ok());
    }

    #[test]
    fn boundary_self_consistency_and_monotonicity() {
        for f in [ThresholdFn::default_upper(), ThresholdFn::default_lower()] {
            let mut prev: Option<(f64, f64)> = None;
            for p in grid() {
                let r_max = upper_ratio_bound(p, &f).unwrap();
                let r_min = lower_ratio_bound(p, &f).unwrap();
                assert!((1.0 + f.eval(r_max * p) - r_max).abs() < 1e-12);
                assert!((1.0 - f.eval(r_min * p) - r_min).abs() < 1e-12);
                if let Some((pmin, pmax)) = prev {
                    assert!(r_max < pmax);
                    assert!(r_min > pmin);
                }
                prev = Some((r_min, r_max));
            }
        }
    }

    #[test]
    fn blend_is_pointwise() {
        let h = ThresholdFn::default_upper();
        let c = ThresholdFn::Constant { eps: 0.2 };
        let mix = h.blend(0.3, &c, 0.7);
        for p in grid() {
            assert!((mix.eval(p) - (0.3 * h.eval(p) + 0.7 * 0.2)).abs() < 1e-15);
        }
        assert_eq!(c.blend(0.5, &c, 0.5), ThresholdFn::Constant { eps: 0.2 });
    }

    #[test]
    fn token_objective_examples() {
        let out = clip_ratio(1.5, 2.0, 0.8, 1.2, ClipMode::HardClip);
        assert!((out.objective - 2.4).abs() < 1e-15);
        assert_eq!(out.grad_coeff, 0.0);
        assert!(out.clipped);

        let out = clip_ratio(0.5, -1.0, 0.8, 1.2, ClipMode::HardClip);
        assert!((out.objective + 0.8).abs() < 1e-15);
        assert_eq!(out.grad_coeff, 0.0);
        assert!(out.clipped);

        let pair = ThresholdPair {
            upper: ThresholdFn::default_upper(),
            lower: ThresholdFn::default_lower(),
        };
        for a in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            for mode in [ClipMode::HardClip, ClipMode::GradPreserve] {
                let out = token_objective(0.4, 0.4, a, &pair, mode).unwrap();
                assert_eq!(out.objective, a);
                assert_eq!(out.grad_coeff, a);
                assert!(!out.clipped);
                assert!(out.r_min < 1.0 && 1.0 < out.r_max);
            }
        }
    }

    #[test]
    fn grad_preserve_keeps_gradient() {
        let out = clip_ratio(1.5, 2.0, 0.8, 1.2, ClipMode::GradPreserve);
        assert!(out.clipped);
        assert!((out.grad_coeff - 2.4).abs() < 1e-15);
        let out = clip_ratio(0.5, -1.0, 0.8, 1.2, ClipMode::GradPreserve);
        assert!((out.grad_coeff + 0.8).abs() < 1e-15);
    }

    #[test]
    fn stats() {
        let mk = |clipped| ClipOutcome {
            objective: 0.0,
            grad_coeff: 0.0,
            clipped,
            r_min: 0.8,
            r_max: 1.2,
        };
        let s = clip_stats_of(&[mk(false), mk(false)]);
        assert_eq!(s.clip_fraction, 0.0);
        assert_eq!(s.mean_upper_eps, 1.2 - 1.0);
        let s = clip_stats_of(&[mk(true), mk(true), mk(true)]);
        assert_eq!(s.clip_fraction, 1.0);
        let s = clip_stats_of(&[]);
        assert!(s.empty);
        assert_eq!(s.clip_fraction, 0.0);

        let c = ThresholdPair::symmetric(0.2);
        let outs: Vec<_> = [0.1, 0.4, 0.9]
            .iter()
            .map(|&p| token_objective(p, p, 1.0, &c, ClipMode::HardClip).unwrap())
            .collect();
        let s = clip_stats_of(&outs);
        assert_eq!(s.mean_upper_eps, upper_ratio_bound(0.5, &c.upper).unwrap() - 1.0);
    }

    // Textbook PPO-Clip written out by cases.
    fn ppo_reference(r: f64, a: f64, eps: f64) -> (f64, bool) {
        if a >= 0.0 {
            if r > 1.0 + eps {
                ((1.0 + eps) * a, a > 0.0)
            } else {
                (r * a, false)
            }
        } else if r < 1.0 - eps {
            ((1.0 - eps) * a, true)
        } else {
            (r * a, false)
        }
    }

    proptest! {
        #[test]
        fn hardclip_matches_textbook_ppo(r in 0.01f64..3.0, a in -3.0f64..3.0) {
            let out = clip_ratio(r, a, 0.8, 1.2, ClipMode::HardClip);
            let (obj, clipped) = ppo_reference(r, a, 0.2);
            prop_assert!((out.objective - obj).abs() < 1e-12);
            prop_assert_eq!(out.clipped, clipped);
        }

        #[test]
        fn grad_coeff_contract(r in 0.01f64..3.0, a in -3.0f64..3.0) {
            prop_assume!(a != 0.0);
            let hard = clip_ratio(r, a, 0.8, 1.2, ClipMode::HardClip);
            prop_assert_eq!(hard.grad_coeff == 0.0, hard.clipped);
            let soft = clip_ratio(r, a, 0.8, 1.2, ClipMode::GradPreserve);
            prop_assert!(soft.grad_coeff != 0.0);
        }
    }
}
