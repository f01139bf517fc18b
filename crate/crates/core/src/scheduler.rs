//! Per-step clip threshold schedules.
//!
//! * `Static`: `eps_std` on both sides.
//! * `Id` (increase then decrease): the upper threshold anneals from the
//!   dynamic `H(p)` to `eps_std` during phase I; the lower threshold then
//!   ramps from `eps_std` to the dynamic `M(p)` during phase II.
//! * `Did` (decrease, increase, decrease): the upper threshold ramps from
//!   `eps_std` to `H(p)` in phase I and stays there; the lower threshold
//!   ramps as in `Id`.
//! * `Od` (oscillatory decay): a two-state hysteresis controller switches
//!   between boosting (`H(p)` upper) and suppressing (`M(p)` lower) entropy
//!   between a fixed floor and a ceiling that decays to it.
//! * `Fixed`: the configured upper and lower functions, unchanged over time.

use serde::{Deserialize, Serialize};

use crate::clipping::{ThresholdFn, ThresholdPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    #[default]
    Static,
    Id,
    Did,
    Od,
    /// `upper_fn` and `lower_fn` at every step, without annealing.
    Fixed,
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "static" => Ok(StrategyKind::Static),
            "id" => Ok(StrategyKind::Id),
            "did" => Ok(StrategyKind::Did),
            "od" => Ok(StrategyKind::Od),
            "fixed" => Ok(StrategyKind::Fixed),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

/// Which expression drives the lower threshold in phase II.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase2Formula {
    /// `(1 + lambda) eps_std - lambda M(p)`: ramps eps_std -> M(p).
    #[default]
    Ramp,
    /// `(1 + lambda) M(p) - lambda eps_std`: jumps to M(p) at the phase
    /// boundary and decays back to eps_std.
    Printed,
}

/// Hysteresis mode of the oscillatory schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OdMode {
    /// `s = 0`: dynamic lower threshold, entropy is pushed down.
    #[default]
    Suppress,
    /// `s = 1`: dynamic upper threshold, entropy is pushed up.
    Boost,
}

impl OdMode {
    pub fn as_u8(self) -> u8 {
        match self {
            OdMode::Suppress => 0,
            OdMode::Boost => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub eps_std: f64,
    /// Dynamic upper threshold `H(p)`.
    pub upper_fn: ThresholdFn,
    /// Dynamic lower threshold `M(p)`.
    pub lower_fn: ThresholdFn,
    pub t_max: u64,
    /// Fraction of `t_max` spent in phase I.
    pub phase_ratio: f64,
    pub phase2_formula: Phase2Formula,
    /// Entropy at the start of training. When unset the trainer measures it.
    pub h_init: Option<f64>,
    /// Entropy floor as a fraction of `h_init`.
    pub h_min_factor: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            kind: StrategyKind::Static,
            eps_std: 0.2,
            upper_fn: ThresholdFn::default_upper(),
            lower_fn: ThresholdFn::default_lower(),
            t_max: 500,
            phase_ratio: 0.5,
            phase2_formula: Phase2Formula::Ramp,
            h_init: None,
            h_min_factor: 0.2,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.eps_std > 0.0 && self.eps_std < 1.0) {
            return Err(format!("eps_std must lie in (0, 1), got {}", self.eps_std));
        }
        if !(self.phase_ratio > 0.0 && self.phase_ratio < 1.0) {
            return Err(format!("phase_ratio must lie in (0, 1), got {}", self.phase_ratio));
        }
        if self.t_max < 2 {
            return Err(format!("t_max must be at least 2, got {}", self.t_max));
        }
        if !(self.h_min_factor > 0.0 && self.h_min_factor < 1.0) {
            return Err(format!("h_min_factor must lie in (0, 1), got {}", self.h_min_factor));
        }
        if let Some(h) = self.h_init {
            if !(h > 0.0 && h.is_finite()) {
                return Err(format!("h_init must be positive, got {h}"));
            }
        }
        self.upper_fn.validate().map_err(|e| format!("upper_fn: {e}"))?;
        self.lower_fn.validate().map_err(|e| format!("lower_fn: {e}"))?;
        Ok(())
    }

    fn std_fn(&self) -> ThresholdFn {
        ThresholdFn::Constant { eps: self.eps_std }
    }

    fn split(&self) -> f64 {
        self.phase_ratio * self.t_max as f64
    }
}

/// Temporal scaling factor `1 - 2k / T_max`.
pub fn lambda_k(k: u64, t_max: u64) -> f64 {
    1.0 - 2.0 * k as f64 / t_max as f64
}

/// Scaling factor for a phase split at `rho * T_max`: piecewise linear with
/// value 1 at `k = 0`, 0 at the split and -1 at `T_max`. Equals
/// [`lambda_k`] when `rho = 0.5`.
pub fn phase_lambda(k: u64, t_max: u64, rho: f64) -> f64 {
    if rho == 0.5 {
        return lambda_k(k, t_max);
    }
    let k = k as f64;
    let t = t_max as f64;
    let split = rho * t;
    if k <= split {
        1.0 - k / split
    } else {
        -(k - split) / (t - split)
    }
}

/// Phase II lower threshold for a given `lambda`; equals `eps_std` at 0.
pub fn phase2_lower(cfg: &StrategyConfig, lambda: f64) -> ThresholdFn {
    let std = cfg.std_fn();
    match cfg.phase2_formula {
        Phase2Formula::Ramp => std.blend(1.0 + lambda, &cfg.lower_fn, -lambda),
        Phase2Formula::Printed => cfg.lower_fn.blend(1.0 + lambda, &std, -lambda),
    }
}

pub fn thresholds_static(cfg: &StrategyConfig) -> ThresholdPair {
    ThresholdPair::symmetric(cfg.eps_std)
}

pub fn thresholds_id(k: u64, cfg: &StrategyConfig) -> ThresholdPair {
    let lambda = phase_lambda(k, cfg.t_max, cfg.phase_ratio);
    let std = cfg.std_fn();
    if (k as f64) <= cfg.split() {
        ThresholdPair {
            upper: cfg.upper_fn.blend(lambda, &std, 1.0 - lambda),
            lower: std,
        }
    } else {
        ThresholdPair {
            upper: std,
            lower: phase2_lower(cfg, lambda),
        }
    }
}

pub fn thresholds_did(k: u64, cfg: &StrategyConfig) -> ThresholdPair {
    let lambda = phase_lambda(k, cfg.t_max, cfg.phase_ratio);
    let std = cfg.std_fn();
    if (k as f64) <= cfg.split() {
        ThresholdPair {
            upper: std.blend(lambda, &cfg.upper_fn, 1.0 - lambda),
            lower: std,
        }
    } else {
        ThresholdPair {
            upper: cfg.upper_fn,
            lower: phase2_lower(cfg, lambda),
        }
    }
}

/// Entropy floor `h_min_factor * h_init`.
pub fn tau_low(h_init: f64, cfg: &StrategyConfig) -> f64 {
    cfg.h_min_factor * h_init
}

/// Entropy ceiling, decaying linearly from `h_init` to the floor.
pub fn tau_high(k: u64, h_init: f64, cfg: &StrategyConfig) -> f64 {
    let h_min = tau_low(h_init, cfg);
    let frac = 1.0 - (k as f64 / cfg.t_max as f64).min(1.0);
    h_min + (h_init - h_min) * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScheduleState {
    pub k: u64,
    pub mode: OdMode,
    pub last: Option<ThresholdPair>,
}

/// One step of the oscillatory schedule: update the hysteresis mode from the
/// measured entropy, then emit the pair for the new mode.
pub fn thresholds_od(
    h_current: f64,
    k: u64,
    h_init: f64,
    state: &ScheduleState,
    cfg: &StrategyConfig,
) -> (ThresholdPair, ScheduleState) {
    let low = tau_low(h_init, cfg);
    let high = tau_high(k, h_init, cfg);
    let mode = if h_current <= low {
        OdMode::Boost
    } else if h_current > high {
        OdMode::Suppress
    } else {
        state.mode
    };
    let std = cfg.std_fn();
    let pair = match mode {
        OdMode::Boost => ThresholdPair {
            upper: cfg.upper_fn,
            lower: std,
        },
        OdMode::Suppress => ThresholdPair {
            upper: std,
            lower: cfg.lower_fn,
        },
    };
    let next = ScheduleState {
        k,
        mode,
        last: Some(pair),
    };
    (pair, next)
}

/// Owns the strategy configuration and the controller state across steps.
#[derive(Debug, Clone)]
pub struct Scheduler {
    cfg: StrategyConfig,
    h_init: Option<f64>,
    state: ScheduleState,
    switches: u32,
}

impl Scheduler {
    pub fn new(cfg: StrategyConfig) -> Self {
        Self {
            h_init: cfg.h_init,
            cfg,
            state: ScheduleState::default(),
            switches: 0,
        }
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ScheduleState {
        &self.state
    }

    pub fn switches(&self) -> u32 {
        self.switches
    }

    pub fn h_init(&self) -> Option<f64> {
        self.h_init
    }

    /// Threshold pair for step `k`. `h_current` is only consulted by `Od`; the
    /// first value seen becomes `h_init` if none was configured.
    pub fn thresholds(&mut self, k: u64, h_current: f64) -> ThresholdPair {
        let k_eff = k.min(self.cfg.t_max);
        let pair = match self.cfg.kind {
            StrategyKind::Static => thresholds_static(&self.cfg),
            StrategyKind::Id => thresholds_id(k_eff, &self.cfg),
            StrategyKind::Did => thresholds_did(k_eff, &self.cfg),
            StrategyKind::Fixed => ThresholdPair {
                upper: self.cfg.upper_fn,
                lower: self.cfg.lower_fn,
            },
            StrategyKind::Od => {
                let h_init = *self.h_init.get_or_insert(h_current);
                let (pair, next) = thresholds_od(h_current, k_eff, h_init, &self.state, &self.cfg);
                if next.mode != self.state.mode {
                    self.switches += 1;
                }
                self.state = next;
                pair
            }
        };
        self.state.k = k;
        self.state.last = Some(pair);
        pair
    }
}
