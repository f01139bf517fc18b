//! Softmax, entropy and policy-gradient kernels over a single logit vector,
//! plus a central-difference gradient used to check the closed forms.
//!
//! Everything here is a pure function of its inputs.

use crate::error::{MathError, MathResult};

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Default relative tolerance for finite-difference agreement.
pub const FD_REL_TOL: f64 = 1e-5;

const SUM_TOL: f64 = 1e-12;

/// Pre-softmax scores over a vocabulary of size at least 2.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> MathResult<Self> {
        if values.len() < 2 {
            return Err(MathError::InvalidInput(format!(
                "vocabulary size must be at least 2, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(MathError::InvalidInput(format!(
                "logit {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A categorical distribution. Components lie in `[0, 1]` and sum to one.
///
/// Exact zeros are admitted so that degenerate distributions (and softmax
/// underflow under extreme logits) are representable; `0 ln 0` is taken as 0
/// wherever it appears.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> MathResult<Self> {
        if values.len() < 2 {
            return Err(MathError::InvalidInput(format!(
                "vocabulary size must be at least 2, got {}",
                values.len()
            )));
        }
        if let Some(i) = values
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(MathError::InvalidInput(format!(
                "probability {i} outside [0, 1] ({})",
                values[i]
            )));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(MathError::InvalidInput(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self(values))
    }

    /// The uniform distribution over `vocab` outcomes.
    pub fn uniform(vocab: usize) -> MathResult<Self> {
        if vocab < 2 {
            return Err(MathError::InvalidInput(format!(
                "vocabulary size must be at least 2, got {vocab}"
            )));
        }
        Ok(Self(vec![1.0 / vocab as f64; vocab]))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> MathResult<f64> {
        self.0.get(index).copied().ok_or(MathError::IndexOutOfRange {
            index,
            vocab: self.0.len(),
        })
    }
}

/// Sign of a real number as `-1`, `0` or `+1`.
pub fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Log-probabilities of `softmax(z)`, computed with a max shift.
pub fn log_softmax(z: &LogitVector) -> Vec<f64> {
    let lse = log_sum_exp(z.as_slice());
    z.as_slice().iter().map(|v| v - lse).collect()
}

/// Softmax of a logit vector.
pub fn softmax(z: &LogitVector) -> ProbVector {
    ProbVector(softmax_slice(z.as_slice()))
}

/// Softmax of a raw slice. Callers are responsible for finiteness; the
/// trainer uses this on table cells it has already validated.
pub fn softmax_slice(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Shannon entropy in nats.
pub fn entropy(p: &ProbVector) -> f64 {
    entropy_slice(p.as_slice())
}

pub fn entropy_slice(p: &[f64]) -> f64 {
    let h: f64 = p
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.ln())
        .sum();
    // rounding can leave a tiny negative value for one-hot inputs
    h.max(0.0)
}

/// Gradient of `H(softmax(z))` with respect to the logits, expressed in the
/// probabilities: `-p * (ln p + H)` componentwise.
pub fn entropy_grad_logits(p: &ProbVector) -> Vec<f64> {
    let centred = centred_log_probs(p.as_slice());
    p.as_slice()
        .iter()
        .zip(&centred)
        .map(|(&x, &c)| -x * c)
        .collect()
}

/// `ln p_x + H` for every `x`, evaluated as `sum_y p_y (ln p_x - ln p_y)`.
/// The two forms agree because the probabilities sum to one; this one is
/// exactly zero for a uniform distribution. Entries with `p_x = 0` are 0.
fn centred_log_probs(p: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = p.iter().map(|&x| if x > 0.0 { x.ln() } else { 0.0 }).collect();
    p.iter()
        .zip(&logs)
        .map(|(&px, &lx)| {
            if px == 0.0 {
                return 0.0;
            }
            p.iter()
                .zip(&logs)
                .filter(|(&py, _)| py > 0.0)
                .map(|(&py, &ly)| py * (lx - ly))
                .sum()
        })
        .collect()
}

/// Gradient of `A * ln softmax(z)_a` with respect to the logits:
/// `A * (e_a - p)`.
pub fn surrogate_grad_logits(p: &ProbVector, action: usize, advantage: f64) -> MathResult<Vec<f64>> {
    if action >= p.len() {
        return Err(MathError::IndexOutOfRange {
            index: action,
            vocab: p.len(),
        });
    }
    Ok(p.as_slice()
        .iter()
        .enumerate()
        .map(|(x, &px)| {
            let onehot = if x == action { 1.0 } else { 0.0 };
            advantage * (onehot - px)
        })
        .collect())
}

/// Decomposition of the inner product between the surrogate gradient and the
/// entropy gradient for one sampled token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentReport {
    /// `p_a (ln p_a + H)`
    pub token_term: f64,
    /// `sum_x p_x^2 (ln p_x + H)`
    pub baseline_term: f64,
    /// `-A (token_term - baseline_term)`
    pub inner_product: f64,
    /// `-sgn(A (ln p_a + H))`, the token-only approximation.
    pub approx_sign: i8,
}

impl AlignmentReport {
    /// Sign of the exact inner product.
    pub fn exact_sign(&self) -> i8 {
        sign(self.inner_product)
    }
}

/// How a single ascent step on token `action` with advantage `advantage`
/// moves the entropy, to first order.
pub fn entropy_alignment(p: &ProbVector, action: usize, advantage: f64) -> MathResult<AlignmentReport> {
    let pa = p.get(action)?;
    let centred = centred_log_probs(p.as_slice());

    let token_term = pa * centred[action];
    let baseline_term: f64 = p.as_slice().iter().zip(&centred).map(|(&x, &c)| x * x * c).sum();
    let inner_product = -advantage * (token_term - baseline_term);

    let surprisal_gap = if pa > 0.0 { centred[action] } else { f64::NEG_INFINITY };
    let approx_sign = if advantage == 0.0 {
        0
    } else {
        -sign(advantage * surprisal_gap)
    };

    Ok(AlignmentReport {
        token_term,
        baseline_term,
        inner_product,
        approx_sign,
    })
}

/// Central-difference gradient of `f` at `z` with step `h`.
pub fn fd_gradient<F>(f: F, z: &[f64], h: f64) -> MathResult<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(MathError::InvalidInput(format!("step must be positive, got {h}")));
    }
    let mut probe = z.to_vec();
    let mut grad = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(MathError::NonFinite { coord: i });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Largest componentwise difference, scaled by `max(1, ||reference||_inf)`.
pub fn relative_error(actual: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    actual
        .iter()
        .zip(reference)
        .map(|(a, r)| (a - r).abs())
        .fold(0.0, f64::max)
        / scale
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
