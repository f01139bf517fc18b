use serde::{Deserialize, Serialize};

use crate::regions::RegionHistogram;

/// Column order of the metrics files. The JSONL writer emits objects with
/// these keys in this order; the CSV writer flattens `regions` into
/// `regions.e1` .. `regions.neutral`.
pub const METRIC_FIELDS: [&str; 12] = [
    "step",
    "entropy",
    "reward_mean",
    "grad_norm",
    "clip_frac",
    "eps_up_mean",
    "eps_lo_mean",
    "regions",
    "od_state",
    "pass1",
    "passk",
    "elapsed_s",
];

/// Everything recorded for one rollout round.
///
/// `entropy` is the mean policy entropy at rollout time, the same quantity
/// the oscillatory schedule reacts to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRow {
    pub step: u64,
    pub entropy: f64,
    pub reward_mean: f64,
    /// Mean L2 norm of the table update direction over the round's steps.
    pub grad_norm: f64,
    pub clip_frac: f64,
    pub eps_up_mean: f64,
    pub eps_lo_mean: f64,
    pub regions: RegionHistogram,
    /// Hysteresis mode of the oscillatory schedule; 0 for other strategies.
    pub od_state: u8,
    pub pass1: Option<f64>,
    pub passk: Option<f64>,
    /// Wall-clock seconds since training started, when recorded.
    pub elapsed_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradEntropyDiag {
    /// Pearson correlation of entropy and gradient norm; `None` when either
    /// series is constant.
    pub pearson: Option<f64>,
    /// Largest observed `grad_norm / (2 * entropy)`.
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("need at least {needed} rows, got {got}")]
pub struct TooFewRows {
    pub needed: usize,
    pub got: usize,
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Relation between gradient norm and entropy over a run. Nothing is
/// asserted about the ratio; it is only reported.
pub fn grad_entropy_diag(rows: &[MetricsRow]) -> Result<GradEntropyDiag, TooFewRows> {
    const MIN_ROWS: usize = 10;
    if rows.len() < MIN_ROWS {
        return Err(TooFewRows {
            needed: MIN_ROWS,
            got: rows.len(),
        });
    }
    let h: Vec<f64> = rows.iter().map(|r| r.entropy).collect();
    let g: Vec<f64> = rows.iter().map(|r| r.grad_norm).collect();
    let max_ratio = rows
        .iter()
        .map(|r| {
            if r.entropy > 0.0 {
                r.grad_norm / (2.0 * r.entropy)
            } else if r.grad_norm > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    Ok(GradEntropyDiag {
        pearson: pearson(&h, &g),
        max_ratio,
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn fitted_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64, entropy: f64, grad_norm: f64) -> MetricsRow {
        MetricsRow {
            step,
            entropy,
            reward_mean: 0.0,
            grad_norm,
            clip_frac: 0.0,
            eps_up_mean: 0.2,
            eps_lo_mean: 0.2,
            regions: RegionHistogram::default(),
            od_state: 0,
            pass1: None,
            passk: None,
            elapsed_s: None,
        }
    }

    #[test]
    fn constant_entropy_has_no_correlation() {
        let rows: Vec<_> = (0..12).map(|k| row(k, 1.0, k as f64)).collect();
        let d = grad_entropy_diag(&rows).unwrap();
        assert_eq!(d.pearson, None);
    }

    #[test]
    fn exact_bound_gives_unit_ratio() {
        let rows: Vec<_> = (0..12).map(|k| row(k, 0.1 + k as f64, 2.0 * (0.1 + k as f64))).collect();
        let d = grad_entropy_diag(&rows).unwrap();
        assert!((d.max_ratio - 1.0).abs() < 1e-15);
        assert!((d.pearson.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_rows() {
        let rows: Vec<_> = (0..9).map(|k| row(k, 1.0, 1.0)).collect();
        assert_eq!(grad_entropy_diag(&rows), Err(TooFewRows { needed: 10, got: 9 }));
    }

    #[test]
    fn json_field_order() {
        let json = serde_json::to_string(&row(3, 1.0, 0.5)).unwrap();
        let mut last = 0;
        for f in METRIC_FIELDS {
            let pos = json.find(&format!("\"{f}\"")).unwrap();
            assert!(pos >= last);
            last = pos;
        }
    }

    #[test]
    fn slope_of_line() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        assert!((fitted_slope(&xs, &ys) + 0.5).abs() < 1e-12);
    }
}
