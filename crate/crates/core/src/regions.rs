//! Entropy-sensitive regions E1-E4.
//!
//! A sampled token either sharpens the policy (E1: rewarded and unsurprising,
//! E4: penalised and surprising) or flattens it (E2: rewarded and surprising,
//! E3: penalised and unsurprising). Two classifiers are provided: the
//! surprisal-vs-entropy rule, and a probability/ratio band classifier used by
//! the region intervention runs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::taskpolicy::TokenRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionLabel {
    E1,
    E2,
    E3,
    E4,
    Neutral,
}

impl RegionLabel {
    pub const ALL: [RegionLabel; 5] = [
        RegionLabel::E1,
        RegionLabel::E2,
        RegionLabel::E3,
        RegionLabel::E4,
        RegionLabel::Neutral,
    ];

    /// The label obtained by flipping the sign of the advantage.
    pub fn mirrored(self) -> Self {
        match self {
            RegionLabel::E1 => RegionLabel::E3,
            RegionLabel::E3 => RegionLabel::E1,
            RegionLabel::E2 => RegionLabel::E4,
            RegionLabel::E4 => RegionLabel::E2,
            RegionLabel::Neutral => RegionLabel::Neutral,
        }
    }

    /// Whether updates in this region are expected to raise entropy.
    pub fn raises_entropy(self) -> Option<bool> {
        match self {
            RegionLabel::E2 | RegionLabel::E3 => Some(true),
            RegionLabel::E1 | RegionLabel::E4 => Some(false),
            RegionLabel::Neutral => None,
        }
    }
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RegionLabel::E1 => "e1",
            RegionLabel::E2 => "e2",
            RegionLabel::E3 => "e3",
            RegionLabel::E4 => "e4",
            RegionLabel::Neutral => "neutral",
        };
        f.write_str(s)
    }
}

impl FromStr for RegionLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "e1" => Ok(RegionLabel::E1),
            "e2" => Ok(RegionLabel::E2),
            "e3" => Ok(RegionLabel::E3),
            "e4" => Ok(RegionLabel::E4),
            "neutral" => Ok(RegionLabel::Neutral),
            other => Err(format!("unknown region label `{other}`")),
        }
    }
}

/// Probability and ratio bands for the band classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionBands {
    pub p_high: f64,
    pub p_low: f64,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
}

impl Default for RegionBands {
    fn default() -> Self {
        Self {
            p_high: 0.7,
            p_low: 0.3,
            ratio_lo: 0.7,
            ratio_hi: 1.3,
        }
    }
}

impl RegionBands {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0 < self.p_low && self.p_low < self.p_high && self.p_high < 1.0) {
            return Err(format!(
                "region bands need 0 < p_low < p_high < 1, got p_low={} p_high={}",
                self.p_low, self.p_high
            ));
        }
        if !(0.0 < self.ratio_lo && self.ratio_lo < 1.0 && 1.0 < self.ratio_hi) {
            return Err(format!(
                "ratio band needs 0 < lo < 1 < hi, got ({}, {})",
                self.ratio_lo, self.ratio_hi
            ));
        }
        Ok(())
    }
}

/// Surprisal-vs-entropy rule. Exact ties and zero advantage are `Neutral`.
pub fn classify_rule(p_a: f64, entropy: f64, advantage: f64) -> RegionLabel {
    let surprisal = -p_a.ln();
    let unsurprising = surprisal < entropy;
    let surprising = surprisal > entropy;
    if advantage > 0.0 {
        if unsurprising {
            return RegionLabel::E1;
        } else if surprising {
            return RegionLabel::E2;
        }
    } else if advantage < 0.0 {
        if unsurprising {
            return RegionLabel::E3;
        } else if surprising {
            return RegionLabel::E4;
        }
    }
    RegionLabel::Neutral
}

/// Band classifier: only tokens whose ratio lies strictly inside the ratio
/// band and whose current probability is high (`> p_high`) or low
/// (`<= p_low`) receive an E-label.
pub fn classify_band(p_theta: f64, p_old: f64, advantage: f64, bands: &RegionBands) -> RegionLabel {
    let ratio = p_theta / p_old;
    if !(ratio > bands.ratio_lo && ratio < bands.ratio_hi) {
        return RegionLabel::Neutral;
    }
    let high = p_theta > bands.p_high;
    let low = p_theta <= bands.p_low;
    match (advantage > 0.0, advantage < 0.0, high, low) {
        (true, _, true, _) => RegionLabel::E1,
        (true, _, _, true) => RegionLabel::E2,
        (_, true, true, _) => RegionLabel::E3,
        (_, true, _, true) => RegionLabel::E4,
        _ => RegionLabel::Neutral,
    }
}

/// Token counts per region.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionHistogram {
    pub e1: u64,
    pub e2: u64,
    pub e3: u64,
    pub e4: u64,
    pub neutral: u64,
}

impl RegionHistogram {
    pub fn add(&mut self, label: RegionLabel) {
        *self.slot(label) += 1;
    }

    pub fn get(&self, label: RegionLabel) -> u64 {
        match label {
            RegionLabel::E1 => self.e1,
            RegionLabel::E2 => self.e2,
            RegionLabel::E3 => self.e3,
            RegionLabel::E4 => self.e4,
            RegionLabel::Neutral => self.neutral,
        }
    }

    fn slot(&mut self, label: RegionLabel) -> &mut u64 {
        match label {
            RegionLabel::E1 => &mut self.e1,
            RegionLabel::E2 => &mut self.e2,
            RegionLabel::E3 => &mut self.e3,
            RegionLabel::E4 => &mut self.e4,
            RegionLabel::Neutral => &mut self.neutral,
        }
    }

    pub fn total(&self) -> u64 {
        self.e1 + self.e2 + self.e3 + self.e4 + self.neutral
    }
}

/// Counts the region label carried by each record.
pub fn region_histogram(records: &[TokenRecord]) -> RegionHistogram {
    let mut hist = RegionHistogram::default();
    for r in records {
        hist.add(r.region);
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(region: RegionLabel) -> TokenRecord {
        TokenRecord {
            context: 0,
            step: 0,
            action: 0,
            p_old: 0.5,
            p_theta: 0.5,
            advantage: 0.0,
            region,
            outcome: None,
        }
    }

    #[test]
    fn rule_examples() {
        assert_eq!(classify_rule(0.9, 0.8, 1.0), RegionLabel::E1);
        assert_eq!(classify_rule(0.05, 1.0, 1.0), RegionLabel::E2);
        assert_eq!(classify_rule(0.9, 0.8, 0.0), RegionLabel::Neutral);
        assert_eq!(classify_rule(0.9, 0.8, -1.0), RegionLabel::E3);
        assert_eq!(classify_rule(0.05, 1.0, -1.0), RegionLabel::E4);
        // exact tie: uniform over 4 has surprisal == entropy
        let p = 0.25f64;
        assert_eq!(classify_rule(p, -p.ln(), 1.0), RegionLabel::Neutral);
    }

    #[test]
    fn band_examples() {
        let b = RegionBands::default();
        assert_eq!(classify_band(0.8, 0.75, 1.0, &b), RegionLabel::E1);
        assert_eq!(classify_band(0.2, 0.18, -1.0, &b), RegionLabel::E4);
        assert_eq!(classify_band(0.5, 0.5, 1.0, &b), RegionLabel::Neutral);
        assert_eq!(classify_band(0.2, 0.25, 1.0, &b), RegionLabel::E2);
        assert_eq!(classify_band(0.9, 0.8, -1.0, &b), RegionLabel::E3);
        // ratio 0.3 / 0.2 = 1.5 is outside the band
        assert_eq!(classify_band(0.3, 0.2, 1.0, &b), RegionLabel::Neutral);
        // p_low boundary is inclusive, p_high exclusive
        assert_eq!(classify_band(0.3, 0.3, 1.0, &b), RegionLabel::E2);
        assert_eq!(classify_band(0.7, 0.7, 1.0, &b), RegionLabel::Neutral);
    }

    #[test]
    fn bands_validation() {
        assert!(RegionBands::default().validate().is_ok());
        let bad = RegionBands { p_low: 0.8, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = RegionBands { ratio_hi: 0.9, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn histogram_counts() {
        assert_eq!(region_histogram(&[]), RegionHistogram::default());
        let h = region_histogram(&[record(RegionLabel::E2)]);
        assert_eq!(h.e2, 1);
        assert_eq!(h.total(), 1);

        let labels = [
            RegionLabel::E1,
            RegionLabel::E4,
            RegionLabel::E4,
            RegionLabel::Neutral,
            RegionLabel::E3,
            RegionLabel::E1,
            RegionLabel::E4,
        ];
        let recs: Vec<_> = labels.iter().map(|&l| record(l)).collect();
        let h = region_histogram(&recs);
        for label in RegionLabel::ALL {
            let recount = labels.iter().filter(|&&l| l == label).count() as u64;
            assert_eq!(h.get(label), recount);
        }
        assert_eq!(h.total(), labels.len() as u64);
    }

    #[test]
    fn label_parsing() {
        for l in RegionLabel::ALL {
            assert_eq!(l.to_string().parse::<RegionLabel>().unwrap(), l);
        }
        assert!("e5".parse::<RegionLabel>().is_err());
    }

    proptest! {
        #[test]
        fn rule_is_antisymmetric_in_advantage(p in 1e-6f64..=1.0, h in 0.0f64..4.0, a in 0.01f64..5.0) {
            prop_assert_eq!(classify_rule(p, h, -a), classify_rule(p, h, a).mirrored());
        }

        #[test]
        fn band_rejects_out_of_band_ratios(p_old in 0.01f64..=1.0, r in 0.0f64..3.0, a in -2.0f64..2.0) {
            let b = RegionBands::default();
            let p_theta = (p_old * r).min(1.0);
            let ratio = p_theta / p_old;
            let label = classify_band(p_theta, p_old, a, &b);
            if !(ratio > b.ratio_lo && ratio < b.ratio_hi) {
                prop_assert_eq!(label, RegionLabel::Neutral);
            }
        }
    }
}
