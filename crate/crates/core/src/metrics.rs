//! Per-class Matthews correlation and its class-weighted average.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    /// One-vs-rest counts for `class` from multiclass predictions.
    pub fn one_vs_rest(truth: &[u32], predicted: &[u32], class: u32) -> Self {
        let mut c = Self::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t == class, p == class) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    ((tp * tn - fp * fn_) / denom.sqrt()).clamp(-1.0, 1.0)
}

/// `Σ (size_c / Σ size) · mcc_c`.
pub fn weighted_mcc(per_class: &[f64], sizes: &[usize]) -> Result<f64> {
    if per_class.len() != sizes.len() {
        return Err(Error::DimensionMismatch {
            expected: per_class.len(),
            got: sizes.len(),
        });
    }
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::InvalidInput("class weights are all zero".into()));
    }
    Ok(per_class
        .iter()
        .zip(sizes)
        .map(|(m, &s)| m * s as f64 / total as f64)
        .sum())
}

/// Which population's class sizes weight the average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Weighting {
    #[default]
    Test,
    Train,
    Total,
}

impl Weighting {
    pub fn sizes(self, train: &[usize], test: &[usize]) -> Vec<usize> {
        match self {
            Weighting::Test => test.to_vec(),
            Weighting::Train => train.to_vec(),
            Weighting::Total => train.iter().zip(test).map(|(a, b)| a + b).collect(),
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Test => "test",
            Weighting::Train => "train",
            Weighting::Total => "total",
        })
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "test" => Ok(Weighting::Test),
            "train" => Ok(Weighting::Train),
            "total" | "all" => Ok(Weighting::Total),
            other => Err(Error::InvalidInput(format!("unknown weighting {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub class_ids: Vec<u32>,
    pub class_names: Vec<String>,
    /// Sizes the weights were derived from.
    pub sizes: Vec<usize>,
    pub per_class: Vec<f64>,
    pub weights: Vec<f64>,
    pub weighted: f64,
}

impl McReport {
    /// Scores multiclass predictions class by class. `weight_sizes` is
    /// aligned with `class_ids`.
    pub fn evaluate(
        truth: &[u32],
        predicted: &[u32],
        class_ids: &[u32],
        weight_sizes: &[usize],
    ) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                got: predicted.len(),
            });
        }
        let per_class: Vec<f64> = class_ids
            .iter()
            .map(|&c| mcc(&ConfusionCounts::one_vs_rest(truth, predicted, c)))
            .collect();
        Self::from_parts(class_ids.to_vec(), per_class, weight_sizes.to_vec())
    }

    pub fn from_parts(class_ids: Vec<u32>, per_class: Vec<f64>, sizes: Vec<usize>) -> Result<Self> {
        let weighted = weighted_mcc(&per_class, &sizes)?;
        let total: usize = sizes.iter().sum();
        Ok(Self {
            class_names: class_ids.iter().map(|c| format!("class {c}")).collect(),
            weights: sizes.iter().map(|&s| s as f64 / total as f64).collect(),
            class_ids,
            sizes,
            per_class,
            weighted,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        if names.len() == self.class_ids.len() {
            self.class_names = names;
        }
        self
    }

    /// `name,size,mcc` per class, then a `weighted average` footer row.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        writer.write_record(["name", "size", "mcc"])?;
        for ((name, size), m) in self.class_names.iter().zip(&self.sizes).zip(&self.per_class) {
            writer.write_record([name.clone(), size.to_string(), m.to_string()])?;
        }
        let total: usize = self.sizes.iter().sum();
        writer.write_record([
            "weighted average".to_string(),
            total.to_string(),
            self.weighted.to_string(),
        ])?;
        writer.flush().map_err(|e| Error::io("<report>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_cases() {
        assert_eq!(mcc(&ConfusionCounts::new(5, 0, 5, 0)), 1.0);
        assert_eq!(mcc(&ConfusionCounts::new(0, 3, 7, 0)), 0.0);
        let v = mcc(&ConfusionCounts::new(4, 1, 3, 2));
        assert!((v - 10.0 / 600f64.sqrt()).abs() < 1e-12);
        assert!((v - 0.408248).abs() < 1e-6);
    }

    #[test]
    fn weighting_examples() {
        assert_eq!(weighted_mcc(&[1.0, 1.0, 1.0], &[3, 5, 9]).unwrap(), 1.0);
        assert_eq!(weighted_mcc(&[0.0, 1.0], &[1, 3]).unwrap(), 0.75);
        assert!(weighted_mcc(&[0.5], &[0]).is_err());
    }

    #[test]
    fn one_vs_rest_counts() {
        let truth = [1, 1, 2, 3, 3];
        let pred = [1, 2, 2, 3, 1];
        let c = ConfusionCounts::one_vs_rest(&truth, &pred, 1);
        assert_eq!(c, ConfusionCounts::new(1, 1, 2, 1));
        assert_eq!(c.total(), 5);
    }

    #[test]
    fn report_csv_layout() {
        let r = McReport::evaluate(&[1, 2, 1, 2], &[1, 2, 1, 1], &[1, 2], &[2, 2]).unwrap();
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "name,size,mcc");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("weighted average,4,"));
        let sum: f64 = r.weights.iter().zip(&r.per_class).map(|(w, m)| w * m).sum();
        assert!((sum - r.weighted).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bounded_symmetric_scale_invariant(tp in 0u64..500, fp in 0u64..500, tn in 0u64..500, fn_ in 0u64..500, k in 1u64..20) {
            let c = ConfusionCounts::new(tp, fp, tn, fn_);
            let v = mcc(&c);
            prop_assert!((-1.0..=1.0).contains(&v));
            let flipped = mcc(&ConfusionCounts::new(tn, fn_, tp, fp));
            prop_assert!((v - flipped).abs() < 1e-12);
            let scaled = mcc(&ConfusionCounts::new(k * tp, k * fp, k * tn, k * fn_));
            prop_assert!((v - scaled).abs() < 1e-12);
        }
    }
}
