//! Classification metrics derived from a K-by-K confusion matrix: accuracy,
//! one-vs-rest precision/recall/F1 with macro averages, and the multiclass
//! Matthews correlation coefficient (the R_K statistic, which reduces to the
//! familiar binary MCC at K = 2).
//!
//! Zero denominators yield 0 by convention and are flagged as degenerate so
//! reports never contain NaN.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("cannot merge confusion matrices of sizes {0} and {1}")]
    SizeMismatch(usize, usize),
}

/// Row = true class, column = predicted class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<u64>, // K*K row-major
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let k = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![0; k * k],
        }
    }

    pub fn with_unnamed_classes(k: usize) -> Self {
        Self::new((0..k).map(|i| format!("class{}", i)).collect())
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.classes
    }

    pub fn count(&self, true_label: usize, predicted: usize) -> u64 {
        self.counts[true_label * self.classes.len() + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, true_label: usize, predicted: usize) -> Result<(), MetricsError> {
        let k = self.classes.len();
        for &label in &[true_label, predicted] {
            if label >= k {
                return Err(MetricsError::LabelOutOfRange { label, classes: k });
            }
        }
        self.counts[true_label * k + predicted] += 1;
        Ok(())
    }

    /// Cell-wise addition, for sharded evaluation.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), MetricsError> {
        if self.classes.len() != other.classes.len() {
            return Err(MetricsError::SizeMismatch(
                self.classes.len(),
                other.classes.len(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Build directly from counts (row-major, rows = true class).
    pub fn from_counts(classes: Vec<String>, counts: Vec<u64>) -> Option<Self> {
        if counts.len() != classes.len() * classes.len() {
            return None;
        }
        Some(ConfusionMatrix { classes, counts })
    }

    /// trace / total; 0 on an empty matrix (degenerate).
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let k = self.classes.len();
        let correct: u64 = (0..k).map(|i| self.counts[i * k + i]).sum();
        correct as f64 / total as f64
    }

    /// One-vs-rest precision/recall/F1 per class.
    pub fn per_class(&self) -> Vec<ClassMetrics> {
        let k = self.classes.len();
        (0..k)
            .map(|c| {
                let tp = self.counts[c * k + c];
                let fp: u64 = (0..k).filter(|&r| r != c).map(|r| self.counts[r * k + c]).sum();
                let fn_: u64 = (0..k).filter(|&p| p != c).map(|p| self.counts[c * k + p]).sum();
                let support = tp + fn_;
                let (precision, p_degenerate) = ratio(tp, tp + fp);
                let (recall, r_degenerate) = ratio(tp, tp + fn_);
                let (f1, f_degenerate) = if precision + recall > 0.0 {
                    (2.0 * precision * recall / (precision + recall), false)
                } else {
                    (0.0, true)
                };
                ClassMetrics {
                    name: self.classes[c].clone(),
                    precision,
                    recall,
                    f1,
                    support,
                    degenerate: p_degenerate || r_degenerate || f_degenerate,
                }
            })
            .collect()
    }

    /// Multiclass Matthews correlation coefficient (R_K). Undefined
    /// denominators (e.g. every prediction in one class) yield 0.
    pub fn mcc(&self) -> f64 {
        let k = self.classes.len();
        let s = self.total() as f64;
        if s == 0.0 {
            return 0.0;
        }
        let correct: u64 = (0..k).map(|i| self.counts[i * k + i]).sum();
        let c = correct as f64;
        let mut cov = c * s;
        let mut pp = s * s;
        let mut tt = s * s;
        for class in 0..k {
            let predicted: u64 = (0..k).map(|r| self.counts[r * k + class]).sum();
            let truth: u64 = (0..k).map(|p| self.counts[class * k + p]).sum();
            cov -= predicted as f64 * truth as f64;
            pp -= (predicted as f64) * (predicted as f64);
            tt -= (truth as f64) * (truth as f64);
        }
        let denom = (pp * tt).sqrt();
        if denom == 0.0 {
            0.0
        } else {
            cov / denom
        }
    }

    pub fn report(&self) -> Report {
        let per_class = self.per_class();
        let k = per_class.len().max(1) as f64;
        let macro_precision = per_class.iter().map(|m| m.precision).sum::<f64>() / k;
        let macro_recall = per_class.iter().map(|m| m.recall).sum::<f64>() / k;
        let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / k;
        Report {
            accuracy: self.accuracy(),
            macro_precision,
            macro_recall,
            macro_f1,
            mcc: self.mcc(),
            total: self.total(),
            per_class,
        }
    }
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// true when any denominator was 0 and the 0-by-convention rule applied
    pub degenerate: bool,
}

/// The column set reported for every evaluation (macro averages for the
/// multiclass precision/recall/F1).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub mcc: f64,
    pub total: u64,
    pub per_class: Vec<ClassMetrics>,
}

impl Report {
    /// Deterministic key-sorted JSON.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        // serde_json maps are BTreeMaps: re-serializing through Value sorts keys
        serde_json::to_string_pretty(&sort_value(value)).expect("report prints")
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let name_w = self
            .per_class
            .iter()
            .map(|c| c.name.len())
            .chain(["class".len()])
            .max()
            .unwrap_or(5);
        out.push_str(&format!(
            "{:<w$}  {:>9}  {:>9}  {:>9}  {:>8}  {}\n",
            "class",
            "precision",
            "recall",
            "f1",
            "support",
            "flags",
            w = name_w
        ));
        for c in &self.per_class {
            out.push_str(&format!(
                "{:<w$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>8}  {}\n",
                c.name,
                c.precision,
                c.recall,
                c.f1,
                c.support,
                if c.degenerate { "degenerate" } else { "" },
                w = name_w
            ));
        }
        out.push_str(&format!(
            "{:<w$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>8}\n",
            "macro",
            self.macro_precision,
            self.macro_recall,
            self.macro_f1,
            self.total,
            w = name_w
        ));
        out.push_str(&format!("accuracy {:.4}  mcc {:.4}\n", self.accuracy, self.mcc));
        out
    }
}

fn sort_value(v: serde_json::Value) -> serde_json::Value {
    match v {
        serde_json::Value::Object(map) => {
            let sorted: serde_json::Map<String, serde_json::Value> = map
                .into_iter()
                .map(|(k, v)| (k, sort_value(v)))
                .collect();
            serde_json::Value::Object(sorted)
        }
        serde_json::Value::Array(items) => {
            serde_json::Value::Array(items.into_iter().map(sort_value).collect())
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fixture: binary matrix with TP=2, FP=1, FN=1, TN=6 (class 1 positive).
    fn fixture() -> ConfusionMatrix {
        ConfusionMatrix::from_counts(
            vec!["neg".into(), "pos".into()],
            vec![6, 1, 1, 2],
        )
        .unwrap()
    }

    #[test]
    fn accumulate_increments_one_cell() {
        let mut cm = ConfusionMatrix::with_unnamed_classes(3);
        cm.accumulate(0, 0).unwrap();
        assert_eq!(cm.count(0, 0), 1);
        assert_eq!(cm.total(), 1);
        assert!(cm.accumulate(0, 3).is_err());
    }

    #[test]
    fn identity_matrix_from_perfect_pairs() {
        let mut cm = ConfusionMatrix::with_unnamed_classes(2);
        cm.accumulate(0, 0).unwrap();
        cm.accumulate(1, 1).unwrap();
        assert_eq!(cm.count(0, 0), 1);
        assert_eq!(cm.count(1, 1), 1);
        assert_eq!(cm.count(0, 1), 0);
        assert_eq!(cm.accuracy(), 1.0);
    }

    #[test]
    fn fixture_matches_hand_substitution() {
        let cm = fixture();
        assert!((cm.accuracy() - 0.8).abs() < 1e-15);
        let pos = &cm.per_class()[1];
        assert!((pos.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((pos.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((pos.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!(!pos.degenerate);
        assert!((cm.mcc() - 11.0 / 21.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_diagonal_scores_one() {
        let cm = ConfusionMatrix::from_counts(
            vec!["a".into(), "b".into(), "c".into()],
            vec![5, 0, 0, 0, 3, 0, 0, 0, 7],
        )
        .unwrap();
        let report = cm.report();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.macro_precision, 1.0);
        assert_eq!(report.macro_recall, 1.0);
        assert_eq!(report.macro_f1, 1.0);
        assert_eq!(report.mcc, 1.0);
    }

    #[test]
    fn single_class_prediction_is_degenerate_zero_mcc() {
        // every prediction lands in class 0
        let cm = ConfusionMatrix::from_counts(
            vec!["a".into(), "b".into()],
            vec![4, 0, 6, 0],
        )
        .unwrap();
        assert_eq!(cm.mcc(), 0.0);
        let b = &cm.per_class()[1];
        assert_eq!((b.precision, b.recall, b.f1), (0.0, 0.0, 0.0));
        assert!(b.degenerate);
    }

    #[test]
    fn absent_class_yields_zeroes_with_flag() {
        // class never predicted and never present
        let cm = ConfusionMatrix::from_counts(
            vec!["a".into(), "b".into(), "ghost".into()],
            vec![3, 0, 0, 0, 4, 0, 0, 0, 0],
        )
        .unwrap();
        let ghost = &cm.per_class()[2];
        assert_eq!((ghost.precision, ghost.recall, ghost.f1), (0.0, 0.0, 0.0));
        assert!(ghost.degenerate);
    }

    #[test]
    fn uniform_two_by_two_is_half_accurate() {
        let cm = ConfusionMatrix::from_counts(
            vec!["a".into(), "b".into()],
            vec![1, 1, 1, 1],
        )
        .unwrap();
        assert_eq!(cm.accuracy(), 0.5);
        assert_eq!(cm.mcc(), 0.0);
    }

    #[test]
    fn report_json_is_key_sorted_and_stable() {
        let a = fixture().report().to_json();
        let b = fixture().report().to_json();
        assert_eq!(a, b);
        let acc_pos = a.find("\"accuracy\"").unwrap();
        let mcc_pos = a.find("\"mcc\"").unwrap();
        let total_pos = a.find("\"total\"").unwrap();
        assert!(acc_pos < mcc_pos && mcc_pos < total_pos);
    }

    #[test]
    fn merge_adds_cellwise() {
        let mut a = fixture();
        let b = fixture();
        a.merge(&b).unwrap();
        assert_eq!(a.total(), 2 * b.total());
        assert_eq!(a.count(1, 1), 4);
    }
}
