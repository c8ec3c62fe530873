//! Confusion matrix and classification metrics.
//!
//! Per class `i`: precision `TP/(TP+FP)`, recall `TP/(TP+FN)` and
//! `F1 = 2TP/(2TP+FP+FN)`. A ratio with a zero denominator is reported as 0
//! and listed in [`MetricsReport::undefined`]. The weighted averages use
//! `ω_i = support_i / total`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if counts.iter().any(|row| row.len() != c) {
            return Err(Error::dim("confusion_matrix", "counts must be square"));
        }
        Ok(Self { counts })
    }

    pub fn from_pairs(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::dim(
                "confusion_matrix",
                format!("{} labels for {} predictions", truth.len(), predicted.len()),
            ));
        }
        let mut cm = Self::new(classes);
        for (index, (&t, &p)) in truth.iter().zip(predicted).enumerate() {
            let label = t.max(p);
            if label >= classes {
                return Err(Error::Label { index, label, classes });
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn tp(&self, class: usize) -> u64 {
        self.counts[class][class]
    }

    pub fn fp(&self, class: usize) -> u64 {
        (0..self.classes()).map(|t| self.counts[t][class]).sum::<u64>() - self.tp(class)
    }

    pub fn fn_(&self, class: usize) -> u64 {
        self.counts[class].iter().sum::<u64>() - self.tp(class)
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    /// CSV with a header row of predicted classes and one row per true class.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let name = |i: usize| class_names.get(i).cloned().unwrap_or_else(|| i.to_string());
        let mut out = String::from("true\\predicted");
        for j in 0..self.classes() {
            out.push(',');
            out.push_str(&name(j));
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            out.push_str(&name(i));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedMetric {
    Precision,
    Recall,
    F1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<u64>,
    /// `ω_i`, the share of evaluated windows whose true class is `i`.
    pub weights: Vec<f64>,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    pub f1_weighted: f64,
    /// `(class, metric)` pairs whose denominator was zero and were reported as 0.
    pub undefined: Vec<(usize, UndefinedMetric)>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl MetricsReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        let total = cm.total();
        if total == 0 {
            return Err(Error::Contract("cannot compute metrics for an empty confusion matrix".into()));
        }
        let c = cm.classes();
        let mut undefined = Vec::new();
        let mut precision = Vec::with_capacity(c);
        let mut recall = Vec::with_capacity(c);
        let mut f1 = Vec::with_capacity(c);
        for i in 0..c {
            let (tp, fp, fn_) = (cm.tp(i), cm.fp(i), cm.fn_(i));
            for (value, out, kind) in [
                (ratio(tp, tp + fp), &mut precision, UndefinedMetric::Precision),
                (ratio(tp, tp + fn_), &mut recall, UndefinedMetric::Recall),
                (ratio(2 * tp, 2 * tp + fp + fn_), &mut f1, UndefinedMetric::F1),
            ] {
                if value.is_none() {
                    undefined.push((i, kind));
                }
                out.push(value.unwrap_or(0.0));
            }
        }
        let support: Vec<u64> = (0..c).map(|i| cm.support(i)).collect();
        let weights: Vec<f64> = support.iter().map(|&s| s as f64 / total as f64).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / c as f64;
        let weighted = |v: &[f64]| v.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>();
        Ok(Self {
            accuracy: cm.trace() as f64 / total as f64,
            precision_macro: mean(&precision),
            recall_macro: mean(&recall),
            f1_macro: mean(&f1),
            precision_weighted: weighted(&precision),
            recall_weighted: weighted(&recall),
            f1_weighted: weighted(&f1),
            precision,
            recall,
            f1,
            support,
            weights,
            undefined,
        })
    }

    /// Human-readable per-class table followed by the aggregates.
    pub fn summary(&self, class_names: &[String]) -> String {
        let name = |i: usize| class_names.get(i).cloned().unwrap_or_else(|| i.to_string());
        let mut out = format!(
            "{:<16} {:>9} {:>9} {:>9} {:>8}\n",
            "class", "precision", "recall", "f1", "support"
        );
        for i in 0..self.f1.len() {
            out.push_str(&format!(
                "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>8}\n",
                name(i),
                self.precision[i],
                self.recall[i],
                self.f1[i],
                self.support[i]
            ));
        }
        out.push_str(&format!(
            "{:<16} {:>9.4} {:>9.4} {:>9.4}\n",
            "macro", self.precision_macro, self.recall_macro, self.f1_macro
        ));
        out.push_str(&format!(
            "{:<16} {:>9.4} {:>9.4} {:>9.4}\n",
            "weighted", self.precision_weighted, self.recall_weighted, self.f1_weighted
        ));
        out.push_str(&format!("accuracy {:.4}\n", self.accuracy));
        out
    }
}

/// Index of the largest entry in each row; ties go to the lowest index.
pub fn argmax_rows(values: &[f64], cols: usize) -> Vec<usize> {
    values
        .chunks_exact(cols)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_example() {
        let cm = ConfusionMatrix::from_counts(vec![vec![5, 5], vec![0, 10]]).unwrap();
        let r = MetricsReport::from_confusion(&cm).unwrap();
        assert!((r.accuracy - 0.75).abs() < 1e-12);
        assert!((r.precision[0] - 1.0).abs() < 1e-12);
        assert!((r.recall[0] - 0.5).abs() < 1e-12);
        assert!((r.f1[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.precision[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.f1[1] - 0.8).abs() < 1e-12);
        assert!((r.f1_macro - 11.0 / 15.0).abs() < 1e-12);
        assert!((r.f1_weighted - 11.0 / 15.0).abs() < 1e-12);
        assert!(r.undefined.is_empty());
    }

    #[test]
    fn absent_class_flagged() {
        let cm = ConfusionMatrix::from_pairs(&[0, 0, 0], &[0, 0, 0], 3).unwrap();
        let r = MetricsReport::from_confusion(&cm).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.precision[1], 0.0);
        assert!(r.undefined.contains(&(1, UndefinedMetric::Precision)));
        assert!(r.undefined.contains(&(2, UndefinedMetric::F1)));
        assert!(!r.undefined.iter().any(|&(c, _)| c == 0));
        assert_eq!(r.f1_weighted, 1.0);
    }

    #[test]
    fn empty_is_error() {
        assert!(MetricsReport::from_confusion(&ConfusionMatrix::new(2)).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_rows(&[1.0, 3.0, 3.0, 2.0, 2.0, 0.0], 3), vec![1, 0]);
    }

    #[test]
    fn csv_layout() {
        let cm = ConfusionMatrix::from_counts(vec![vec![1, 2], vec![3, 4]]).unwrap();
        let csv = cm.to_csv(&["a".into(), "b".into()]);
        assert_eq!(csv, "true\\predicted,a,b\na,1,2\nb,3,4\n");
    }
}
