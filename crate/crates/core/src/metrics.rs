//! Confusion counts, per-class precision/recall, class-balanced accuracy (CBA)
//! and the class-imbalance measure Ω_imb.
//!
//! Percentages are carried at full precision; only [`ClassReport::render`]
//! rounds to two decimals. A ratio with a zero denominator is reported as 0.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `counts[i][j]` = samples of true class `i` predicted as class `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Instances per true class.
    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Predictions per class.
    pub fn col_sums(&self) -> Vec<u64> {
        let mut out = vec![0; self.num_classes()];
        for row in &self.counts {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// Adds another shard's counts.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes() != self.num_classes() {
            return Err(Error::InvalidArgument(format!(
                "cannot merge {}-class and {}-class confusion matrices",
                self.num_classes(),
                other.num_classes()
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

pub fn confusion(preds: &[usize], labels: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(num_classes);
    for (row, (&p, &y)) in preds.iter().zip(labels).enumerate() {
        if p >= num_classes || y >= num_classes {
            return Err(Error::LabelOutOfRange {
                row,
                label: p.max(y),
                num_classes,
            });
        }
        cm.counts[y][p] += 1;
    }
    Ok(cm)
}

/// Per-class precision and recall, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
}

fn percent(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

pub fn precision_recall(cm: &ConfusionMatrix) -> Vec<PrecisionRecall> {
    let rows = cm.row_sums();
    let cols = cm.col_sums();
    (0..cm.num_classes())
        .map(|j| PrecisionRecall {
            precision: percent(cm.get(j, j), cols[j]),
            recall: percent(cm.get(j, j), rows[j]),
        })
        .collect()
}

/// Class-balanced accuracy: the arithmetic mean of the given recalls.
pub fn cba(recalls: &[f64]) -> f64 {
    if recalls.is_empty() {
        return 0.0;
    }
    recalls.iter().sum::<f64>() / recalls.len() as f64
}

/// `Σᵢ (n_max - n_i) / n`: the fraction of extra samples needed to balance all classes.
pub fn imbalance_measure(counts: &[u64]) -> Result<f64> {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let max = counts.iter().copied().max().unwrap_or(0);
    let deficit: u64 = counts.iter().map(|&c| max - c).sum();
    Ok(deficit as f64 / n as f64)
}

/// Evaluation summary for one model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_names: Vec<String>,
    pub support: Vec<u64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    /// Mean recall over classes present in the evaluated set.
    pub cba: f64,
    pub omega_imb: f64,
    pub confusion: ConfusionMatrix,
}

impl ClassReport {
    pub fn from_confusion(cm: ConfusionMatrix, class_names: &[String]) -> Result<Self> {
        if class_names.len() != cm.num_classes() {
            return Err(Error::InvalidArgument(format!(
                "{} class names for a {}-class confusion matrix",
                class_names.len(),
                cm.num_classes()
            )));
        }
        let support = cm.row_sums();
        let pr = precision_recall(&cm);
        let present: Vec<f64> = pr
            .iter()
            .zip(&support)
            .filter(|(_, &s)| s > 0)
            .map(|(p, _)| p.recall)
            .collect();
        Ok(Self {
            class_names: class_names.to_vec(),
            precision: pr.iter().map(|p| p.precision).collect(),
            recall: pr.iter().map(|p| p.recall).collect(),
            cba: cba(&present),
            omega_imb: imbalance_measure(&support)?,
            support,
            confusion: cm,
        })
    }

    pub fn from_predictions(
        preds: &[usize],
        labels: &[usize],
        class_names: &[String],
    ) -> Result<Self> {
        Self::from_confusion(confusion(preds, labels, class_names.len())?, class_names)
    }

    /// Number of samples predicted as any class other than `benign`.
    pub fn predicted_non_benign(&self, benign: usize) -> u64 {
        let cols = self.confusion.col_sums();
        cols.iter()
            .enumerate()
            .filter(|(j, _)| *j != benign)
            .map(|(_, v)| v)
            .sum()
    }

    /// Fixed-width table with two-decimal percentages.
    pub fn render(&self) -> String {
        let width = self
            .class_names
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>7}  {:>7}",
            "class", "support", "Pre", "Rec"
        );
        for (i, name) in self.class_names.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9}  {:>7.2}  {:>7.2}",
                name, self.support[i], self.precision[i], self.recall[i]
            );
        }
        let _ = writeln!(out, "CBA {:.2}  Ω_imb {:.2}", self.cba, self.omega_imb);
        out
    }
}
