//! Classification losses over softmax outputs and their logit-space gradients.
//!
//! Losses consume log-probabilities (see [`crate::math::log_softmax_rows`]) so a
//! confident prediction never underflows to `ln 0`.
//!
//! The attack-sharing loss adds a benign-versus-attack binary cross-entropy,
//! weighted by `lambda`, to the multiclass cross-entropy:
//!
//! ```text
//! J_AS = J_CE - (λ/N) Σᵢ [ 1(yᵢ = benign) ln p_benign + 1(yᵢ ≠ benign) ln(1 - p_benign) ]
//! ```
//!
//! `1 - p_benign` is evaluated as the log-sum of the attack-class probabilities
//! and floored at [`BENIGN_CLAMP`], i.e. `p_benign` is clamped to `≤ 1 - 1e-12`.

use serde::{Deserialize, Serialize};

use crate::math::{log_sum_exp, Matrix};
use crate::{Error, Result};

/// Smallest value `1 - p_benign` may take inside the logarithm.
pub const BENIGN_CLAMP: f64 = 1e-12;

/// Internal index of the benign class.
pub const BENIGN_INDEX: usize = 0;

/// Which loss to optimize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    AttackSharing { lambda: f64 },
    WeightedCe { weights: Vec<f64> },
}

/// A loss choice bound to the benign class index.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub benign_index: usize,
}

impl LossSpec {
    pub fn cross_entropy() -> Self {
        Self {
            kind: LossKind::CrossEntropy,
            benign_index: BENIGN_INDEX,
        }
    }

    pub fn attack_sharing(lambda: f64) -> Self {
        Self {
            kind: LossKind::AttackSharing { lambda },
            benign_index: BENIGN_INDEX,
        }
    }

    pub fn weighted_ce(weights: Vec<f64>) -> Self {
        Self {
            kind: LossKind::WeightedCe { weights },
            benign_index: BENIGN_INDEX,
        }
    }

    /// Checks the spec against a class count.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.benign_index >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "benign index {} outside {num_classes} classes",
                self.benign_index
            )));
        }
        match &self.kind {
            LossKind::CrossEntropy => Ok(()),
            LossKind::AttackSharing { lambda } => {
                check_lambda(*lambda)?;
                if num_classes < 2 {
                    return Err(Error::InvalidArgument(
                        "attack-sharing loss needs at least 2 classes".into(),
                    ));
                }
                Ok(())
            }
            LossKind::WeightedCe { weights } => check_weights(weights, num_classes),
        }
    }

    pub fn loss(&self, log_probs: &Matrix, labels: &[usize]) -> Result<f64> {
        self.validate(log_probs.cols())?;
        match &self.kind {
            LossKind::CrossEntropy => ce_loss(log_probs, labels),
            LossKind::AttackSharing { lambda } => {
                attack_sharing_loss(log_probs, labels, *lambda, self.benign_index)
            }
            LossKind::WeightedCe { weights } => weighted_ce_loss(log_probs, labels, weights),
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(())
}

fn check_weights(weights: &[f64], num_classes: usize) -> Result<()> {
    if weights.len() != num_classes {
        return Err(Error::InvalidArgument(format!(
            "{} class weights for {num_classes} classes",
            weights.len()
        )));
    }
    if let Some((i, w)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !(**w > 0.0 && w.is_finite()))
    {
        return Err(Error::InvalidArgument(format!(
            "class weight {i} must be positive and finite, got {w}"
        )));
    }
    Ok(())
}

fn check_labels(log_probs: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != log_probs.rows() {
        return Err(Error::shape("loss", log_probs.shape(), (labels.len(), 1)));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("loss over an empty batch".into()));
    }
    let c = log_probs.cols();
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &y)| y >= c) {
        return Err(Error::LabelOutOfRange {
            row,
            label,
            num_classes: c,
        });
    }
    Ok(())
}

/// Mean negative log-likelihood of the true class.
pub fn ce_loss(log_probs: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(log_probs, labels)?;
    let sum: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| log_probs.get(i, y))
        .sum();
    Ok(-sum / labels.len() as f64)
}

/// Per-class weighted mean negative log-likelihood, `-(1/N) Σ w_y ln p_y`.
pub fn weighted_ce_loss(log_probs: &Matrix, labels: &[usize], weights: &[f64]) -> Result<f64> {
    check_labels(log_probs, labels)?;
    check_weights(weights, log_probs.cols())?;
    let sum: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| weights[y] * log_probs.get(i, y))
        .sum();
    Ok(-sum / labels.len() as f64)
}

/// Attack-sharing loss with benign class 0.
pub fn as_loss(log_probs: &Matrix, labels: &[usize], lambda: f64) -> Result<f64> {
    attack_sharing_loss(log_probs, labels, lambda, BENIGN_INDEX)
}

/// `ln(1 - p_benign)` for one row, floored at `ln BENIGN_CLAMP`.
///
/// Returns the value and whether the floor was hit.
fn log_not_benign(log_row: &[f64], benign: usize) -> (f64, bool) {
    let lse = log_sum_exp(
        log_row
            .iter()
            .enumerate()
            .filter(move |(k, _)| *k != benign)
            .map(|(_, &v)| v),
    );
    let floor = BENIGN_CLAMP.ln();
    if lse < floor {
        (floor, true)
    } else {
        (lse, false)
    }
}

pub fn attack_sharing_loss(
    log_probs: &Matrix,
    labels: &[usize],
    lambda: f64,
    benign: usize,
) -> Result<f64> {
    check_lambda(lambda)?;
    if log_probs.cols() < 2 || benign >= log_probs.cols() {
        return Err(Error::InvalidArgument(
            "attack-sharing loss needs at least 2 classes and a valid benign index".into(),
        ));
    }
    let ce = ce_loss(log_probs, labels)?;
    let penalty: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let row = log_probs.row(i);
            if y == benign {
                -row[benign]
            } else {
                -log_not_benign(row, benign).0
            }
        })
        .sum();
    Ok(ce + lambda * penalty / labels.len() as f64)
}

/// Gradient of the selected loss with respect to the softmax logits.
pub fn loss_grad_logits(
    spec: &LossSpec,
    probs: &Matrix,
    log_probs: &Matrix,
    labels: &[usize],
) -> Result<Matrix> {
    spec.validate(probs.cols())?;
    check_labels(log_probs, labels)?;
    if probs.shape() != log_probs.shape() {
        return Err(Error::shape(
            "loss_grad_logits",
            probs.shape(),
            log_probs.shape(),
        ));
    }
    let n = labels.len() as f64;
    let mut grad = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        let row = grad.row_mut(i);
        row[y] -= 1.0;
        let scale = match &spec.kind {
            LossKind::WeightedCe { weights } => weights[y] / n,
            _ => 1.0 / n,
        };
        for g in row.iter_mut() {
            *g *= scale;
        }
    }

    if let LossKind::AttackSharing { lambda } = spec.kind {
        if lambda > 0.0 {
            let b = spec.benign_index;
            let w = lambda / n;
            for (i, &y) in labels.iter().enumerate() {
                let p = probs.row(i);
                let lp = log_probs.row(i);
                if y == b {
                    // d(-ln p_b)/dz_k = p_k - 1(k = b)
                    let row = grad.row_mut(i);
                    for (k, g) in row.iter_mut().enumerate() {
                        *g += w * (p[k] - if k == b { 1.0 } else { 0.0 });
                    }
                } else {
                    let (log1m, clamped) = log_not_benign(lp, b);
                    if clamped {
                        continue;
                    }
                    // d(-ln(1 - p_b))/dz_k = p_b (1(k = b) - p_k) / (1 - p_b)
                    let pb = p[b];
                    let row = grad.row_mut(i);
                    for (k, g) in row.iter_mut().enumerate() {
                        if k == b {
                            *g += w * pb;
                        } else {
                            *g -= w * pb * (lp[k] - log1m).exp();
                        }
                    }
                }
            }
        }
    }
    Ok(grad)
}

/// Inverse class-frequency weights scaled to mean 1.
///
/// A class with no instances is weighted as if it had one.
pub fn inverse_frequency_weights(counts: &[usize]) -> Result<Vec<f64>> {
    if counts.is_empty() {
        return Err(Error::InvalidArgument("no classes".into()));
    }
    let raw: Vec<f64> = counts.iter().map(|&n| 1.0 / n.max(1) as f64).collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok(raw.into_iter().map(|w| w / mean).collect())
}
