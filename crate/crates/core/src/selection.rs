//! Per-sample clean/noisy decisions.
//!
//! The single-loss criterion decomposes one sample's detection BCE into its
//! `K` per-bit terms and flags the sample clean when those terms are nearly
//! uniform (intra-loss variance at most `tau`). A second identifier accepts the
//! sample when the classifier's prediction agrees with its given label; the two
//! are OR-ed. The small-loss baseline ranks a batch by loss instead.

use serde::{Deserialize, Serialize};

use crate::codebook::HadamardCodebook;
use crate::error::{Error, Result};
use crate::model::{bce_term, per_sample_bce, ForwardPass};
use crate::numeric::argmax;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    /// Variance threshold of the detection identifier.
    pub tau: f64,
    /// Fraction of each batch kept by the small-loss baseline. `None` means
    /// `1 − ε` of the configured noise, the usual noise-rate prior.
    pub small_loss_keep_ratio: Option<f64>,
    /// Epochs over which the small-loss keep ratio falls linearly from 1 to
    /// its target, counted from the first epoch; 0 applies the target at once.
    pub small_loss_ramp_epochs: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            tau: 1e-3,
            small_loss_keep_ratio: None,
            small_loss_ramp_epochs: 3,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::config(format!(
                "selection.tau: must be positive, got {}",
                self.tau
            )));
        }
        if let Some(r) = self.small_loss_keep_ratio {
            check_keep_ratio(r)?;
        }
        Ok(())
    }
}

fn check_keep_ratio(r: f64) -> Result<()> {
    if r > 0.0 && r <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "selection.small_loss_keep_ratio: need a value in (0, 1], got {r}"
        )))
    }
}

/// Keep ratio in force at `epoch` when the target `keep_ratio` is reached
/// linearly over `ramp_epochs` epochs: `1 − min(epoch / ramp, 1)·(1 − keep)`.
pub fn ramped_keep_ratio(keep_ratio: f64, epoch: usize, ramp_epochs: usize) -> f64 {
    if ramp_epochs == 0 || epoch >= ramp_epochs {
        return keep_ratio;
    }
    1.0 - (epoch as f64 / ramp_epochs as f64) * (1.0 - keep_ratio)
}

/// Everything decided about one sample during one forward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectionDecision {
    pub sample_index: usize,
    pub detection_flag: bool,
    pub classifier_flag: bool,
    /// `detection_flag || classifier_flag`.
    pub combined_flag: bool,
    pub variance: f64,
    pub bce_loss: f64,
}

/// Per-bit BCE distances `d_j = −[t_j ln z_j + (1 − t_j) ln(1 − z_j)]`.
pub fn decompose_loss(z: &[f64], target: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(target)
        .map(|(&z, &t)| bce_term(z, t))
        .collect()
}

/// Population variance `(1/K) Σ (d_j − mean)²`.
///
/// Values are shifted by `d[0]` before averaging, so a constant vector has a
/// variance of exactly zero.
pub fn intra_loss_variance(d: &[f64]) -> Result<f64> {
    let Some(&pivot) = d.first() else {
        return Err(Error::shape("variance of an empty distance vector"));
    };
    let k = d.len() as f64;
    let mean = d.iter().map(|v| v - pivot).sum::<f64>() / k;
    Ok(d
        .iter()
        .map(|v| (v - pivot - mean) * (v - pivot - mean))
        .sum::<f64>()
        / k)
}

/// Clean iff `variance ≤ tau`.
pub fn detection_identifier(variance: f64, cfg: &SelectionConfig) -> bool {
    variance <= cfg.tau
}

/// Clean iff the arg-max class (lowest index on ties) equals the given label.
pub fn classifier_identifier(probs: &[f64], noisy_label: usize) -> Result<bool> {
    if noisy_label >= probs.len() {
        return Err(Error::Label(format!(
            "label {noisy_label} with {} classes",
            probs.len()
        )));
    }
    Ok(argmax(probs) == noisy_label)
}

pub fn combine_identifiers(detection: bool, classifier: bool) -> bool {
    detection || classifier
}

/// Marks the `⌈keep_ratio·n⌉` smallest losses, breaking ties by lower index.
pub fn small_loss_select(losses: &[f64], keep_ratio: f64) -> Result<Vec<bool>> {
    if losses.is_empty() {
        return Err(Error::shape("small-loss selection on an empty batch"));
    }
    check_keep_ratio(keep_ratio)?;
    if let Some(i) = losses.iter().position(|l| !l.is_finite()) {
        return Err(Error::numeric(format!("loss of sample {i} is not finite")));
    }
    let keep = keep_count(losses.len(), keep_ratio);
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    let mut mask = vec![false; losses.len()];
    for &i in &order[..keep] {
        mask[i] = true;
    }
    Ok(mask)
}

/// `⌈keep_ratio·n⌉`, computed so that binary round-off in the product does
/// not push an exact integer up by one.
pub fn keep_count(n: usize, keep_ratio: f64) -> usize {
    let exact = keep_ratio * n as f64;
    let rounded = exact.round();
    let count = if (exact - rounded).abs() < 1e-9 {
        rounded
    } else {
        exact.ceil()
    };
    (count as usize).clamp(1, n)
}

/// Runs the single-loss and classifier identifiers on every row of a forward
/// pass. `indices[r]` is the dataset index of row `r`, `labels[r]` its given
/// (possibly noisy) label.
pub fn decide_batch(
    pass: &ForwardPass,
    indices: &[usize],
    labels: &[usize],
    codebook: &HadamardCodebook,
    cfg: &SelectionConfig,
) -> Result<Vec<SelectionDecision>> {
    let n = pass.z.rows();
    if indices.len() != n || labels.len() != n {
        return Err(Error::shape(format!(
            "{n} rows, {} indices, {} labels",
            indices.len(),
            labels.len()
        )));
    }
    let mut out = Vec::with_capacity(n);
    for r in 0..n {
        let (_, target) = codebook.encode(labels[r])?;
        let z = pass.z.row(r);
        let d = decompose_loss(z, target);
        let variance = intra_loss_variance(&d)?;
        let bce_loss = per_sample_bce(z, target);
        let detection_flag = detection_identifier(variance, cfg);
        let classifier_flag = classifier_identifier(pass.probs.row(r), labels[r])?;
        out.push(SelectionDecision {
            sample_index: indices[r],
            detection_flag,
            classifier_flag,
            combined_flag: combine_identifiers(detection_flag, classifier_flag),
            variance,
            bce_loss,
        });
    }
    Ok(out)
}

/// Per-row cross-entropy `−ln p_{r, label}` used for small-loss ranking.
pub fn per_sample_cross_entropy(pass: &ForwardPass, labels: &[usize]) -> Result<Vec<f64>> {
    let classes = pass.probs.cols();
    labels
        .iter()
        .enumerate()
        .map(|(r, &y)| {
            if y >= classes {
                Err(Error::Label(format!("label {y} with {classes} classes")))
            } else {
                Ok(-pass.probs.get(r, y).max(f64::MIN_POSITIVE).ln())
            }
        })
        .collect()
}
