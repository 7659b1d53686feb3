//! Selection quality, disagreement between selections, test accuracy and
//! per-epoch experiment records.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::NoisyDataset;
use crate::error::{Error, Result};
use crate::model::DualHeadNet;
use crate::schedule::{EpochStats, ErrorFlowDiagnostics, Phase, Strategy};

/// Rows per forward pass during evaluation.
const EVAL_BATCH: usize = 512;

/// `|a ∩ b| / |a ∪ b|`; two empty sets count as full agreement (1.0).
pub fn iou(a: &[usize], b: &[usize]) -> f64 {
    let a: BTreeSet<usize> = a.iter().copied().collect();
    let b: BTreeSet<usize> = b.iter().copied().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// [`iou`] of the index sets marked by two masks over the same samples.
pub fn mask_iou(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "masks of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionQuality {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision and recall of `selected` against the truly clean samples.
/// Empty denominators give 0.
pub fn selection_quality(selected: &[bool], clean: &[bool]) -> Result<SelectionQuality> {
    if selected.len() != clean.len() {
        return Err(Error::shape(format!(
            "selection mask of length {} against clean mask of length {}",
            selected.len(),
            clean.len()
        )));
    }
    let (mut tp, mut picked, mut positives) = (0usize, 0usize, 0usize);
    for (&s, &c) in selected.iter().zip(clean) {
        tp += usize::from(s && c);
        picked += usize::from(s);
        positives += usize::from(c);
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, picked);
    let recall = ratio(tp, positives);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(SelectionQuality {
        precision,
        recall,
        f1,
    })
}

/// Fraction of samples whose classification-head argmax equals the true label.
pub fn evaluate(net: &DualHeadNet, data: &NoisyDataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let pass = net.forward(&data.features.select_rows(chunk))?;
        correct += chunk
            .iter()
            .zip(&pass.preds)
            .filter(|(&i, &p)| data.true_labels[i] == p)
            .count();
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Median of a sample (mean of the middle pair for even sizes); `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

/// Peak resident set size of this process in bytes, where the platform
/// exposes it (`VmHWM` in `/proc/self/status`).
pub fn peak_memory_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Everything recorded about one epoch of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub strategy: Strategy,
    pub phase: Phase,
    pub lr: f64,
    pub selected_count: usize,
    pub skipped_batches: usize,
    pub commit_count: u64,
    pub mean_lag: f64,
    pub mean_loss: f64,
    pub forward_passes: u64,
    pub test_acc: f64,
    pub sel_precision: f64,
    pub sel_recall: f64,
    pub sel_f1: f64,
    /// IoU of the first network's selections in this and the previous epoch,
    /// when both were selection epochs.
    pub temporal_iou: Option<f64>,
    /// IoU of the two networks' selections in this epoch (two-network runs).
    pub cross_iou: Option<f64>,
    /// Median intra-loss variance over truly clean / truly noisy samples.
    pub median_var_clean: Option<f64>,
    pub median_var_noisy: Option<f64>,
    pub diagnostics: ErrorFlowDiagnostics,
    pub peak_memory_bytes: Option<u64>,
    pub epoch_wall_ms: f64,
}

impl EpochRecord {
    /// Derives the epoch's metrics. `previous` is the trainer output of the
    /// preceding epoch, if any.
    pub fn from_stats(
        stats: &EpochStats,
        previous: Option<&EpochStats>,
        test_acc: f64,
        clean: &[bool],
    ) -> Result<Self> {
        let mask = &stats.masks[0];
        let quality = selection_quality(mask, clean)?;
        let temporal_iou = match previous {
            Some(prev) if prev.phase == Phase::Selection && stats.phase == Phase::Selection => {
                Some(mask_iou(&prev.masks[0], mask)?)
            }
            _ => None,
        };
        let cross_iou = match stats.masks.as_slice() {
            [a, b] => Some(mask_iou(a, b)?),
            _ => None,
        };
        let (mut var_clean, mut var_noisy) = (Vec::new(), Vec::new());
        for d in &stats.decisions {
            if clean[d.sample_index] {
                var_clean.push(d.variance);
            } else {
                var_noisy.push(d.variance);
            }
        }
        Ok(Self {
            epoch: stats.epoch,
            strategy: stats.strategy,
            phase: stats.phase,
            lr: stats.lr,
            selected_count: stats.selected_count,
            skipped_batches: stats.skipped_batches,
            commit_count: stats.commit_count,
            mean_lag: stats.mean_lag,
            mean_loss: stats.mean_loss,
            forward_passes: stats.forward_passes,
            test_acc,
            sel_precision: quality.precision,
            sel_recall: quality.recall,
            sel_f1: quality.f1,
            temporal_iou,
            cross_iou,
            median_var_clean: median(&var_clean),
            median_var_noisy: median(&var_noisy),
            diagnostics: stats.diagnostics,
            peak_memory_bytes: peak_memory_bytes(),
            epoch_wall_ms: stats.wall_ms,
        })
    }
}

/// One complete training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub config_hash: String,
    pub seed: u64,
    pub strategy: Strategy,
    pub effect_rate: f64,
    /// Blob spread of a synthetic dataset; `None` for loaded data.
    pub spread: Option<f64>,
    /// Realised fraction of corrupted training labels.
    pub noise_rate: f64,
    pub epochs: Vec<EpochRecord>,
}

/// Headline numbers of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub seed: u64,
    pub strategy: Strategy,
    pub effect_rate: f64,
    pub final_acc: f64,
    pub last10_mean_acc: f64,
    pub mean_sel_f1: f64,
    pub mean_temporal_iou: Option<f64>,
    pub mean_cross_iou: Option<f64>,
    pub mean_epoch_ms: f64,
}

/// Arithmetic mean, accumulated relative to the first value so that a
/// constant sequence averages to exactly that constant.
fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut values = values.into_iter();
    let first = values.next()?;
    let (offset, n) = values.fold((0.0, 1usize), |(s, n), v| (s + (v - first), n + 1));
    Some(first + offset / n as f64)
}

impl ExperimentRecord {
    /// Mean test accuracy over the last (up to) ten epochs.
    pub fn last10_mean_acc(&self) -> f64 {
        let tail = &self.epochs[self.epochs.len().saturating_sub(10)..];
        mean(tail.iter().map(|e| e.test_acc)).unwrap_or(0.0)
    }

    fn selection_epochs(&self) -> impl Iterator<Item = &EpochRecord> {
        self.epochs.iter().filter(|e| e.phase == Phase::Selection)
    }

    /// Selection F1 averaged over post-warm-up epochs.
    pub fn mean_sel_f1(&self) -> f64 {
        mean(self.selection_epochs().map(|e| e.sel_f1)).unwrap_or(0.0)
    }

    pub fn mean_temporal_iou(&self) -> Option<f64> {
        mean(self.selection_epochs().filter_map(|e| e.temporal_iou))
    }

    pub fn mean_cross_iou(&self) -> Option<f64> {
        mean(self.selection_epochs().filter_map(|e| e.cross_iou))
    }

    pub fn summary(&self) -> Result<Summary> {
        let last = self
            .epochs
            .last()
            .ok_or_else(|| Error::shape("experiment record has no epochs"))?;
        Ok(Summary {
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            strategy: self.strategy,
            effect_rate: self.effect_rate,
            final_acc: last.test_acc,
            last10_mean_acc: self.last10_mean_acc(),
            mean_sel_f1: self.mean_sel_f1(),
            mean_temporal_iou: self.mean_temporal_iou(),
            mean_cross_iou: self.mean_cross_iou(),
            mean_epoch_ms: mean(self.epochs.iter().map(|e| e.epoch_wall_ms)).unwrap_or(0.0),
        })
    }
}
