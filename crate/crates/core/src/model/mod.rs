//! Dual-head network, its losses, SGD with momentum and the cosine schedule.

mod checkpoint;
mod loss;
mod net;
mod optim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{
    decode_parameters, encode_parameters, load_checkpoint, save_checkpoint, CheckpointMeta,
};
pub use loss::{bce_term, classification_loss, combined_loss, detection_loss, per_sample_bce, LossParts};
pub use net::{Dense, DualHeadNet, ForwardCache, ForwardPass, NetShape, PROB_CLAMP};
pub use optim::{cosine_lr, sgd_step, Sgd};

/// Optimisation hyper-parameters for one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_min: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs of training on every sample before selection starts; `None`
    /// means 15% of `epochs`, rounded down.
    pub warmup_epochs: Option<usize>,
    /// Softmax temperature of the classification head.
    pub temperature: f64,
    /// Weight of the detection BCE in the combined loss.
    pub detection_weight: f64,
    /// Trunk layer widths.
    pub hidden: Vec<usize>,
    /// Codebook length; `None` picks the smallest power of two ≥ max(16, 2·C).
    pub code_bits: Option<usize>,
    /// Set per run from the experiment's seed list.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.05,
            lr_min: 5e-4,
            momentum: 0.9,
            weight_decay: 5e-3,
            batch_size: 128,
            epochs: 40,
            warmup_epochs: None,
            temperature: 2.0,
            detection_weight: 1.0,
            hidden: vec![128, 128],
            code_bits: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Warm-up length at 15% of the run, rounded down.
    pub fn scaled_warmup(epochs: usize) -> usize {
        epochs * 15 / 100
    }

    pub fn warmup(&self) -> usize {
        self.warmup_epochs
            .unwrap_or_else(|| Self::scaled_warmup(self.epochs))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr0 && self.lr0.is_finite()) {
            return Err(Error::config(format!(
                "train.lr_min/lr0: need 0 < lr_min <= lr0, got {} and {}",
                self.lr_min, self.lr0
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!(
                "train.momentum: need 0 <= momentum < 1, got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("train.weight_decay: must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size: must be positive"));
        }
        if self.epochs == 0 || self.warmup() >= self.epochs {
            return Err(Error::config(format!(
                "train.warmup_epochs: need warmup_epochs < epochs, got {} and {}",
                self.warmup(),
                self.epochs
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config("train.temperature: must be positive"));
        }
        if !(self.detection_weight >= 0.0 && self.detection_weight.is_finite()) {
            return Err(Error::config("train.detection_weight: must be non-negative"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("train.hidden: need at least one positive width"));
        }
        Ok(())
    }
}
