//! Training strategies: plain training, small-loss self/cross updates and the
//! jump update driven by a double-buffered identifier table.

mod table;
mod trainer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::RngStream;

pub use table::{IdentifierTable, Origin};
pub use trainer::{EpochStats, Phase, TraceEvent, Trainer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Every sample, every iteration.
    Standard,
    /// One net keeps the small-loss part of each batch and trains on it.
    SelfUpdate,
    /// Two nets; each trains on the small-loss part picked by its peer.
    CrossUpdate,
    /// One net trains on identifiers committed at an earlier jump boundary.
    JumpUpdate,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Standard,
        Strategy::SelfUpdate,
        Strategy::CrossUpdate,
        Strategy::JumpUpdate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Standard => "standard",
            Strategy::SelfUpdate => "self_update",
            Strategy::CrossUpdate => "cross_update",
            Strategy::JumpUpdate => "jump_update",
        }
    }

    pub fn network_count(self) -> usize {
        match self {
            Strategy::CrossUpdate => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown strategy `{s}`")))
    }
}

/// Strategy settings of a single training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub strategy: Strategy,
    /// Probability that selection takes effect in an iteration; otherwise the
    /// full batch is used.
    pub effect_rate: f64,
    /// Iterations between identifier commits; `None` means one epoch.
    pub jump_step: Option<usize>,
}

impl ScheduleConfig {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            effect_rate: 1.0,
            jump_step: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_effect_rate(self.effect_rate)?;
        if let Some(s) = self.jump_step {
            if s < 2 {
                return Err(Error::config(format!(
                    "schedule.jump_step: must be at least 2, got {s}"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_effect_rate(r: f64) -> Result<()> {
    if r > 0.0 && r <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "schedule.effect_rate: need a value in (0, 1], got {r}"
        )))
    }
}

/// Per-iteration Bernoulli gate: `true` with probability `r`. At `r = 1` no
/// draw is consumed.
pub fn apply_effect_rate(r: f64, rng: &mut RngStream) -> bool {
    r >= 1.0 || rng.bernoulli(r)
}

/// Error-flow bookkeeping of a run.
///
/// `selection_iterations` (N_A) counts iterations in which a selection
/// actually shaped the update; `sub_flows` (N_f) is the number of independent
/// chains those errors accumulate along. `per_flow` is `N_A / N_f` with
/// integer division, so `per_flow · sub_flows ≤ N_A < (per_flow + 1) · sub_flows`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorFlowDiagnostics {
    pub selection_iterations: u64,
    pub sub_flows: u64,
    pub per_flow: u64,
    /// Unrounded `N_A / N_f`, a proxy for the accumulated error per flow.
    pub per_flow_ratio: f64,
}

impl ErrorFlowDiagnostics {
    pub fn sub_flows_for(strategy: Strategy, dataset_len: usize) -> u64 {
        match strategy {
            Strategy::Standard | Strategy::SelfUpdate => 1,
            Strategy::CrossUpdate => 2,
            Strategy::JumpUpdate => dataset_len.max(1) as u64,
        }
    }

    pub fn new(strategy: Strategy, dataset_len: usize, selection_iterations: u64) -> Self {
        let sub_flows = Self::sub_flows_for(strategy, dataset_len);
        Self {
            selection_iterations,
            sub_flows,
            per_flow: selection_iterations / sub_flows,
            per_flow_ratio: selection_iterations as f64 / sub_flows as f64,
        }
    }
}
