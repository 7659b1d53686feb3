//! Noisy-label sample selection with Hadamard-coded detection heads and
//! jump-style identifier updates.
//!
//! The crate is organised bottom-up: [`numeric`] holds the dense-matrix
//! kernel and seeded randomness, [`codebook`] builds class codewords,
//! [`model`] the dual-head network, [`selection`] the per-sample criteria,
//! [`schedule`] the training strategies, and [`data`], [`metrics`],
//! [`report`], [`config`] and [`experiment`] wrap them into runnable studies.

pub mod codebook;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod model;
pub mod metrics;
pub mod numeric;
pub mod report;
pub mod schedule;
pub mod selection;

pub use error::{Error, Result};
