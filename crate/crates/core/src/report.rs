//! Report files of a run.
//!
//! * `epochs.jsonl`: one object per epoch with `epoch, strategy,
//!   selected_count, skipped_batches, commit_count, mean_lag, test_acc,
//!   sel_precision, sel_recall, sel_f1, epoch_wall_ms`;
//! * `summary.json`: [`Summary`];
//! * `curves.csv`: every per-epoch metric, for plotting;
//! * optional `selection/epoch_XXX.csv` dumps of per-sample identifiers.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{EpochRecord, ExperimentRecord, Summary};
use crate::schedule::Strategy;
use crate::selection::SelectionDecision;

pub const EPOCHS_FILE: &str = "epochs.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const SELECTION_DIR: &str = "selection";

/// Columns of `curves.csv` whose values depend on the machine rather than
/// on the configuration and seed.
pub const TIMING_COLUMNS: [&str; 2] = ["epoch_wall_ms", "peak_memory_bytes"];

/// One line of `epochs.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochLine {
    pub epoch: usize,
    pub strategy: Strategy,
    pub selected_count: usize,
    pub skipped_batches: usize,
    pub commit_count: u64,
    pub mean_lag: f64,
    pub test_acc: f64,
    pub sel_precision: f64,
    pub sel_recall: f64,
    pub sel_f1: f64,
    pub epoch_wall_ms: f64,
}

impl From<&EpochRecord> for EpochLine {
    fn from(r: &EpochRecord) -> Self {
        Self {
            epoch: r.epoch,
            strategy: r.strategy,
            selected_count: r.selected_count,
            skipped_batches: r.skipped_batches,
            commit_count: r.commit_count,
            mean_lag: r.mean_lag,
            test_acc: r.test_acc,
            sel_precision: r.sel_precision,
            sel_recall: r.sel_recall,
            sel_f1: r.sel_f1,
            epoch_wall_ms: r.epoch_wall_ms,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportPaths {
    pub epochs: PathBuf,
    pub summary: PathBuf,
    pub curves: PathBuf,
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

const CURVE_HEADER: [&str; 23] = [
    "epoch",
    "strategy",
    "phase",
    "lr",
    "selected_count",
    "skipped_batches",
    "commit_count",
    "mean_lag",
    "mean_loss",
    "forward_passes",
    "test_acc",
    "sel_precision",
    "sel_recall",
    "sel_f1",
    "temporal_iou",
    "cross_iou",
    "median_var_clean",
    "median_var_noisy",
    "selection_iterations",
    "sub_flows",
    "per_flow",
    "epoch_wall_ms",
    "peak_memory_bytes",
];

fn curve_row(r: &EpochRecord) -> Vec<String> {
    let phase = match r.phase {
        crate::schedule::Phase::Warmup => "warmup",
        crate::schedule::Phase::Selection => "selection",
    };
    vec![
        r.epoch.to_string(),
        r.strategy.to_string(),
        phase.to_string(),
        r.lr.to_string(),
        r.selected_count.to_string(),
        r.skipped_batches.to_string(),
        r.commit_count.to_string(),
        r.mean_lag.to_string(),
        r.mean_loss.to_string(),
        r.forward_passes.to_string(),
        r.test_acc.to_string(),
        r.sel_precision.to_string(),
        r.sel_recall.to_string(),
        r.sel_f1.to_string(),
        opt(r.temporal_iou),
        opt(r.cross_iou),
        opt(r.median_var_clean),
        opt(r.median_var_noisy),
        r.diagnostics.selection_iterations.to_string(),
        r.diagnostics.sub_flows.to_string(),
        r.diagnostics.per_flow.to_string(),
        r.epoch_wall_ms.to_string(),
        r.peak_memory_bytes.map(|b| b.to_string()).unwrap_or_default(),
    ]
}

/// Writes `epochs.jsonl`, `summary.json` and `curves.csv` into `out_dir`,
/// creating it if needed.
pub fn emit_report(record: &ExperimentRecord, out_dir: &Path) -> Result<ReportPaths> {
    let summary = record.summary()?;
    fs::create_dir_all(out_dir)?;
    let paths = ReportPaths {
        epochs: out_dir.join(EPOCHS_FILE),
        summary: out_dir.join(SUMMARY_FILE),
        curves: out_dir.join(CURVES_FILE),
    };

    let mut out = BufWriter::new(File::create(&paths.epochs)?);
    for r in &record.epochs {
        serde_json::to_writer(&mut out, &EpochLine::from(r)).map_err(json_err)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;

    write_summary(&summary, &paths.summary)?;

    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&paths.curves)
        .map_err(csv_err)?;
    w.write_record(CURVE_HEADER).map_err(csv_err)?;
    for r in &record.epochs {
        w.write_record(curve_row(r)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(paths)
}

pub fn write_summary(summary: &Summary, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary).map_err(json_err)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line() as u64,
        message: format!("{}: {e}", path.display()),
    })
}

pub fn read_epochs(path: &Path) -> Result<Vec<EpochLine>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i as u64 + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Writes one epoch's per-sample identifiers as CSV with columns
/// `sample_index, variance, bce_loss, det_flag, cls_flag, combined_flag,
/// is_truly_clean` (flags as 0/1).
pub fn write_selection_dump(
    decisions: &[SelectionDecision],
    clean: &[bool],
    path: &Path,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record([
        "sample_index",
        "variance",
        "bce_loss",
        "det_flag",
        "cls_flag",
        "combined_flag",
        "is_truly_clean",
    ])
    .map_err(csv_err)?;
    let bit = |b: bool| if b { "1" } else { "0" }.to_string();
    for d in decisions {
        let is_clean = *clean.get(d.sample_index).ok_or_else(|| {
            Error::shape(format!(
                "sample {} outside a clean mask of length {}",
                d.sample_index,
                clean.len()
            ))
        })?;
        w.write_record([
            d.sample_index.to_string(),
            d.variance.to_string(),
            d.bce_loss.to_string(),
            bit(d.detection_flag),
            bit(d.classifier_flag),
            bit(d.combined_flag),
            bit(is_clean),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn selection_dump_path(out_dir: &Path, epoch: usize) -> PathBuf {
    out_dir.join(SELECTION_DIR).join(format!("epoch_{epoch:03}.csv"))
}
