//! End-to-end runs: data preparation, training per strategy cell, reports
//! and cross-cell comparison tables.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::config::{DatasetConfig, ExperimentConfig};
use crate::data::{gen_blobs, inject_noise, load_csv, Split, TrainTest};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EpochRecord, ExperimentRecord, Summary};
use crate::model::{save_checkpoint, CheckpointMeta};
use crate::report::{emit_report, read_summary, selection_dump_path, write_selection_dump, SUMMARY_FILE};
use crate::schedule::{ScheduleConfig, Strategy, TraceEvent, Trainer};

pub const COMPARISON_FILE: &str = "comparison.csv";
pub const IOU_FILE: &str = "iou_comparison.csv";
pub const CHECKPOINT_FILE: &str = "model.bin";

/// One strategy × effect rate × seed combination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub strategy: Strategy,
    pub effect_rate: f64,
    pub seed: u64,
}

impl Cell {
    /// Output subdirectory name, e.g. `jump_update_r1_seed0`.
    pub fn dir_name(&self) -> String {
        format!("{}_r{}_seed{}", self.strategy, self.effect_rate, self.seed)
    }
}

/// Cells of a config in strategy-major, then effect-rate, then seed order.
pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &strategy in &cfg.schedule.strategies {
        for &effect_rate in &cfg.schedule.effect_rates {
            for &seed in &cfg.seeds {
                out.push(Cell {
                    strategy,
                    effect_rate,
                    seed,
                });
            }
        }
    }
    out
}

/// The train/test data of one seed, noise applied to the training split.
pub fn prepare_data(cfg: &ExperimentConfig, seed: u64) -> Result<TrainTest> {
    let mut data = match &cfg.dataset {
        DatasetConfig::Blobs {
            classes,
            dim,
            n_per_class,
            spread,
        } => gen_blobs(*classes, *dim, *n_per_class, *spread, seed)?,
        DatasetConfig::Csv {
            train,
            test,
            classes,
        } => {
            let test = load_csv(test, *classes, Split::Test)?;
            if test.noisy_labels != test.true_labels {
                return Err(Error::config("dataset.test: test labels must be clean"));
            }
            TrainTest {
                train: load_csv(train, *classes, Split::Train)?,
                test,
            }
        }
    };
    if let Some(noise) = &cfg.noise {
        let spec = noise.spec(data.train.dim(), data.train.classes, seed);
        data.train = inject_noise(&data.train, &spec, seed)?;
    }
    Ok(data)
}

/// Optional extras of a single run.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Write per-epoch identifier dumps under this directory.
    pub dump_dir: Option<PathBuf>,
    /// Record a [`TraceEvent`] log.
    pub trace: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub record: ExperimentRecord,
    pub trace: Vec<TraceEvent>,
    /// Final parameters of the first network.
    pub net: crate::model::DualHeadNet,
}

/// Trains one cell on prepared data, evaluating after every epoch.
pub fn run_cell(
    cfg: &ExperimentConfig,
    data: &TrainTest,
    cell: Cell,
    opts: &RunOptions,
) -> Result<RunOutput> {
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cell.seed;
    let schedule = ScheduleConfig {
        strategy: cell.strategy,
        effect_rate: cell.effect_rate,
        jump_step: cfg.schedule.jump_step,
    };
    let mut trainer = Trainer::new(
        &data.train,
        &train_cfg,
        &cfg.selection,
        &schedule,
        cfg.keep_ratio()?,
    )?;
    if opts.trace {
        trainer.enable_trace();
    }
    let clean = &data.train.clean_mask;
    let mut epochs = Vec::with_capacity(train_cfg.epochs);
    let mut previous = None;
    while !trainer.is_finished() {
        let stats = trainer.run_epoch()?;
        let acc = evaluate(&trainer.nets()[0], &data.test)?;
        epochs.push(EpochRecord::from_stats(&stats, previous.as_ref(), acc, clean)?);
        if let Some(dir) = &opts.dump_dir {
            write_selection_dump(&stats.decisions, clean, &selection_dump_path(dir, stats.epoch))?;
        }
        previous = Some(stats);
    }
    let spread = match &cfg.dataset {
        DatasetConfig::Blobs { spread, .. } => Some(*spread),
        DatasetConfig::Csv { .. } => None,
    };
    Ok(RunOutput {
        record: ExperimentRecord {
            config_hash: cfg.hash()?,
            seed: cell.seed,
            strategy: cell.strategy,
            effect_rate: cell.effect_rate,
            spread,
            noise_rate: data.train.noise_rate(),
            epochs,
        },
        trace: trainer.take_trace(),
        net: trainer.nets()[0].clone(),
    })
}

/// Runs one cell end to end and writes its report, checkpoint and dumps to
/// `out_dir/<cell>`.
fn run_and_report(cfg: &ExperimentConfig, data: &TrainTest, cell: Cell, out_dir: &Path) -> Result<ExperimentRecord> {
    let dir = out_dir.join(cell.dir_name());
    let opts = RunOptions {
        dump_dir: cfg.dump_selection.then(|| dir.clone()),
        trace: false,
    };
    let out = run_cell(cfg, data, cell, &opts)?;
    emit_report(&out.record, &dir)?;
    let meta = CheckpointMeta {
        shape: out.net.shape().clone(),
        temperature: out.net.temperature(),
        epoch: cfg.train.epochs,
        seed: cell.seed,
        config: serde_json::from_str(&cfg.canonical_json()?)
            .map_err(|e| Error::config(e.to_string()))?,
    };
    save_checkpoint(&out.net, &meta, &dir.join(CHECKPOINT_FILE))?;
    Ok(out.record)
}

/// Runs every cell of `cfg`, writing per-cell reports under `out_dir`, then the
/// comparison tables. Up to `jobs` cells train concurrently; each cell owns
/// its networks and random streams, so results do not depend on `jobs`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, jobs: usize) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.toml"), cfg.to_toml()?)?;

    let mut datasets = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        datasets.push((seed, prepare_data(cfg, seed)?));
    }
    let data_for = |seed: u64| {
        &datasets
            .iter()
            .find(|(s, _)| *s == seed)
            .expect("every seed was prepared")
            .1
    };

    let cells = cells(cfg);
    let results: Vec<Mutex<Option<Result<ExperimentRecord>>>> =
        cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(&cell) = cells.get(i) else { break };
        let res = run_and_report(cfg, data_for(cell.seed), cell, out_dir);
        let failed = res.is_err();
        *results[i].lock().expect("result slot") = Some(res);
        if failed {
            // stop handing out further cells
            next.store(cells.len(), Ordering::SeqCst);
        }
    };
    std::thread::scope(|scope| {
        for _ in 1..jobs.max(1) {
            scope.spawn(worker);
        }
        worker();
    });

    let mut records = Vec::with_capacity(cells.len());
    for slot in results {
        match slot.into_inner().expect("result slot") {
            Some(Ok(r)) => records.push(r),
            Some(Err(e)) => return Err(e),
            None => {}
        }
    }
    let summaries = records
        .iter()
        .map(ExperimentRecord::summary)
        .collect::<Result<Vec<_>>>()?;
    write_comparison(&compare(&summaries), out_dir)?;
    Ok(records)
}

/// Aggregate of all seeds of one strategy and effect rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: Strategy,
    pub effect_rate: f64,
    pub seeds: usize,
    pub mean_last10_acc: f64,
    /// Sample standard deviation over seeds; 0 for a single seed.
    pub std_last10_acc: f64,
    pub mean_final_acc: f64,
    pub mean_sel_f1: f64,
    pub mean_temporal_iou: Option<f64>,
    pub mean_cross_iou: Option<f64>,
    pub mean_epoch_ms: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Groups summaries by strategy and effect rate. Rows follow the order of
/// [`Strategy::ALL`], then ascending effect rate, whatever the input order.
pub fn compare(summaries: &[Summary]) -> Vec<ComparisonRow> {
    let mut keys: Vec<(Strategy, f64)> = Vec::new();
    for s in summaries {
        if !keys.contains(&(s.strategy, s.effect_rate)) {
            keys.push((s.strategy, s.effect_rate));
        }
    }
    let rank = |s: Strategy| Strategy::ALL.iter().position(|&t| t == s);
    keys.sort_by(|a, b| rank(a.0).cmp(&rank(b.0)).then(a.1.total_cmp(&b.1)));
    keys.into_iter()
        .map(|(strategy, effect_rate)| {
            let group: Vec<&Summary> = summaries
                .iter()
                .filter(|s| s.strategy == strategy && s.effect_rate == effect_rate)
                .collect();
            let accs: Vec<f64> = group.iter().map(|s| s.last10_mean_acc).collect();
            let (mean_last10_acc, std_last10_acc) = mean_std(&accs);
            let avg = |f: fn(&Summary) -> f64| group.iter().map(|s| f(s)).sum::<f64>() / group.len() as f64;
            ComparisonRow {
                strategy,
                effect_rate,
                seeds: group.len(),
                mean_last10_acc,
                std_last10_acc,
                mean_final_acc: avg(|s| s.final_acc),
                mean_sel_f1: avg(|s| s.mean_sel_f1),
                mean_temporal_iou: mean_of(group.iter().map(|s| s.mean_temporal_iou)),
                mean_cross_iou: mean_of(group.iter().map(|s| s.mean_cross_iou)),
                mean_epoch_ms: avg(|s| s.mean_epoch_ms),
            }
        })
        .collect()
}

/// Writes `comparison.csv` (accuracy per strategy and effect rate) and
/// `iou_comparison.csv` (temporal against cross-network agreement).
pub fn write_comparison(rows: &[ComparisonRow], out_dir: &Path) -> Result<()> {
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(out_dir.join(COMPARISON_FILE))
        .map_err(io)?;
    w.write_record([
        "strategy",
        "effect_rate",
        "seeds",
        "mean_last10_acc",
        "std_last10_acc",
        "mean_final_acc",
        "mean_sel_f1",
        "mean_epoch_ms",
    ])
    .map_err(io)?;
    for r in rows {
        w.write_record([
            r.strategy.to_string(),
            r.effect_rate.to_string(),
            r.seeds.to_string(),
            r.mean_last10_acc.to_string(),
            r.std_last10_acc.to_string(),
            r.mean_final_acc.to_string(),
            r.mean_sel_f1.to_string(),
            r.mean_epoch_ms.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;

    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(out_dir.join(IOU_FILE))
        .map_err(io)?;
    w.write_record(["strategy", "effect_rate", "mean_temporal_iou", "mean_cross_iou"])
        .map_err(io)?;
    for r in rows {
        w.write_record([
            r.strategy.to_string(),
            r.effect_rate.to_string(),
            opt(r.mean_temporal_iou),
            opt(r.mean_cross_iou),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Collects the summaries of every run directory directly below `dir`,
/// sorted by directory name.
pub fn collect_summaries(dir: &Path) -> Result<Vec<Summary>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(SUMMARY_FILE).is_file())
        .collect();
    entries.sort();
    entries
        .iter()
        .map(|p| read_summary(&p.join(SUMMARY_FILE)))
        .collect()
}
