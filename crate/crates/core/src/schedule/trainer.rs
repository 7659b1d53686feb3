use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::codebook::{derive_codebook, HadamardCodebook};
use crate::data::NoisyDataset;
use crate::error::{Error, Result};
use crate::model::{combined_loss, cosine_lr, DualHeadNet, ForwardPass, NetShape, Sgd, TrainConfig};
use crate::numeric::{Matrix, RngStream};
use crate::selection::{
    decide_batch, per_sample_cross_entropy, ramped_keep_ratio, small_loss_select, SelectionConfig,
    SelectionDecision,
};

use super::{apply_effect_rate, ErrorFlowDiagnostics, IdentifierTable, Origin, ScheduleConfig, Strategy};

const SHUFFLE_STREAM: u64 = 1;
const GATE_STREAM: u64 = 2;
const NET_STREAM: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    Selection,
}

/// Instrumentation record of one training run, in execution order.
#[derive(Clone, Debug, PartialEq)]
pub enum TraceEvent {
    /// A fresh identifier was written to the pending buffer.
    Write { iteration: u64, sample: usize, flag: bool },
    /// Jump update consulted the active flag of a batch sample.
    Apply {
        iteration: u64,
        sample: usize,
        flag: bool,
        produced_at: Origin,
    },
    Commit { iteration: u64 },
    /// Small-loss ranking of a batch by net `net`; `kept` lists dataset indices.
    Rank {
        iteration: u64,
        net: usize,
        samples: Vec<usize>,
        losses: Vec<f64>,
        kept: Vec<usize>,
    },
    /// Net `net` took a parameter step on these dataset indices.
    Update {
        iteration: u64,
        net: usize,
        samples: Vec<usize>,
    },
}

/// What happened during one epoch.
#[derive(Clone, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub phase: Phase,
    pub strategy: Strategy,
    pub lr: f64,
    pub batches: usize,
    /// Parameter steps summed over networks.
    pub updates: usize,
    /// Batches in which the first network had nothing to train on.
    pub skipped_batches: usize,
    /// Samples the first network trained on.
    pub selected_count: usize,
    /// Identifier commits since the start of the run.
    pub commit_count: u64,
    /// Mean `applied_at − produced_at` over applied identifiers that came from
    /// a forward pass; zero when none were applied.
    pub mean_lag: f64,
    /// Mean combined loss over the first network's steps.
    pub mean_loss: f64,
    pub forward_passes: u64,
    pub diagnostics: ErrorFlowDiagnostics,
    /// Per network, which samples its selection rule marked clean this epoch.
    pub masks: Vec<Vec<bool>>,
    /// Single-loss and classifier identifiers of every sample from the first
    /// network's forward pass, ordered by sample index.
    pub decisions: Vec<SelectionDecision>,
    /// Training time only; evaluation is excluded.
    pub wall_ms: f64,
}

#[derive(Default)]
struct Tally {
    updates: usize,
    skipped: usize,
    selected: usize,
    lag_sum: f64,
    lag_count: usize,
    loss_sum: f64,
    loss_count: usize,
    forward: u64,
}

/// Owns the networks, optimisers and identifier table of one run.
pub struct Trainer<'a> {
    data: &'a NoisyDataset,
    codebook: HadamardCodebook,
    targets: Matrix,
    train: TrainConfig,
    selection: SelectionConfig,
    schedule: ScheduleConfig,
    keep_ratio: f64,
    nets: Vec<DualHeadNet>,
    opts: Vec<Sgd>,
    table: IdentifierTable,
    shuffle_rng: RngStream,
    gate_rng: RngStream,
    epoch: usize,
    iteration: u64,
    selection_iterations: u64,
    trace: Option<Vec<TraceEvent>>,
}

impl<'a> Trainer<'a> {
    /// Builds freshly initialised networks from `train.seed`. Network `k` is
    /// drawn from its own stream, so the first network of every strategy
    /// starts from the same weights.
    pub fn new(
        data: &'a NoisyDataset,
        train: &TrainConfig,
        selection: &SelectionConfig,
        schedule: &ScheduleConfig,
        keep_ratio: f64,
    ) -> Result<Self> {
        let bits = train
            .code_bits
            .unwrap_or_else(|| HadamardCodebook::default_bits(data.classes));
        let shape = NetShape {
            input: data.dim(),
            hidden: train.hidden.clone(),
            classes: data.classes,
            code_bits: bits,
        };
        let nets = (0..schedule.strategy.network_count())
            .map(|k| {
                let mut rng = RngStream::with_stream(train.seed, NET_STREAM + k as u64);
                DualHeadNet::new(shape.clone(), train.temperature, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_nets(data, train, selection, schedule, keep_ratio, nets)
    }

    /// Uses the given networks; their count must match the strategy.
    pub fn with_nets(
        data: &'a NoisyDataset,
        train: &TrainConfig,
        selection: &SelectionConfig,
        schedule: &ScheduleConfig,
        keep_ratio: f64,
        nets: Vec<DualHeadNet>,
    ) -> Result<Self> {
        train.validate()?;
        selection.validate()?;
        schedule.validate()?;
        let needed = schedule.strategy.network_count();
        if nets.len() != needed {
            return Err(Error::config(format!(
                "{} needs {needed} network(s), got {}",
                schedule.strategy,
                nets.len()
            )));
        }
        if !(keep_ratio > 0.0 && keep_ratio <= 1.0) {
            return Err(Error::config(format!(
                "selection.small_loss_keep_ratio: need a value in (0, 1], got {keep_ratio}"
            )));
        }
        if data.is_empty() {
            return Err(Error::config("training set is empty"));
        }
        let shape = nets[0].shape().clone();
        if nets.iter().any(|n| n.shape() != &shape) {
            return Err(Error::config("networks of one run must share a shape"));
        }
        if shape.input != data.dim() || shape.classes != data.classes {
            return Err(Error::shape(format!(
                "network expects {} features and {} classes, data has {} and {}",
                shape.input,
                shape.classes,
                data.dim(),
                data.classes
            )));
        }
        let codebook = derive_codebook(shape.code_bits, data.classes)?;
        let targets = codebook.target_matrix(&data.noisy_labels)?;

        let per_epoch = data.len().div_ceil(train.batch_size);
        let selection_iters = (train.epochs - train.warmup()) * per_epoch;
        let jump_step = schedule.jump_step.unwrap_or(per_epoch.max(2));
        if schedule.strategy == Strategy::JumpUpdate && jump_step > selection_iters.max(2) {
            return Err(Error::config(format!(
                "schedule.jump_step: {jump_step} exceeds the {selection_iters} post-warm-up iterations"
            )));
        }
        let table = IdentifierTable::new(data.len(), jump_step)?;
        let opts = nets
            .iter()
            .map(|n| Sgd::new(&n.parameters(), train.momentum, train.weight_decay))
            .collect();
        Ok(Self {
            data,
            codebook,
            targets,
            train: train.clone(),
            selection: selection.clone(),
            schedule: schedule.clone(),
            keep_ratio,
            nets,
            opts,
            table,
            shuffle_rng: RngStream::with_stream(train.seed, SHUFFLE_STREAM),
            gate_rng: RngStream::with_stream(train.seed, GATE_STREAM),
            epoch: 0,
            iteration: 0,
            selection_iterations: 0,
            trace: None,
        })
    }

    /// Starts recording [`TraceEvent`]s.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn nets(&self) -> &[DualHeadNet] {
        &self.nets
    }

    pub fn table(&self) -> &IdentifierTable {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut IdentifierTable {
        &mut self.table
    }

    /// Selection thresholds may be changed between epochs, e.g. to anneal `tau`.
    pub fn selection_mut(&mut self) -> &mut SelectionConfig {
        &mut self.selection
    }

    pub fn codebook(&self) -> &HadamardCodebook {
        &self.codebook
    }

    pub fn strategy(&self) -> Strategy {
        self.schedule.strategy
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn iterations_per_epoch(&self) -> usize {
        self.data.len().div_ceil(self.train.batch_size)
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.train.epochs
    }

    pub fn diagnostics(&self) -> ErrorFlowDiagnostics {
        ErrorFlowDiagnostics::new(
            self.schedule.strategy,
            self.data.len(),
            self.selection_iterations,
        )
    }

    /// Runs the next epoch: warm-up first, then the configured strategy.
    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        if self.is_finished() {
            return Err(Error::config(format!(
                "all {} epochs already ran",
                self.train.epochs
            )));
        }
        if self.epoch < self.train.warmup() {
            self.warmup_epoch()
        } else if self.schedule.strategy == Strategy::JumpUpdate {
            self.jump_train_epoch()
        } else {
            self.baseline_train_epoch()
        }
    }

    /// One epoch on every sample with no selection. Identifiers are still
    /// computed and written to the pending buffer.
    pub fn warmup_epoch(&mut self) -> Result<EpochStats> {
        if self.epoch >= self.train.warmup() {
            return Err(Error::config(format!(
                "epoch {} is past the {} warm-up epochs",
                self.epoch, self.train.warmup()
            )));
        }
        let start = Instant::now();
        let lr = self.lr();
        let mut tally = Tally::default();
        let mut decisions = vec![None; self.data.len()];
        for batch in self.batches() {
            let passes = self.forward_all(&batch, &mut tally)?;
            self.record_identifiers(&passes[0], &batch, &mut decisions)?;
            let rows: Vec<usize> = (0..batch.len()).collect();
            for (k, pass) in passes.iter().enumerate() {
                self.update(k, pass, &batch, &rows, lr, &mut tally)?;
            }
            self.iteration += 1;
        }
        let masks = vec![vec![true; self.data.len()]; self.nets.len()];
        self.finish(Phase::Warmup, lr, tally, masks, decisions, start)
    }

    /// One jump-update epoch. For each batch: (1) identifiers from the
    /// current forward pass go to the pending buffer; (2) the network steps on
    /// the batch samples whose *active* flag is set, or on the full batch when
    /// the effect-rate gate is closed; (3) at every jump boundary the pending
    /// buffer is committed.
    pub fn jump_train_epoch(&mut self) -> Result<EpochStats> {
        self.check_selection_phase(Strategy::JumpUpdate)?;
        let start = Instant::now();
        let lr = self.lr();
        let mut tally = Tally::default();
        let mut decisions = vec![None; self.data.len()];
        let warm_iters = (self.train.warmup() * self.iterations_per_epoch()) as u64;
        for batch in self.batches() {
            let passes = self.forward_all(&batch, &mut tally)?;
            let pass = &passes[0];
            self.record_identifiers(pass, &batch, &mut decisions)?;

            let t = self.iteration;
            let rows: Vec<usize> = if apply_effect_rate(self.schedule.effect_rate, &mut self.gate_rng) {
                self.selection_iterations += 1;
                let mut rows = Vec::with_capacity(batch.len());
                for (r, &sample) in batch.iter().enumerate() {
                    let flag = self.table.is_active(sample);
                    let produced_at = self.table.active_origin(sample);
                    if let Origin::Iteration(p) = produced_at {
                        tally.lag_sum += (t - p) as f64;
                        tally.lag_count += 1;
                    }
                    if let Some(trace) = self.trace.as_mut() {
                        trace.push(TraceEvent::Apply {
                            iteration: t,
                            sample,
                            flag,
                            produced_at,
                        });
                    }
                    if flag {
                        rows.push(r);
                    }
                }
                rows
            } else {
                (0..batch.len()).collect()
            };
            if rows.is_empty() {
                tally.skipped += 1;
            } else {
                self.update(0, pass, &batch, &rows, lr, &mut tally)?;
            }

            if self.table.is_commit_boundary(t - warm_iters) {
                self.table.commit_pending();
                if let Some(trace) = self.trace.as_mut() {
                    trace.push(TraceEvent::Commit { iteration: t });
                }
            }
            self.iteration += 1;
        }
        let masks = vec![decisions
            .iter()
            .map(|d| d.is_some_and(|d: SelectionDecision| d.combined_flag))
            .collect()];
        self.finish(Phase::Selection, lr, tally, masks, decisions, start)
    }

    /// One epoch of `standard`, `self_update` or `cross_update` training.
    ///
    /// Small-loss rankings use per-sample cross-entropy of the classification
    /// head. In `cross_update` both networks rank the batch from their
    /// pre-update forward passes, then the first network steps on the second's
    /// selection and vice versa, in that order.
    pub fn baseline_train_epoch(&mut self) -> Result<EpochStats> {
        let strategy = self.schedule.strategy;
        if strategy == Strategy::JumpUpdate {
            return Err(Error::config("jump_update has its own epoch routine"));
        }
        self.check_selection_phase(strategy)?;
        let start = Instant::now();
        let lr = self.lr();
        let keep_ratio = ramped_keep_ratio(
            self.keep_ratio,
            self.epoch,
            self.selection.small_loss_ramp_epochs,
        );
        let n = self.data.len();
        let mut tally = Tally::default();
        let mut decisions = vec![None; n];
        let mut masks = vec![vec![strategy == Strategy::Standard; n]; self.nets.len()];
        for batch in self.batches() {
            let passes = self.forward_all(&batch, &mut tally)?;
            self.record_identifiers(&passes[0], &batch, &mut decisions)?;
            let all: Vec<usize> = (0..batch.len()).collect();
            if strategy == Strategy::Standard {
                self.update(0, &passes[0], &batch, &all, lr, &mut tally)?;
                self.iteration += 1;
                continue;
            }

            let labels: Vec<usize> = batch.iter().map(|&i| self.data.noisy_labels[i]).collect();
            let mut kept = Vec::with_capacity(passes.len());
            for (k, pass) in passes.iter().enumerate() {
                let losses = per_sample_cross_entropy(pass, &labels)?;
                let mask = small_loss_select(&losses, keep_ratio)?;
                let rows: Vec<usize> = (0..batch.len()).filter(|&r| mask[r]).collect();
                for &r in &rows {
                    masks[k][batch[r]] = true;
                }
                if let Some(trace) = self.trace.as_mut() {
                    trace.push(TraceEvent::Rank {
                        iteration: self.iteration,
                        net: k,
                        samples: batch.clone(),
                        losses,
                        kept: rows.iter().map(|&r| batch[r]).collect(),
                    });
                }
                kept.push(rows);
            }
            let gate = apply_effect_rate(self.schedule.effect_rate, &mut self.gate_rng);
            if gate {
                self.selection_iterations += 1;
            }
            let peers = passes.len();
            for (k, pass) in passes.iter().enumerate() {
                // self_update: own ranking; cross_update: the peer's
                let rows = if gate { &kept[(k + 1) % peers] } else { &all };
                self.update(k, pass, &batch, rows, lr, &mut tally)?;
            }
            self.iteration += 1;
        }
        self.finish(Phase::Selection, lr, tally, masks, decisions, start)
    }

    fn check_selection_phase(&self, strategy: Strategy) -> Result<()> {
        if self.schedule.strategy != strategy {
            return Err(Error::config(format!(
                "trainer is configured for {}, not {strategy}",
                self.schedule.strategy
            )));
        }
        if self.epoch < self.train.warmup() {
            return Err(Error::config(format!(
                "epoch {} is still in warm-up",
                self.epoch
            )));
        }
        if self.is_finished() {
            return Err(Error::config("all epochs already ran"));
        }
        Ok(())
    }

    fn lr(&self) -> f64 {
        cosine_lr(self.epoch, self.train.epochs, self.train.lr0, self.train.lr_min)
    }

    fn batches(&mut self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        self.shuffle_rng.shuffle(&mut order);
        order
            .chunks(self.train.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }

    fn forward_all(&self, batch: &[usize], tally: &mut Tally) -> Result<Vec<ForwardPass>> {
        let x = self.data.features.select_rows(batch);
        let passes = self
            .nets
            .iter()
            .map(|net| net.forward(&x))
            .collect::<Result<Vec<_>>>()?;
        tally.forward += passes.len() as u64;
        Ok(passes)
    }

    fn record_identifiers(
        &mut self,
        pass: &ForwardPass,
        batch: &[usize],
        decisions: &mut [Option<SelectionDecision>],
    ) -> Result<()> {
        let labels: Vec<usize> = batch.iter().map(|&i| self.data.noisy_labels[i]).collect();
        for d in decide_batch(pass, batch, &labels, &self.codebook, &self.selection)? {
            self.table.write(d.sample_index, d.combined_flag, self.iteration);
            if let Some(trace) = self.trace.as_mut() {
                trace.push(TraceEvent::Write {
                    iteration: self.iteration,
                    sample: d.sample_index,
                    flag: d.combined_flag,
                });
            }
            decisions[d.sample_index] = Some(d);
        }
        Ok(())
    }

    /// One SGD step of network `k` on batch rows `rows`.
    fn update(
        &mut self,
        k: usize,
        pass: &ForwardPass,
        batch: &[usize],
        rows: &[usize],
        lr: f64,
        tally: &mut Tally,
    ) -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let samples: Vec<usize> = rows.iter().map(|&r| batch[r]).collect();
        let labels: Vec<usize> = samples.iter().map(|&i| self.data.noisy_labels[i]).collect();
        let targets = self.targets.select_rows(&samples);
        let context = |e: Error| match e {
            Error::Numeric(m) => Error::Numeric(format!(
                "epoch {}, iteration {}: {m}",
                self.epoch, self.iteration
            )),
            other => other,
        };
        let (parts, grads) = combined_loss(
            &self.nets[k],
            pass,
            rows,
            &labels,
            &targets,
            self.train.detection_weight,
        )
        .map_err(context)?;
        if !parts.total.is_finite() {
            return Err(context(Error::numeric(format!(
                "network {k} loss is not finite"
            ))));
        }
        let mut params = self.nets[k].parameters_mut();
        self.opts[k].step(&mut params, &grads, lr).map_err(context)?;
        tally.updates += 1;
        if k == 0 {
            tally.selected += rows.len();
            tally.loss_sum += parts.total;
            tally.loss_count += 1;
        }
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEvent::Update {
                iteration: self.iteration,
                net: k,
                samples,
            });
        }
        Ok(())
    }

    fn finish(
        &mut self,
        phase: Phase,
        lr: f64,
        tally: Tally,
        masks: Vec<Vec<bool>>,
        decisions: Vec<Option<SelectionDecision>>,
        start: Instant,
    ) -> Result<EpochStats> {
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let decisions = decisions
            .into_iter()
            .enumerate()
            .map(|(i, d)| d.ok_or_else(|| Error::shape(format!("sample {i} was not visited"))))
            .collect::<Result<Vec<_>>>()?;
        let stats = EpochStats {
            epoch: self.epoch,
            phase,
            strategy: self.schedule.strategy,
            lr,
            batches: self.iterations_per_epoch(),
            updates: tally.updates,
            skipped_batches: tally.skipped,
            selected_count: tally.selected,
            commit_count: self.table.commits(),
            mean_lag: if tally.lag_count == 0 {
                0.0
            } else {
                tally.lag_sum / tally.lag_count as f64
            },
            mean_loss: if tally.loss_count == 0 {
                0.0
            } else {
                tally.loss_sum / tally.loss_count as f64
            },
            forward_passes: tally.forward,
            diagnostics: self.diagnostics(),
            masks,
            decisions,
            wall_ms,
        };
        self.epoch += 1;
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_blobs, inject_noise, NoiseSpec};

    fn data() -> NoisyDataset {
        let d = gen_blobs(4, 6, 40, 1.0, 3).unwrap();
        inject_noise(&d.train, &NoiseSpec::symmetric(0.3), 4).unwrap()
    }

    fn cfg(epochs: usize, warmup: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            warmup_epochs: Some(warmup),
            batch_size: 20,
            hidden: vec![16, 16],
            lr0: 0.05,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    fn run(
        data: &NoisyDataset,
        train: &TrainConfig,
        sel: &SelectionConfig,
        schedule: &ScheduleConfig,
        keep: f64,
    ) -> (Vec<EpochStats>, Vec<DualHeadNet>) {
        let mut t = Trainer::new(data, train, sel, schedule, keep).unwrap();
        let mut stats = Vec::new();
        while !t.is_finished() {
            stats.push(t.run_epoch().unwrap());
        }
        (stats, t.nets().to_vec())
    }

    #[test]
    fn no_warmup_means_no_warmup_iterations() {
        let d = data();
        let (stats, _) = run(
            &d,
            &cfg(2, 0),
            &SelectionConfig::default(),
            &ScheduleConfig::new(Strategy::Standard),
            1.0,
        );
        assert!(stats.iter().all(|s| s.phase == Phase::Selection));
    }

    #[test]
    fn warmup_steps_once_per_batch() {
        let d = data();
        assert_eq!(d.len(), 128);
        let mut t = Trainer::new(
            &d,
            &cfg(3, 1),
            &SelectionConfig::default(),
            &ScheduleConfig::new(Strategy::JumpUpdate),
            1.0,
        )
        .unwrap();
        let s = t.warmup_epoch().unwrap();
        assert_eq!(s.updates, 7); // ⌈128/20⌉
        assert_eq!(s.selected_count, 128);
        assert!(t.warmup_epoch().is_err());
        // warm-up filled the pending buffer but committed nothing
        assert!(t.table().active().iter().all(|&a| a));
        assert_eq!(t.table().commits(), 0);
        assert!((0..128).all(|i| matches!(t.table().produced_at(i), Origin::Iteration(_))));
    }

    #[test]
    fn jump_without_selection_equals_standard() {
        let d = data();
        let train = cfg(4, 1);
        let open = SelectionConfig {
            tau: f64::INFINITY,
            ..SelectionConfig::default()
        };
        let (_, standard) = run(&d, &train, &open, &ScheduleConfig::new(Strategy::Standard), 1.0);
        let (stats, jump) = run(&d, &train, &open, &ScheduleConfig::new(Strategy::JumpUpdate), 1.0);
        assert_eq!(standard, jump);
        assert!(stats.iter().all(|s| s.skipped_batches == 0));
    }

    #[test]
    fn self_update_keeping_everything_equals_standard() {
        let d = data();
        let train = cfg(3, 1);
        let sel = SelectionConfig::default();
        let (_, standard) = run(&d, &train, &sel, &ScheduleConfig::new(Strategy::Standard), 1.0);
        let (_, selfu) = run(&d, &train, &sel, &ScheduleConfig::new(Strategy::SelfUpdate), 1.0);
        assert_eq!(standard, selfu);
    }

    #[test]
    fn cross_update_needs_two_networks() {
        let d = data();
        let train = cfg(2, 0);
        let one = Trainer::new(&d, &train, &SelectionConfig::default(), &ScheduleConfig::new(Strategy::Standard), 1.0)
            .unwrap()
            .nets()
            .to_vec();
        let err = Trainer::with_nets(
            &d,
            &train,
            &SelectionConfig::default(),
            &ScheduleConfig::new(Strategy::CrossUpdate),
            0.7,
            one,
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn cross_update_trains_on_peer_selection() {
        let d = data();
        let mut t = Trainer::new(
            &d,
            &cfg(3, 1),
            &SelectionConfig::default(),
            &ScheduleConfig::new(Strategy::CrossUpdate),
            0.7,
        )
        .unwrap();
        t.enable_trace();
        let warm = t.run_epoch().unwrap();
        assert_eq!(warm.forward_passes, 14);
        t.take_trace();
        let s = t.run_epoch().unwrap();
        assert_eq!(s.forward_passes, 14);
        // epoch 1 of the default 3-epoch ramp keeps 1 − 0.3/3 = 0.9:
        // six batches keep ⌈0.9·20⌉ = 18, the last keeps ⌈0.9·8⌉ = 8
        assert_eq!(s.selected_count, 116);
        let trace = t.take_trace();
        let mut ranks = std::collections::HashMap::new();
        let mut checked = 0;
        for ev in &trace {
            match ev {
                TraceEvent::Rank { iteration, net, kept, .. } => {
                    ranks.insert((*iteration, *net), kept.clone());
                }
                TraceEvent::Update { iteration, net, samples } => {
                    assert_eq!(samples, &ranks[&(*iteration, 1 - net)]);
                    checked += 1;
                }
                _ => {}
            }
        }
        assert_eq!(checked, 14);
    }

    #[test]
    fn empty_active_table_skips_every_batch() {
        let d = data();
        let mut t = Trainer::new(
            &d,
            &cfg(3, 1),
            &SelectionConfig::default(),
            &ScheduleConfig::new(Strategy::JumpUpdate),
            1.0,
        )
        .unwrap();
        t.run_epoch().unwrap();
        for i in 0..d.len() {
            t.table_mut().write(i, false, 0);
        }
        t.table_mut().commit_pending();
        let before = t.nets().to_vec();
        let s = t.run_epoch().unwrap();
        assert_eq!(s.skipped_batches, 7);
        assert_eq!(s.updates, 0);
        assert_eq!(t.nets(), before.as_slice());
    }

    #[test]
    fn oversized_jump_step_rejected() {
        let d = data();
        let sched = ScheduleConfig {
            jump_step: Some(1000),
            ..ScheduleConfig::new(Strategy::JumpUpdate)
        };
        assert!(Trainer::new(&d, &cfg(3, 1), &SelectionConfig::default(), &sched, 1.0).is_err());
    }
}
