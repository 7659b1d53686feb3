//! Oracles shared by the integration tests and the acceptance runner.

#![allow(dead_code)]

use std::collections::HashMap;

use jumpsel::codebook::derive_codebook;
use jumpsel::model::{combined_loss, DualHeadNet, NetShape};
use jumpsel::numeric::{finite_difference_check, GradCheckReport, Matrix, RngStream};
use jumpsel::schedule::{Origin, TraceEvent};

const FD_STEP: f64 = 1e-6;

/// Smallest |pre-activation| over the ReLU trunk; central differences are only
/// meaningful when it is well above the step.
fn relu_margin(net: &DualHeadNet, x: &Matrix) -> f64 {
    let mut h = x.clone();
    let mut margin = f64::INFINITY;
    for layer in net.trunk() {
        let pre = layer.affine(&h).unwrap();
        margin = pre.data().iter().fold(margin, |m, v| m.min(v.abs()));
        h = pre.map(|v| v.max(0.0));
    }
    margin
}

/// Central-difference check of the combined CE + BCE loss through a small
/// dual-head net with random weights and biases drawn from `seed`. Draws that
/// put a ReLU input within `100·step` of its kink are redrawn from the next
/// substream, since the loss is not differentiable there.
pub fn combined_gradient_check(seed: u64) -> GradCheckReport {
    let root = RngStream::new(seed);
    let mut attempt = 0;
    loop {
        let mut rng = root.substream(attempt);
        attempt += 1;
        let classes = 2 + rng.below(5);
        let bits = [8, 16][rng.below(2)].max(classes.next_power_of_two());
        let shape = NetShape {
            input: 3 + rng.below(5),
            hidden: vec![4 + rng.below(6), 4 + rng.below(6)],
            classes,
            code_bits: bits,
        };
        let det_weight = 0.5 + rng.uniform();
        let mut net = DualHeadNet::new(shape.clone(), 2.0, &mut rng).unwrap();
        let params: Vec<Matrix> = net
            .parameters()
            .into_iter()
            .map(|p| {
                if p.rows() == 1 {
                    Matrix::from_fn(1, p.cols(), |_, _| 0.1 * rng.normal())
                } else {
                    p.clone()
                }
            })
            .collect();
        net.set_parameters(&params).unwrap();
        let rows = 3 + rng.below(6);
        let x = Matrix::from_fn(rows, shape.input, |_, _| rng.normal());
        if relu_margin(&net, &x) < 100.0 * FD_STEP {
            continue;
        }
        let labels: Vec<usize> = (0..rows).map(|_| rng.below(classes)).collect();
        let codebook = derive_codebook(bits, classes).unwrap();
        let targets = codebook.target_matrix(&labels).unwrap();
        let all: Vec<usize> = (0..rows).collect();

        let pass = net.forward(&x).unwrap();
        let (_, grads) = combined_loss(&net, &pass, &all, &labels, &targets, det_weight).unwrap();
        let loss = |ps: &[Matrix]| {
            let n = net.with_parameters(ps).unwrap();
            let p = n.forward(&x).unwrap();
            combined_loss(&n, &p, &all, &labels, &targets, det_weight)
                .unwrap()
                .0
                .total
        };
        return finite_difference_check(loss, &params, &grads, FD_STEP).unwrap();
    }
}

/// Outcome of replaying a jump-update trace against an independent model of
/// the double-buffered table.
#[derive(Debug, Default)]
pub struct JumpAudit {
    pub applied: usize,
    pub applied_from_passes: usize,
    pub commits: usize,
    pub violations: Vec<String>,
}

/// Replays `trace` of a jump-update run with `len` samples, `warmup_iters`
/// warm-up iterations and jump step `step`.
///
/// Checks that commits fall on window boundaries, that every applied flag
/// equals the last committed snapshot, that it was produced strictly before
/// the commit that published it and so in an earlier commit window than the
/// iteration applying it, and that each update used exactly the applied
/// clean flags. With `one_window_back` every applied identifier must come
/// from the window immediately before the applying one.
pub fn audit_jump_trace(
    trace: &[TraceEvent],
    len: usize,
    warmup_iters: u64,
    step: u64,
    one_window_back: bool,
) -> JumpAudit {
    let mut audit = JumpAudit::default();
    let mut pending: Vec<(bool, Option<u64>)> = vec![(true, None); len];
    let mut active = pending.clone();
    let mut last_commit: Option<u64> = None;
    let mut applied_now: HashMap<u64, Vec<usize>> = HashMap::new();
    let window = |t: u64| (t >= warmup_iters).then(|| (t - warmup_iters) / step);
    let fail = |audit: &mut JumpAudit, msg: String| {
        if audit.violations.len() < 20 {
            audit.violations.push(msg);
        }
    };

    for event in trace {
        match event {
            TraceEvent::Write { iteration, sample, flag } => {
                pending[*sample] = (*flag, Some(*iteration));
            }
            TraceEvent::Commit { iteration } => {
                audit.commits += 1;
                let aligned = *iteration >= warmup_iters && (*iteration - warmup_iters + 1) % step == 0;
                if !aligned {
                    fail(&mut audit, format!("commit at iteration {iteration} is off a window boundary"));
                }
                active = pending.clone();
                last_commit = Some(*iteration);
            }
            TraceEvent::Apply { iteration, sample, flag, produced_at } => {
                audit.applied += 1;
                let t = *iteration;
                let (want_flag, want_origin) = active[*sample];
                let origin = match produced_at {
                    Origin::Initial => None,
                    Origin::Iteration(p) => Some(*p),
                };
                if *flag != want_flag || origin != want_origin {
                    fail(&mut audit, format!(
                        "iteration {t}, sample {sample}: applied ({flag}, {produced_at:?}) but the replayed table holds ({want_flag}, {want_origin:?})"
                    ));
                }
                if let Some(p) = origin {
                    audit.applied_from_passes += 1;
                    let c = last_commit.unwrap_or(u64::MAX);
                    if !(p <= c && c < t) {
                        fail(&mut audit, format!(
                            "iteration {t}, sample {sample}: produced at {p}, not before the commit at {c} that published it"
                        ));
                    }
                    let (wp, wt) = (window(p), window(t));
                    let earlier = match (wp, wt) {
                        (_, None) => false,
                        (None, Some(_)) => true,
                        (Some(a), Some(b)) => a < b,
                    };
                    if !earlier || t <= p {
                        fail(&mut audit, format!(
                            "iteration {t}, sample {sample}: produced at {p} in window {wp:?}, applied in window {wt:?}"
                        ));
                    }
                    if one_window_back && wt.is_some_and(|b| b > 0) && wp.map(|a| a + 1) != wt {
                        fail(&mut audit, format!(
                            "iteration {t}, sample {sample}: produced in window {wp:?}, not the one before {wt:?}"
                        ));
                    }
                }
                if *flag {
                    applied_now.entry(t).or_default().push(*sample);
                }
            }
            TraceEvent::Update { iteration, net, samples } => {
                if let Some(expected) = applied_now.remove(iteration) {
                    let mut got = samples.clone();
                    got.sort_unstable();
                    let mut want = expected;
                    want.sort_unstable();
                    if *net != 0 || got != want {
                        fail(&mut audit, format!(
                            "iteration {iteration}: net {net} trained on {} samples, the active table allowed {}",
                            got.len(),
                            want.len()
                        ));
                    }
                }
            }
            TraceEvent::Rank { .. } => {}
        }
    }
    audit
}

/// Checks that in a cross-update trace each network trains on exactly the
/// samples its peer kept at the same iteration. Returns the number of checked
/// updates and any violations.
pub fn audit_cross_trace(trace: &[TraceEvent]) -> (usize, Vec<String>) {
    let mut kept: HashMap<(u64, usize), Vec<usize>> = HashMap::new();
    let mut checked = 0;
    let mut violations = Vec::new();
    for event in trace {
        match event {
            TraceEvent::Rank { iteration, net, kept: k, .. } => {
                kept.insert((*iteration, *net), k.clone());
            }
            TraceEvent::Update { iteration, net, samples } => {
                let Some(peer) = kept.get(&(*iteration, 1 - *net)) else {
                    continue;
                };
                checked += 1;
                let (mut a, mut b) = (samples.clone(), peer.clone());
                a.sort_unstable();
                b.sort_unstable();
                if a != b {
                    violations.push(format!(
                        "iteration {iteration}: net {net} trained on {} samples, its peer kept {}",
                        a.len(),
                        b.len()
                    ));
                }
            }
            _ => {}
        }
    }
    (checked, violations)
}

/// Keys and columns that measure the machine rather than the computation.
pub const TIMING_FIELDS: [&str; 3] = ["epoch_wall_ms", "mean_epoch_ms", "peak_memory_bytes"];

/// Contents of an output file with timing fields removed: JSON keys for
/// `.json`/`.jsonl`, columns for `.csv`, raw bytes otherwise.
pub fn normalized(path: &std::path::Path) -> Vec<u8> {
    let bytes = std::fs::read(path).unwrap();
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let strip = |mut v: serde_json::Value| {
        if let Some(obj) = v.as_object_mut() {
            for k in TIMING_FIELDS {
                obj.remove(k);
            }
        }
        v.to_string()
    };
    match ext {
        "json" => strip(serde_json::from_slice(&bytes).unwrap()).into_bytes(),
        "jsonl" => String::from_utf8(bytes)
            .unwrap()
            .lines()
            .map(|l| strip(serde_json::from_str(l).unwrap()) + "\n")
            .collect::<String>()
            .into_bytes(),
        "csv" => {
            let text = String::from_utf8(bytes).unwrap();
            let mut lines = text.lines();
            let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
            let keep: Vec<bool> = header.iter().map(|h| !TIMING_FIELDS.contains(h)).collect();
            std::iter::once(header.join(","))
                .chain(lines.map(|l| {
                    l.split(',')
                        .zip(&keep)
                        .filter(|(_, k)| **k)
                        .map(|(v, _)| v)
                        .collect::<Vec<_>>()
                        .join(",")
                }))
                .map(|l| l + "\n")
                .collect::<String>()
                .into_bytes()
        }
        _ => bytes,
    }
}

/// Relative paths of every file below `root`, sorted.
pub fn files_below(root: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

/// Files of two output trees that differ once timing fields are removed.
pub fn differing_outputs(a: &std::path::Path, b: &std::path::Path) -> Vec<String> {
    let (fa, fb) = (files_below(a), files_below(b));
    if fa != fb {
        return vec![format!("file sets differ: {fa:?} vs {fb:?}")];
    }
    fa.iter()
        .filter(|rel| normalized(&a.join(rel)) != normalized(&b.join(rel)))
        .map(|rel| rel.display().to_string())
        .collect()
}
