//! Synthetic datasets, label-noise injection and CSV I/O.
//!
//! CSV layout: header `f0,...,f{d-1},label_true,label_noisy`, one sample per
//! line, shortest round-trip decimal features, integer labels, LF endings.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codebook::build_sylvester;
use crate::error::{Error, Result};
use crate::numeric::{Matrix, RngStream};

/// Distance of every blob center from the origin; pairwise center distance is
/// this times √2 when the feature dimension is a power of two.
pub const BLOB_CENTER_RADIUS: f64 = 4.0;

/// Fraction of each class placed in the training split.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Symmetric,
    Asymmetric,
    Pairflip,
    Instance,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(NoiseKind::Symmetric),
            "asymmetric" => Ok(NoiseKind::Asymmetric),
            "pairflip" => Ok(NoiseKind::Pairflip),
            "instance" => Ok(NoiseKind::Instance),
            other => Err(Error::config(format!("unknown noise kind `{other}`"))),
        }
    }
}

/// How labels are corrupted.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Flip rate in `[0, 1)`; for instance noise, the calibrated mean rate.
    pub epsilon: f64,
    /// Asymmetric noise: `class_map[y]` is the label a flipped `y` receives.
    pub class_map: Option<Vec<usize>>,
    /// Instance noise: `d×C` projection scoring each sample against each class.
    pub idn_weights: Option<Matrix>,
}

impl NoiseSpec {
    pub fn symmetric(epsilon: f64) -> Self {
        Self::simple(NoiseKind::Symmetric, epsilon)
    }

    pub fn pairflip(epsilon: f64) -> Self {
        Self::simple(NoiseKind::Pairflip, epsilon)
    }

    pub fn asymmetric(epsilon: f64, class_map: Vec<usize>) -> Self {
        Self {
            class_map: Some(class_map),
            ..Self::simple(NoiseKind::Asymmetric, epsilon)
        }
    }

    /// Instance noise with Gaussian projection weights drawn from `seed`.
    pub fn instance_from_seed(epsilon: f64, dim: usize, classes: usize, seed: u64) -> Self {
        let mut rng = RngStream::with_stream(seed, 0x1d);
        Self {
            idn_weights: Some(Matrix::from_fn(dim, classes, |_, _| rng.normal())),
            ..Self::simple(NoiseKind::Instance, epsilon)
        }
    }

    fn simple(kind: NoiseKind, epsilon: f64) -> Self {
        Self {
            kind,
            epsilon,
            class_map: None,
            idn_weights: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisyDataset {
    pub features: Matrix,
    pub true_labels: Vec<usize>,
    pub noisy_labels: Vec<usize>,
    /// `clean_mask[i] == (noisy_labels[i] == true_labels[i])`.
    pub clean_mask: Vec<bool>,
    pub classes: usize,
    pub noise: Option<NoiseSpec>,
    pub split: Split,
}

impl NoisyDataset {
    /// A dataset whose given labels are the true labels.
    pub fn clean(features: Matrix, labels: Vec<usize>, classes: usize, split: Split) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} feature rows for {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Label(format!("label {bad} with {classes} classes")));
        }
        Ok(Self {
            features,
            noisy_labels: labels.clone(),
            clean_mask: vec![true; labels.len()],
            true_labels: labels,
            classes,
            noise: None,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.true_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn noise_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.clean_mask.iter().filter(|&&c| !c).count() as f64 / self.len() as f64
    }

    fn refresh_mask(&mut self) {
        self.clean_mask = self
            .true_labels
            .iter()
            .zip(&self.noisy_labels)
            .map(|(a, b)| a == b)
            .collect();
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainTest {
    pub train: NoisyDataset,
    pub test: NoisyDataset,
}

/// Gaussian blobs around well-separated centers.
///
/// Class `c` is centered at `R·h_c/√d`, where `h_c` is row `c` of a Sylvester
/// matrix of order `≥ max(d, C)` truncated to `d` entries and `R` is
/// [`BLOB_CENTER_RADIUS`]. Each class contributes `n_per_class` points with
/// isotropic standard deviation `spread`; the first 80% of every class form
/// the training split. Samples are interleaved across classes.
pub fn gen_blobs(
    classes: usize,
    dim: usize,
    n_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<TrainTest> {
    if classes < 2 || dim < 2 {
        return Err(Error::config(format!(
            "blobs need at least 2 classes and 2 dimensions, got {classes} and {dim}"
        )));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::config(format!("blob spread must be non-negative, got {spread}")));
    }
    let order = dim.max(classes).next_power_of_two();
    let h = build_sylvester(order)?;
    let norm = BLOB_CENTER_RADIUS / (dim as f64).sqrt();
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|c| (0..dim).map(|j| f64::from(h[c][j]) * norm).collect())
        .collect();

    let mut rng = RngStream::with_stream(seed, 0xb1);
    let mut points: Vec<Vec<Vec<f64>>> = Vec::with_capacity(classes);
    for center in &centers {
        let mut class_points = Vec::with_capacity(n_per_class);
        for _ in 0..n_per_class {
            class_points.push(center.iter().map(|m| m + spread * rng.normal()).collect());
        }
        points.push(class_points);
    }

    let n_train = ((n_per_class as f64) * TRAIN_FRACTION).round() as usize;
    let assemble = |range: std::ops::Range<usize>, split: Split| -> Result<NoisyDataset> {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in range {
            for (c, class_points) in points.iter().enumerate() {
                data.extend_from_slice(&class_points[i]);
                labels.push(c);
            }
        }
        NoisyDataset::clean(Matrix::new(labels.len(), dim, data)?, labels, classes, split)
    };
    Ok(TrainTest {
        train: assemble(0..n_train, Split::Train)?,
        test: assemble(n_train..n_per_class, Split::Test)?,
    })
}

/// Per-sample flip probabilities of the instance-dependent recipe.
///
/// Each sample is scored by projecting its features on the weight column of
/// its true class; scores are standardised and mapped to
/// `clip(b + 0.5·ε·score, 0, 1)`, where the offset `b` is found by bisection so
/// the mean probability equals `ε`.
pub fn instance_flip_probabilities(
    ds: &NoisyDataset,
    weights: &Matrix,
    epsilon: f64,
) -> Result<Vec<f64>> {
    if weights.shape() != (ds.dim(), ds.classes) {
        return Err(Error::shape(format!(
            "instance-noise weights are {:?}, need {}x{}",
            weights.shape(),
            ds.dim(),
            ds.classes
        )));
    }
    let n = ds.len();
    if n == 0 || epsilon == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            let y = ds.true_labels[i];
            ds.features
                .row(i)
                .iter()
                .enumerate()
                .map(|(j, x)| x * weights.get(j, y))
                .sum()
        })
        .collect();
    let mean = scores.iter().sum::<f64>() / n as f64;
    let std = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let z: Vec<f64> = scores
        .iter()
        .map(|s| if std > 0.0 { (s - mean) / std } else { 0.0 })
        .collect();
    let slope = 0.5 * epsilon;
    let probs_at = |b: f64| -> Vec<f64> { z.iter().map(|s| (b + slope * s).clamp(0.0, 1.0)).collect() };
    let mean_at = |b: f64| probs_at(b).iter().sum::<f64>() / n as f64;
    let zmax = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (mut lo, mut hi) = (-1.0 - slope * zmax, 1.0 + slope * zmax);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(probs_at(0.5 * (lo + hi)))
}

/// Corrupts the labels of a training split. Test splits are returned unchanged.
///
/// * symmetric: with probability ε, a uniformly random *different* class;
/// * asymmetric: with probability ε, `class_map[y]`;
/// * pairflip: with probability ε, `(y + 1) mod C`;
/// * instance: per-sample probability from [`instance_flip_probabilities`],
///   flipping to the highest-scoring other class.
///
/// Noise is always drawn relative to the true labels.
pub fn inject_noise(ds: &NoisyDataset, spec: &NoiseSpec, seed: u64) -> Result<NoisyDataset> {
    if ds.split == Split::Test {
        return Ok(ds.clone());
    }
    if !(0.0..1.0).contains(&spec.epsilon) {
        return Err(Error::config(format!(
            "noise.epsilon: need a value in [0, 1), got {}",
            spec.epsilon
        )));
    }
    let c = ds.classes;
    let mut rng = RngStream::with_stream(seed, 0x9e);
    let mut out = ds.clone();
    out.noisy_labels = ds.true_labels.clone();
    match spec.kind {
        NoiseKind::Symmetric => {
            for label in out.noisy_labels.iter_mut() {
                if rng.bernoulli(spec.epsilon) {
                    let r = rng.below(c - 1);
                    *label = if r >= *label { r + 1 } else { r };
                }
            }
        }
        NoiseKind::Asymmetric => {
            let map = spec
                .class_map
                .as_ref()
                .ok_or_else(|| Error::config("noise.class_map: required for asymmetric noise"))?;
            if map.len() != c || map.iter().any(|&m| m >= c) {
                return Err(Error::config(format!(
                    "noise.class_map: need {c} entries below {c}, got {map:?}"
                )));
            }
            for label in out.noisy_labels.iter_mut() {
                if rng.bernoulli(spec.epsilon) {
                    *label = map[*label];
                }
            }
        }
        NoiseKind::Pairflip => {
            for label in out.noisy_labels.iter_mut() {
                if rng.bernoulli(spec.epsilon) {
                    *label = (*label + 1) % c;
                }
            }
        }
        NoiseKind::Instance => {
            let weights = spec
                .idn_weights
                .as_ref()
                .ok_or_else(|| Error::config("noise.idn_weights: required for instance noise"))?;
            let probs = instance_flip_probabilities(ds, weights, spec.epsilon)?;
            for (i, p) in probs.iter().enumerate() {
                if rng.uniform() < *p {
                    let y = ds.true_labels[i];
                    let x = ds.features.row(i);
                    let mut best = None;
                    for k in (0..c).filter(|&k| k != y) {
                        let s: f64 = x.iter().enumerate().map(|(j, v)| v * weights.get(j, k)).sum();
                        if best.is_none_or(|(_, b)| s > b) {
                            best = Some((k, s));
                        }
                    }
                    out.noisy_labels[i] = best.expect("at least two classes").0;
                }
            }
        }
    }
    out.refresh_mask();
    out.noise = Some(spec.clone());
    Ok(out)
}

fn header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..dim).map(|j| format!("f{j}")).collect();
    h.push("label_true".into());
    h.push("label_noisy".into());
    h
}

pub fn write_csv(ds: &NoisyDataset, out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header(ds.dim())).map_err(csv_err)?;
    for i in 0..ds.len() {
        let mut rec: Vec<String> = ds.features.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(ds.true_labels[i].to_string());
        rec.push(ds.noisy_labels[i].to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(ds: &NoisyDataset, path: &Path) -> Result<()> {
    write_csv(ds, File::create(path)?)
}

/// Parses a dataset CSV; labels must be below `classes`.
pub fn read_csv(input: impl std::io::Read, classes: usize, split: Split) -> Result<NoisyDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();
    let parse_err = |line: u64, message: String| Error::Parse { line, message };

    let head = match records.next() {
        Some(r) => r.map_err(|e| parse_err(1, e.to_string()))?,
        None => return Err(parse_err(1, "missing header".into())),
    };
    let fields: Vec<&str> = head.iter().collect();
    if fields.len() < 2 {
        return Err(parse_err(1, "header needs label_true and label_noisy".into()));
    }
    let dim = fields.len() - 2;
    let expected = header(dim);
    if fields != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(parse_err(
            1,
            format!("expected header `{}`", expected.join(",")),
        ));
    }

    let mut data = Vec::new();
    let mut true_labels = Vec::new();
    let mut noisy_labels = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != dim + 2 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", dim + 2, rec.len()),
            ));
        }
        for (j, field) in rec.iter().take(dim).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("feature f{j} `{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("feature f{j} is not finite")));
            }
            data.push(v);
        }
        for (name, field, sink) in [
            ("label_true", &rec[dim], &mut true_labels),
            ("label_noisy", &rec[dim + 1], &mut noisy_labels),
        ] {
            let y: usize = field
                .parse()
                .map_err(|_| parse_err(line, format!("{name} `{field}` is not a class index")))?;
            if y >= classes {
                return Err(parse_err(
                    line,
                    format!("{name} {y} is not below the class count {classes}"),
                ));
            }
            sink.push(y);
        }
    }
    let features = Matrix::new(true_labels.len(), dim, data)?;
    let mut ds = NoisyDataset::clean(features, true_labels, classes, split)?;
    ds.noisy_labels = noisy_labels;
    ds.refresh_mask();
    Ok(ds)
}

pub fn load_csv(path: &Path, classes: usize, split: Split) -> Result<NoisyDataset> {
    read_csv(File::open(path)?, classes, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> TrainTest {
        gen_blobs(10, 32, 50, 1.0, 7).unwrap()
    }

    #[test]
    fn blobs_shape_and_determinism() {
        let a = blobs();
        assert_eq!(a.train.len(), 400);
        assert_eq!(a.test.len(), 100);
        assert_eq!(a.train.dim(), 32);
        assert_eq!(a, blobs());
        for c in 0..10 {
            assert_eq!(a.train.true_labels.iter().filter(|&&y| y == c).count(), 40);
            assert_eq!(a.test.true_labels.iter().filter(|&&y| y == c).count(), 10);
        }
        assert!(a.train.clean_mask.iter().all(|&m| m));
        assert!(gen_blobs(1, 32, 5, 1.0, 0).is_err());
        assert!(gen_blobs(3, 1, 5, 1.0, 0).is_err());
    }

    #[test]
    fn zero_spread_blobs_sit_on_centers() {
        let d = gen_blobs(2, 4, 5, 0.0, 1).unwrap();
        // class 0 center is all +R/√d, class 1 alternates sign
        assert!(d.train.features.row(0).iter().all(|&v| v == 2.0));
        assert_eq!(d.train.features.row(1), &[2.0, -2.0, 2.0, -2.0]);
    }

    #[test]
    fn epsilon_zero_is_identity() {
        let d = blobs();
        for spec in [NoiseSpec::symmetric(0.0), NoiseSpec::pairflip(0.0)] {
            let noisy = inject_noise(&d.train, &spec, 3).unwrap();
            assert_eq!(noisy.noisy_labels, d.train.true_labels);
            assert!(noisy.clean_mask.iter().all(|&m| m));
        }
    }

    #[test]
    fn symmetric_rate_and_flip_to_different_class() {
        let d = gen_blobs(10, 4, 1250, 1.0, 2).unwrap();
        assert_eq!(d.train.len(), 10_000);
        let noisy = inject_noise(&d.train, &NoiseSpec::symmetric(0.5), 9).unwrap();
        let rate = noisy.noise_rate();
        // 3σ binomial bound for n = 10⁴, p = 0.5 is 0.015
        assert!((rate - 0.5).abs() <= 0.015, "{rate}");
        for i in 0..noisy.len() {
            assert_eq!(noisy.clean_mask[i], noisy.noisy_labels[i] == noisy.true_labels[i]);
        }
    }

    #[test]
    fn pairflip_full_rate_shifts_every_label() {
        let d = blobs();
        let noisy = inject_noise(&d.train, &NoiseSpec::pairflip(0.9999999), 1).unwrap();
        // ε must stay below 1; at 1 − 1e-7 every one of 400 draws flips with
        // overwhelming probability and the fixed seed pins the outcome.
        for (t, n) in noisy.true_labels.iter().zip(&noisy.noisy_labels) {
            assert_eq!(*n, (t + 1) % 10);
        }
    }

    #[test]
    fn asymmetric_needs_map() {
        let d = blobs();
        let spec = NoiseSpec::simple(NoiseKind::Asymmetric, 0.4);
        assert!(matches!(inject_noise(&d.train, &spec, 1), Err(Error::Config(_))));
        let map: Vec<usize> = (0..10).map(|c| (c + 3) % 10).collect();
        let noisy = inject_noise(&d.train, &NoiseSpec::asymmetric(0.4, map), 1).unwrap();
        for i in 0..noisy.len() {
            if !noisy.clean_mask[i] {
                assert_eq!(noisy.noisy_labels[i], (noisy.true_labels[i] + 3) % 10);
            }
        }
    }

    #[test]
    fn instance_noise_is_calibrated() {
        let d = gen_blobs(10, 8, 1250, 1.0, 4).unwrap();
        let spec = NoiseSpec::instance_from_seed(0.3, 8, 10, 5);
        let probs =
            instance_flip_probabilities(&d.train, spec.idn_weights.as_ref().unwrap(), 0.3).unwrap();
        let mean = probs.iter().sum::<f64>() / probs.len() as f64;
        assert!((mean - 0.3).abs() < 1e-9);
        assert!(probs.iter().any(|&p| p > 0.35) && probs.iter().any(|&p| p < 0.25));
        let noisy = inject_noise(&d.train, &spec, 6).unwrap();
        assert!((noisy.noise_rate() - 0.3).abs() < 0.01 + 0.015);
        let missing = NoiseSpec::simple(NoiseKind::Instance, 0.3);
        assert!(inject_noise(&d.train, &missing, 1).is_err());
    }

    #[test]
    fn test_split_untouched() {
        let d = blobs();
        let noisy = inject_noise(&d.test, &NoiseSpec::symmetric(0.8), 1).unwrap();
        assert_eq!(noisy, d.test);
    }

    #[test]
    fn csv_round_trip() {
        let d = blobs();
        let noisy = inject_noise(&d.train, &NoiseSpec::symmetric(0.4), 1).unwrap();
        let mut buf = Vec::new();
        write_csv(&noisy, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("f0,f1,"));
        assert!(!text.contains('\r'));
        let back = read_csv(buf.as_slice(), 10, Split::Train).unwrap();
        assert_eq!(back.features, noisy.features);
        assert_eq!(back.true_labels, noisy.true_labels);
        assert_eq!(back.noisy_labels, noisy.noisy_labels);
        assert_eq!(back.clean_mask, noisy.clean_mask);
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let empty = NoisyDataset::clean(Matrix::zeros(0, 3), vec![], 4, Split::Train).unwrap();
        let mut buf = Vec::new();
        write_csv(&empty, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "f0,f1,f2,label_true,label_noisy\n");
        let back = read_csv(buf.as_slice(), 4, Split::Train).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.dim(), 3);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = "f0,f1,label_true,label_noisy\n0.5,1,0,0\n0.1,0.2,3,1\n";
        match read_csv(text.as_bytes(), 3, Split::Train) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("label_true"));
            }
            other => panic!("{other:?}"),
        }
        let bad_header = "a,b,label_true,label_noisy\n";
        assert!(matches!(
            read_csv(bad_header.as_bytes(), 3, Split::Train),
            Err(Error::Parse { line: 1, .. })
        ));
        let short = "f0,label_true,label_noisy\n1.0,0\n";
        assert!(matches!(
            read_csv(short.as_bytes(), 3, Split::Train),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
