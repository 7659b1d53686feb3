//! Classification and detection losses with their gradients.

use crate::error::{Error, Result};
use crate::numeric::Matrix;

use super::net::{DualHeadNet, ForwardPass, PROB_CLAMP};

/// Mean cross-entropy of temperature-scaled probabilities against `labels`.
///
/// The returned gradient is with respect to the raw logits, so it carries the
/// `1/T` factor of the scaled softmax: `(p − onehot) / (T·n)`.
pub fn classification_loss(
    probs: &Matrix,
    labels: &[usize],
    temperature: f64,
) -> Result<(f64, Matrix)> {
    let (n, classes) = probs.shape();
    if labels.len() != n {
        return Err(Error::shape(format!(
            "{} labels for {n} probability rows",
            labels.len()
        )));
    }
    if n == 0 {
        return Ok((0.0, Matrix::zeros(0, classes)));
    }
    let mut grad = probs.clone();
    let mut loss = 0.0;
    let scale = 1.0 / (temperature * n as f64);
    for (r, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Label(format!("label {y} with {classes} classes")));
        }
        loss -= probs.get(r, y).max(f64::MIN_POSITIVE).ln();
        let row = grad.row_mut(r);
        row[y] -= 1.0;
        row.iter_mut().for_each(|g| *g *= scale);
    }
    Ok((loss / n as f64, grad))
}

/// Per-sample binary cross-entropy averaged over the K bits.
pub fn per_sample_bce(z: &[f64], target: &[f64]) -> f64 {
    let k = z.len() as f64;
    z.iter()
        .zip(target)
        .map(|(&z, &t)| bce_term(z, t))
        .sum::<f64>()
        / k
}

/// One bit of binary cross-entropy, with `z` clamped into `(0, 1)`.
#[inline]
pub fn bce_term(z: f64, t: f64) -> f64 {
    let z = z.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(t * z.ln() + (1.0 - t) * (1.0 - z).ln())
}

/// Batch mean of the per-sample bit-averaged BCE between embeddings `z` and
/// `{0,1}` codeword targets.
///
/// The gradient is with respect to the pre-activation `a` of the final tanh,
/// where `z = (tanh(a) + 1) / 2`; per entry it simplifies to `2(z − t)/(K·n)`.
pub fn detection_loss(z: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    if !z.same_shape(targets) {
        return Err(Error::shape(format!(
            "embeddings {:?} vs targets {:?}",
            z.shape(),
            targets.shape()
        )));
    }
    if let Some(bad) = targets.data().iter().find(|&&t| t != 0.0 && t != 1.0) {
        return Err(Error::Encoding(format!("detection target {bad} is not 0 or 1")));
    }
    let (n, k) = z.shape();
    if n == 0 {
        return Ok((0.0, Matrix::zeros(0, k)));
    }
    let mut loss = 0.0;
    for r in 0..n {
        loss += per_sample_bce(z.row(r), targets.row(r));
    }
    let scale = 2.0 / (k as f64 * n as f64);
    let mut grad = z.clone();
    for (g, t) in grad.data_mut().iter_mut().zip(targets.data()) {
        *g = (*g - t) * scale;
    }
    Ok((loss / n as f64, grad))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub classification: f64,
    pub detection: f64,
    pub total: f64,
}

/// `CE + det_weight·BCE` over the rows `rows` of a forward pass, with gradients
/// for every parameter. `labels` and `targets` are given for those rows only.
pub fn combined_loss(
    net: &DualHeadNet,
    pass: &ForwardPass,
    rows: &[usize],
    labels: &[usize],
    targets: &Matrix,
    det_weight: f64,
) -> Result<(LossParts, Vec<Matrix>)> {
    let all_rows = rows.len() == pass.probs.rows() && rows.iter().enumerate().all(|(i, &r)| i == r);
    let gathered;
    let (probs, z, cache) = if all_rows {
        (&pass.probs, &pass.z, &pass.cache)
    } else {
        gathered = (
            pass.probs.select_rows(rows),
            pass.z.select_rows(rows),
            pass.cache.select_rows(rows),
        );
        (&gathered.0, &gathered.1, &gathered.2)
    };
    let (ce, dlogits) = classification_loss(probs, labels, net.temperature())?;
    let (bce, mut ddet) = detection_loss(z, targets)?;
    ddet.scale(det_weight);
    let grads = net.backward(cache, &dlogits, &ddet)?;
    Ok((
        LossParts {
            classification: ce,
            detection: bce,
            total: ce + det_weight * bce,
        },
        grads,
    ))
}
