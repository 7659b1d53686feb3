use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{argmax, softmax_rows, Matrix, RngStream};

/// Lower/upper clamp applied to detection outputs so that `z` stays strictly
/// inside `(0, 1)` and every logarithm downstream is finite.
pub const PROB_CLAMP: f64 = 1e-12;

/// Layer widths of a [`DualHeadNet`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input: usize,
    /// Widths of the relu trunk layers; the last one feeds both heads.
    pub hidden: Vec<usize>,
    pub classes: usize,
    /// Detection embedding width (codebook length).
    pub code_bits: usize,
}

impl NetShape {
    pub fn feature_width(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input)
    }

    fn validate(&self) -> Result<()> {
        if self.input == 0 || self.classes < 2 || self.code_bits == 0 {
            return Err(Error::config(format!("degenerate network shape {self:?}")));
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        Ok(())
    }
}

/// Fully connected layer `y = x·W + b`, with `W` stored `in×out` and `b` as `1×out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Matrix,
}

impl Dense {
    fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Matrix::zeros(input, output),
            bias: Matrix::zeros(1, output),
        }
    }

    fn random(input: usize, output: usize, gain: f64, rng: &mut RngStream) -> Self {
        let std = (gain / input as f64).sqrt();
        Self {
            weights: Matrix::from_fn(input, output, |_, _| rng.normal() * std),
            bias: Matrix::zeros(1, output),
        }
    }

    pub fn affine(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul(&self.weights)?;
        out.add_row(self.bias.data())?;
        Ok(out)
    }
}

/// Shared relu trunk with a temperature-scaled classification head and a
/// three-layer tanh detection head.
///
/// The detection head is `feature → feature (tanh) → feature (tanh) → K (tanh)`;
/// its output `t` is remapped to `z = (t + 1) / 2` so it can be compared with
/// `{0,1}` codeword targets by binary cross-entropy.
#[derive(Clone, Debug, PartialEq)]
pub struct DualHeadNet {
    shape: NetShape,
    trunk: Vec<Dense>,
    classifier: Dense,
    detection: Vec<Dense>,
    temperature: f64,
}

/// Intermediate activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    input: Matrix,
    trunk: Vec<Matrix>,
    detection: Vec<Matrix>,
}

impl ForwardCache {
    /// Restricts the cache to `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> ForwardCache {
        ForwardCache {
            input: self.input.select_rows(rows),
            trunk: self.trunk.iter().map(|m| m.select_rows(rows)).collect(),
            detection: self.detection.iter().map(|m| m.select_rows(rows)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.input.rows()
    }

    fn feature(&self) -> &Matrix {
        self.trunk.last().unwrap_or(&self.input)
    }
}

/// Output of one forward pass over a batch.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    /// `n×C` temperature-scaled class probabilities.
    pub probs: Matrix,
    /// Per-row argmax of `probs`, lowest index on ties.
    pub preds: Vec<usize>,
    /// `n×K` detection embeddings, strictly inside `(0, 1)`.
    pub z: Matrix,
    pub cache: ForwardCache,
}

impl DualHeadNet {
    /// He-initialised relu trunk, Xavier-style heads, zero biases.
    pub fn new(shape: NetShape, temperature: f64, rng: &mut RngStream) -> Result<Self> {
        shape.validate()?;
        check_temperature(temperature)?;
        let mut trunk = Vec::with_capacity(shape.hidden.len());
        let mut width = shape.input;
        for &h in &shape.hidden {
            trunk.push(Dense::random(width, h, 2.0, rng));
            width = h;
        }
        let classifier = Dense::random(width, shape.classes, 1.0, rng);
        let detection = vec![
            Dense::random(width, width, 1.0, rng),
            Dense::random(width, width, 1.0, rng),
            Dense::random(width, shape.code_bits, 1.0, rng),
        ];
        Ok(Self {
            shape,
            trunk,
            classifier,
            detection,
            temperature,
        })
    }

    /// All-zero parameters: uniform class probabilities and `z = 0.5` everywhere.
    pub fn zeros(shape: NetShape, temperature: f64) -> Result<Self> {
        shape.validate()?;
        check_temperature(temperature)?;
        let mut trunk = Vec::new();
        let mut width = shape.input;
        for &h in &shape.hidden {
            trunk.push(Dense::zeros(width, h));
            width = h;
        }
        Ok(Self {
            trunk,
            classifier: Dense::zeros(width, shape.classes),
            detection: vec![
                Dense::zeros(width, width),
                Dense::zeros(width, width),
                Dense::zeros(width, shape.code_bits),
            ],
            shape,
            temperature,
        })
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn trunk(&self) -> &[Dense] {
        &self.trunk
    }

    pub fn classifier(&self) -> &Dense {
        &self.classifier
    }

    pub fn detection(&self) -> &[Dense] {
        &self.detection
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.trunk
            .iter()
            .chain(std::iter::once(&self.classifier))
            .chain(self.detection.iter())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.trunk
            .iter_mut()
            .chain(std::iter::once(&mut self.classifier))
            .chain(self.detection.iter_mut())
    }

    /// Parameters in a fixed order: trunk `(W, b)` pairs, classifier `(W, b)`,
    /// then the three detection `(W, b)` pairs.
    pub fn parameters(&self) -> Vec<&Matrix> {
        self.layers().flat_map(|l| [&l.weights, &l.bias]).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|m| m.data().len()).sum()
    }

    /// Copy of this network with its parameters replaced by `params`
    /// (same order and shapes as [`Self::parameters`]).
    pub fn with_parameters(&self, params: &[Matrix]) -> Result<Self> {
        let mut net = self.clone();
        net.set_parameters(params)?;
        Ok(net)
    }

    pub fn set_parameters(&mut self, params: &[Matrix]) -> Result<()> {
        let mut slots = self.parameters_mut();
        if slots.len() != params.len() {
            return Err(Error::shape(format!(
                "network has {} parameter tensors, got {}",
                slots.len(),
                params.len()
            )));
        }
        for (i, (slot, p)) in slots.iter_mut().zip(params).enumerate() {
            if !slot.same_shape(p) {
                return Err(Error::shape(format!(
                    "parameter {i} is {:?}, got {:?}",
                    slot.shape(),
                    p.shape()
                )));
            }
            **slot = p.clone();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().iter().all(|m| m.is_finite())
    }

    pub fn forward(&self, batch: &Matrix) -> Result<ForwardPass> {
        if batch.cols() != self.shape.input {
            return Err(Error::shape(format!(
                "batch has {} features, network expects {}",
                batch.cols(),
                self.shape.input
            )));
        }
        let mut trunk_out = Vec::with_capacity(self.trunk.len());
        for layer in &self.trunk {
            let prev = trunk_out.last().unwrap_or(batch);
            let mut a = layer.affine(prev)?;
            a.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            trunk_out.push(a);
        }
        let feature = trunk_out.last().unwrap_or(batch);

        let logits = self.classifier.affine(feature)?;
        let probs = softmax_rows(&logits, self.temperature)?;
        let preds = (0..probs.rows()).map(|r| argmax(probs.row(r))).collect();

        let mut det_out: Vec<Matrix> = Vec::with_capacity(self.detection.len());
        for layer in &self.detection {
            let prev = det_out.last().unwrap_or(feature);
            let mut a = layer.affine(prev)?;
            a.data_mut().iter_mut().for_each(|v| *v = v.tanh());
            det_out.push(a);
        }
        let z = det_out
            .last()
            .expect("detection head has three layers")
            .map(|t| ((t + 1.0) / 2.0).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP));

        Ok(ForwardPass {
            probs,
            preds,
            z,
            cache: ForwardCache {
                input: batch.clone(),
                trunk: trunk_out,
                detection: det_out,
            },
        })
    }

    /// Backpropagates gradients given w.r.t. the classifier logits and the
    /// pre-activation of the final detection tanh. Both must have one row per
    /// cached sample. Returns gradients in [`Self::parameters`] order.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dlogits: &Matrix,
        ddetection: &Matrix,
    ) -> Result<Vec<Matrix>> {
        let n = cache.rows();
        if dlogits.shape() != (n, self.shape.classes)
            || ddetection.shape() != (n, self.shape.code_bits)
        {
            return Err(Error::shape(format!(
                "backward on {n} rows got logit gradient {:?} and detection gradient {:?}",
                dlogits.shape(),
                ddetection.shape()
            )));
        }
        let feature = cache.feature();

        let cls_w = feature.matmul_tn(dlogits)?;
        let cls_b = row_matrix(dlogits.column_sums());
        let mut dfeature = dlogits.matmul_nt(&self.classifier.weights)?;

        let mut det_grads = vec![(Matrix::zeros(0, 0), Matrix::zeros(0, 0)); self.detection.len()];
        let mut delta = ddetection.clone();
        for l in (0..self.detection.len()).rev() {
            let input = if l == 0 { feature } else { &cache.detection[l - 1] };
            det_grads[l] = (input.matmul_tn(&delta)?, row_matrix(delta.column_sums()));
            let back = delta.matmul_nt(&self.detection[l].weights)?;
            if l == 0 {
                dfeature.axpy(1.0, &back)?;
            } else {
                let out = &cache.detection[l - 1];
                delta = back;
                for (d, y) in delta.data_mut().iter_mut().zip(out.data()) {
                    *d *= 1.0 - y * y;
                }
            }
        }

        let mut trunk_grads = vec![(Matrix::zeros(0, 0), Matrix::zeros(0, 0)); self.trunk.len()];
        let mut delta = dfeature;
        for l in (0..self.trunk.len()).rev() {
            let out = &cache.trunk[l];
            for (d, y) in delta.data_mut().iter_mut().zip(out.data()) {
                if *y <= 0.0 {
                    *d = 0.0;
                }
            }
            let input = if l == 0 { &cache.input } else { &cache.trunk[l - 1] };
            trunk_grads[l] = (input.matmul_tn(&delta)?, row_matrix(delta.column_sums()));
            if l > 0 {
                delta = delta.matmul_nt(&self.trunk[l].weights)?;
            }
        }

        let mut grads = Vec::with_capacity(2 * (self.trunk.len() + 1 + self.detection.len()));
        for (w, b) in trunk_grads {
            grads.push(w);
            grads.push(b);
        }
        grads.push(cls_w);
        grads.push(cls_b);
        for (w, b) in det_grads {
            grads.push(w);
            grads.push(b);
        }
        Ok(grads)
    }
}

fn row_matrix(values: Vec<f64>) -> Matrix {
    let n = values.len();
    Matrix::from_fn(1, n, |_, c| values[c])
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("temperature must be positive, got {t}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::softmax_with_temperature;

    fn shape() -> NetShape {
        NetShape {
            input: 5,
            hidden: vec![7, 6],
            classes: 4,
            code_bits: 8,
        }
    }

    #[test]
    fn zero_net_is_uniform() {
        let net = DualHeadNet::zeros(shape(), 2.0).unwrap();
        let x = Matrix::filled(3, 5, 0.7);
        let pass = net.forward(&x).unwrap();
        for v in pass.probs.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        assert!(pass.z.data().iter().all(|&v| v == 0.5));
        assert_eq!(pass.preds, vec![0, 0, 0]);
    }

    /// Independent per-sample recomputation with explicit loops.
    fn oracle(net: &DualHeadNet, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let dense = |l: &Dense, v: &[f64]| -> Vec<f64> {
            (0..l.weights.cols())
                .map(|j| {
                    l.bias.get(0, j)
                        + v.iter()
                            .enumerate()
                            .map(|(i, a)| a * l.weights.get(i, j))
                            .sum::<f64>()
                })
                .collect()
        };
        let mut h = x.to_vec();
        for l in net.trunk() {
            h = dense(l, &h).into_iter().map(|v| if v > 0.0 { v } else { 0.0 }).collect();
        }
        let logits = dense(net.classifier(), &h);
        let probs = softmax_with_temperature(&logits, net.temperature()).unwrap();
        let mut g = h.clone();
        for l in net.detection() {
            g = dense(l, &g).into_iter().map(f64::tanh).collect();
        }
        (probs, g.into_iter().map(|t| (t + 1.0) / 2.0).collect())
    }

    #[test]
    fn matches_layer_by_layer_oracle() {
        let mut rng = RngStream::new(4);
        let net = DualHeadNet::new(shape(), 1.5, &mut rng).unwrap();
        let x = Matrix::from_fn(1, 5, |_, _| rng.normal());
        let pass = net.forward(&x).unwrap();
        let (p, z) = oracle(&net, x.row(0));
        for (a, b) in pass.probs.row(0).iter().zip(&p) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in pass.z.row(0).iter().zip(&z) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_rows_give_identical_outputs() {
        let mut rng = RngStream::new(8);
        let net = DualHeadNet::new(shape(), 2.0, &mut rng).unwrap();
        let row: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
        let x = Matrix::from_rows(&vec![row; 4]).unwrap();
        let pass = net.forward(&x).unwrap();
        for r in 1..4 {
            assert_eq!(pass.probs.row(r), pass.probs.row(0));
            assert_eq!(pass.z.row(r), pass.z.row(0));
            assert_eq!(pass.preds[r], pass.preds[0]);
        }
        for r in 0..4 {
            assert!((pass.probs.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(pass.z.row(r).iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn width_mismatch_is_shape_error() {
        let net = DualHeadNet::zeros(shape(), 1.0).unwrap();
        assert!(matches!(net.forward(&Matrix::zeros(2, 4)), Err(Error::Shape(_))));
    }

    #[test]
    fn parameter_round_trip() {
        let mut rng = RngStream::new(9);
        let net = DualHeadNet::new(shape(), 1.0, &mut rng).unwrap();
        let params: Vec<Matrix> = net.parameters().into_iter().cloned().collect();
        assert_eq!(params.len(), 2 * (2 + 1 + 3));
        let copy = DualHeadNet::zeros(shape(), 1.0).unwrap().with_parameters(&params).unwrap();
        assert_eq!(copy, net);
        assert!(copy.with_parameters(&params[1..]).is_err());
    }
}
