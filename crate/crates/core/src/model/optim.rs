use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// One SGD-with-momentum update, in place:
/// `v ← momentum·v + g + weight_decay·θ`, then `θ ← θ − lr·v`.
///
/// Refuses the whole step (nothing is modified) if any gradient entry is non-finite.
pub fn sgd_step(
    params: &mut [&mut Matrix],
    velocity: &mut [Matrix],
    grads: &[Matrix],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::shape(format!(
            "{} parameters, {} gradients, {} velocities",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if !p.same_shape(g) || !p.same_shape(&velocity[i]) {
            return Err(Error::shape(format!(
                "parameter {i} is {:?}, gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
        if let Some(pos) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite gradient in parameter {i} at flat index {pos}; step refused"
            )));
        }
    }
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        for ((theta, vel), grad) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            *vel = momentum * *vel + grad + weight_decay * *theta;
            *theta -= lr * *vel;
        }
    }
    Ok(())
}

/// Momentum buffers for a fixed parameter layout.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Matrix>,
}

impl Sgd {
    pub fn new(shapes: &[&Matrix], momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: shapes.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix], lr: f64) -> Result<()> {
        sgd_step(
            params,
            &mut self.velocity,
            grads,
            lr,
            self.momentum,
            self.weight_decay,
        )
    }
}

/// Cosine annealing from `lr0` at epoch 0 to `lr_min` at `total_epochs`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr0: f64, lr_min: f64) -> f64 {
    if total_epochs == 0 {
        return lr0;
    }
    let progress = epoch.min(total_epochs) as f64 / total_epochs as f64;
    lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (std::f64::consts::PI * progress).cos())
}
