//! Central-difference gradient oracle.

use super::Matrix;
use crate::error::{Error, Result};

/// Gradient magnitudes below this are compared on an absolute scale, so
/// coordinates whose true derivative is ~0 do not turn round-off into a
/// huge relative error.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(parameter index, row, col)` of the worst coordinate.
    pub worst: (usize, usize, usize),
    pub coordinates: usize,
}

/// Compares `analytic` against `(f(θ+ε) − f(θ−ε)) / 2ε` for every coordinate
/// of every parameter matrix and returns the largest relative error
/// `|a − n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`.
pub fn finite_difference_check<F>(
    mut loss_fn: F,
    params: &[Matrix],
    analytic: &[Matrix],
    epsilon: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Matrix]) -> f64,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::config(format!(
            "finite-difference epsilon {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    if params.len() != analytic.len() {
        return Err(Error::shape(format!(
            "{} parameters but {} analytic gradients",
            params.len(),
            analytic.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(analytic).enumerate() {
        if !p.same_shape(g) {
            return Err(Error::shape(format!(
                "parameter {i} is {:?} but its gradient is {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }

    let mut work: Vec<Matrix> = params.to_vec();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: (0, 0, 0),
        coordinates: 0,
    };
    for p in 0..work.len() {
        let cols = work[p].cols();
        for idx in 0..work[p].data().len() {
            let original = work[p].data()[idx];
            work[p].data_mut()[idx] = original + epsilon;
            let plus = loss_fn(&work);
            work[p].data_mut()[idx] = original - epsilon;
            let minus = loss_fn(&work);
            work[p].data_mut()[idx] = original;

            let (row, col) = (idx / cols, idx % cols);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite loss when perturbing parameter {p} at ({row}, {col})"
                )));
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let exact = analytic[p].data()[idx];
            let denom = exact.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
            let rel = (exact - numeric).abs() / denom;
            report.coordinates += 1;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = (p, row, col);
            }
        }
    }
    Ok(report)
}
