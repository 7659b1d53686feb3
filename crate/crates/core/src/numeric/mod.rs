//! Dense-matrix kernel, activations, softmax, seeded randomness and the
//! finite-difference gradient oracle used throughout the tests.

mod activation;
mod gradcheck;
mod matrix;
mod rng;
mod softmax;

pub use activation::{activation, Activation};
pub use gradcheck::{finite_difference_check, GradCheckReport, RELATIVE_ERROR_FLOOR};
pub use matrix::Matrix;
pub use rng::RngStream;
pub use softmax::{argmax, softmax_rows, softmax_with_temperature};
