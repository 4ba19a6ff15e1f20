//! Dense linear algebra, the seeded generator, Adam, and finite-difference
//! gradient probes.

mod adam;
mod gradcheck;
mod matrix;
mod rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_diff_grad, max_relative_error, relative_error};
pub use matrix::{ElementwiseOp, Matrix};
pub use rng::{fnv1a64, SeededRng};
