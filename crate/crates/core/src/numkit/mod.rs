//! Dense linear algebra, hand-differentiated layers, cross-entropy and AdamW.
//!
//! Everything is `f64`; gradients are checked against central differences in
//! the tests of each submodule.

mod adam;
mod gradcheck;
mod layer;
mod loss;
mod matrix;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, DEFAULT_STEP};
pub use layer::{adam_step, Activation, DenseLayer};
pub use loss::softmax_xent;
pub use matrix::{matmul, matmul_nt, matmul_tn, matmul_tn_acc, RealMatrix};
