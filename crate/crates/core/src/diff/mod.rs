//! Dense-tensor compute with reverse-mode differentiation, gradient
//! checking, and Adam.

pub mod adam;
pub mod gradcheck;
pub mod kernels;
pub mod sparse;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use sparse::{CsrMatrix, SparseOperator};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Scalar, Tensor};
