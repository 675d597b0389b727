//! Dense tensors, reverse-mode differentiation and a finite-difference oracle.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_params, relative_error, ParamCheck};
pub use params::{ParamId, ParamStore};
pub use tape::{sigmoid, softmax_rows, Gradients, Tape, Var};
pub use tensor::Tensor;
