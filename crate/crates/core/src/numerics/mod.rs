//! Dense tensors, a reverse-mode tape, gradient checking and AdamW.

mod adamw;
pub mod container;
mod gradcheck;
mod scalar;
mod tape;
mod tensor;

pub use adamw::{AdamW, AdamWConfig};
pub use gradcheck::{grad_check, GradCheckReport, ParamCheck, RELATIVE_FLOOR};
pub use scalar::{c, Scalar};
pub use tape::{Axis, Gradients, Tape, Var, LAYERNORM_EPS};
pub use tensor::Tensor;

pub(crate) use tape::{log_sum_exp, sigmoid, softmax_in_place};
