//! Dense f64 tensors with tape-based reverse-mode automatic differentiation.
//!
//! Everything is 64-bit and deterministic: the same inputs produce
//! bit-identical outputs, which the gradient-check and reproducibility
//! suites rely on. Image layout is row-major NCHW throughout.

mod error;
pub mod gradcheck;
pub mod ops;
pub mod seeds;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, grad_check_params, grad_check_sampled, GradCheckReport};
pub use ops::conv::Conv2dSpec;
pub use ops::sample::sample_plane;
pub use ops::shape_ops::concat;
pub use tape::{BackwardFn, Gradients, ParamId, ParamStore, Parameter, Tape, ValueCtx, Var};
pub use tensor::Tensor;
