//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! Just enough machinery to train the denoiser and scene encoder and to
//! gradient-check everything against finite differences: matmul, elementwise
//! arithmetic, ReLU/GELU, reductions, concat/slice, and an Adam optimizer.
//! No broadcasting beyond row-vector bias adds, no higher-order derivatives.
//!
//! Shape mismatches are programmer errors and panic with a message; data
//! errors (a non-finite loss during training) are surfaced as `Result`s by
//! the callers that can encounter them.

mod adam;
#[cfg(test)]
pub(crate) mod fd;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use tape::{Tape, Var};
pub use tensor::{matmul_raw, Tensor};
