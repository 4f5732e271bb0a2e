//! Dense tensors, a recorded-op gradient tape, gradient checking, Adam, and
//! the checkpoint format.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod params;
mod sparse;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, REL_ERROR_FLOOR};
pub use params::{Init, Param, ParamStore};
pub use sparse::Csr;
pub use tape::{ParamGrads, Tape, Var};
pub use tensor::Tensor;
