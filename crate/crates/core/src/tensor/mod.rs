//! Dense `f64` tensors with a reverse-mode autodiff tape.

mod dense;
pub mod gradcheck;
pub mod kernels;
mod param;
mod tape;

pub use dense::Tensor;
pub use gradcheck::{check_against, finite_diff_check, GradCheckReport, ParamCheck};
pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Mode, RunningStats, Tape, Var};
