//! Rank-1 matrix sensing with Burer-Monteiro factorization and its tensor
//! lifting: objectives, exact derivatives, landscape classification,
//! closed-form bounds and ADAM experiments.

// `!(x > 0.0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod landscape;
pub mod objective;
pub mod optimize;
pub mod sensing;
pub mod tensor;
pub mod theory;

pub use error::{Error, Result};
pub use objective::Problem;
pub use sensing::{BenchmarkSpec, SensingOperator};
pub use tensor::DenseTensor;
