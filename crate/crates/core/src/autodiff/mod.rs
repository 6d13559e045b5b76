//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] is rebuilt for every step: operations append nodes as they are
//! evaluated and [`Tape::backward`] replays them once in reverse. Values are
//! addressed through copyable [`Var`] handles.

mod check;
mod tape;
mod tensor;

pub use check::{grad_check, FD_STEP};
pub use tape::{GrlLambda, Tape, Var};
pub use tensor::Tensor;
