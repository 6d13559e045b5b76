//! Multi-domain learning to rank: a small reverse-mode autodiff engine, the
//! Baseline / MultiHead / DDA / DDS rankers built on it, their losses,
//! NDCG evaluation, training and a team-draft interleaving simulator.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod data;
pub mod error;
pub mod interleave;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod train;

pub use error::{Error, Result};
