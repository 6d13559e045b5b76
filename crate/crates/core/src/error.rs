use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised across the ranking core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("tensor shape {shape:?} does not match {len} values")]
    ValueCount { shape: Vec<usize>, len: usize },
    #[error("axis {axis} is out of range for shape {shape:?}")]
    InvalidAxis { axis: usize, shape: Vec<usize> },
    #[error("every position is masked; attention needs at least one visible item")]
    AllMasked,
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error(
        "network contains a gradient reversal node; finite differences cannot check it, \
         compare against the reversal-free twin (sign-flip property) instead"
    )]
    GradientReversalPresent,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("domain {domain} is out of range for {n_domains} domains")]
    DomainOutOfRange { domain: usize, n_domains: usize },
    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },
    #[error("model payload: {0}")]
    Codec(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
