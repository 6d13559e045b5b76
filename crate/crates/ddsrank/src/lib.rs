//! Files, experiments and reports around `ddsrank-core`: line-delimited
//! JSON datasets, TOML experiment configs, the multi-seed training
//! protocol, interleaving runs and the `ddsrank` command line.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod output;
pub mod report;

pub use error::{Error, Result};
