//! Experiment runner for quantum and classical A3C trading agents: config,
//! synthetic data, the staged pipeline, the strategy matrix and SVG plots.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod plots;
pub mod synthetic;

pub use error::{CliError, Result};
