//! Hybrid quantum-classical actor-critic trading agents over weekly market
//! data, with an LSTM return forecaster and backtest analytics.

pub mod a3c;
pub mod diffnet;
pub mod error;
pub mod forecaster;
pub mod metrics;
pub mod qsim;
pub mod tradeenv;

pub use error::{Error, Result};
