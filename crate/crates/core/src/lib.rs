//! Streaming construction of a strictly causal composite market observable
//! and its evaluation through a hysteresis decision rule.
//!
//! The processing chain is: OHLCV bars -> session filter -> four incremental
//! technical indicators -> causal median centering -> linear aggregation ->
//! scalar Kalman smoothing -> smoothed causal derivative -> adaptive forward
//! operator -> two-state hysteresis -> delayed-accounting backtest.
//!
//! Every stage consumes only observations at or before the current bar, so
//! replaying any prefix of the input reproduces the identical prefix of
//! outputs bit for bit. The `audit` machinery in [`run`] checks exactly that.

pub mod backtest;
pub mod config;
pub mod decision_engine;
pub mod error;
pub mod indicators;
pub mod market_data;
pub mod run;
pub mod signal_pipeline;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
