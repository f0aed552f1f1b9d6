//! Two-state hysteresis rule mapping the observable into a long/flat
//! position process, with the one-step execution delay kept in the record
//! so the backtest can apply p_{t-1} without mutating the state sequence.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct DecisionConfig {
    pub theta: f64,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        Self { theta: 0.06 }
    }
}

impl DecisionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) {
            return Err(Error::Config(format!("theta must be > 0, got {}", self.theta)));
        }
        Ok(())
    }
}

/// Position state after the update at t, the state applied for accounting
/// (the previous state), and the state-change flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PositionRecord {
    pub p: u8,
    pub p_applied: u8,
    pub dp: u8,
}

/// One hysteresis update. Enter on s > theta from flat, exit on
/// s < -theta from long; strict inequalities, so s = ±theta holds.
pub fn update_state(p_prev: u8, s: f64, theta: f64) -> u8 {
    match p_prev {
        0 if s > theta => 1,
        1 if s < -theta => 0,
        p => p,
    }
}

/// Fold the hysteresis rule over a signal, starting flat.
pub fn run_decisions(signal: &[f64], cfg: &DecisionConfig) -> Vec<PositionRecord> {
    let mut records = Vec::with_capacity(signal.len());
    let mut p_prev = 0u8;
    for s in signal {
        let p = update_state(p_prev, *s, cfg.theta);
        records.push(PositionRecord {
            p,
            p_applied: p_prev,
            dp: p.abs_diff(p_prev),
        });
        p_prev = p;
    }
    records
}
