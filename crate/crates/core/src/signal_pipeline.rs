//! From indicator vectors to the forward-oriented observable F(t):
//! expanding-history median centering, alpha-weighted aggregation, scalar
//! Kalman smoothing, a short moving-average causal derivative, and the
//! state-dependent forward operator mixing the two.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use ordered_float::NotNan;
use serde::{Deserialize, Serialize};

use crate::indicators::IndicatorVector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct PipelineConfig {
    pub alpha_mfi: f64,
    pub alpha_rsi: f64,
    pub alpha_bb: f64,
    pub alpha_macd: f64,
    pub kalman_q: f64,
    pub kalman_r: f64,
    pub derivative_span: usize,
    pub derivative_gain: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            alpha_mfi: 0.02,
            alpha_rsi: 0.02,
            alpha_bb: 2.0,
            alpha_macd: 1.0e4,
            kalman_q: 0.01,
            kalman_r: 0.1,
            derivative_span: 4,
            derivative_gain: 2.0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kalman_q > 0.0) {
            return Err(Error::Config("kalman_q must be > 0".into()));
        }
        if !(self.kalman_r > 0.0) {
            return Err(Error::Config("kalman_r must be > 0".into()));
        }
        if self.derivative_span < 1 {
            return Err(Error::Config("derivative_span must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-bar trace of every pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalState {
    pub centered_mfi: f64,
    pub centered_rsi: f64,
    pub centered_bb: f64,
    pub centered_macd: f64,
    pub f0_raw: f64,
    pub f0: f64,
    pub df0: f64,
    pub c1: f64,
    pub c2: f64,
    pub f: f64,
}

/// Expanding-history running median over all values seen so far.
/// Two-heap scheme: max-heap of the lower half, min-heap of the upper
/// half, O(log n) insert, O(1) query. Even counts average the two
/// middle order statistics.
#[derive(Debug, Clone, Default)]
pub struct RunningMedian {
    lo: BinaryHeap<NotNan<f64>>,
    hi: BinaryHeap<Reverse<NotNan<f64>>>,
}

impl RunningMedian {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.lo.len() + self.hi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty() && self.hi.is_empty()
    }

    pub fn insert(&mut self, value: f64) -> Result<()> {
        let v = NotNan::new(value).map_err(|_| Error::Data("NaN fed to running median".into()))?;
        if self.lo.peek().is_some_and(|top| v < *top) {
            self.lo.push(v);
        } else {
            self.hi.push(Reverse(v));
        }
        // rebalance so that lo.len() is hi.len() or hi.len() + 1
        if self.lo.len() > self.hi.len() + 1 {
            let moved = self.lo.pop().unwrap();
            self.hi.push(Reverse(moved));
        } else if self.hi.len() > self.lo.len() {
            let Reverse(moved) = self.hi.pop().unwrap();
            self.lo.push(moved);
        }
        Ok(())
    }

    pub fn median(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        if self.lo.len() > self.hi.len() {
            Some(self.lo.peek().unwrap().into_inner())
        } else {
            let a = self.lo.peek().unwrap().into_inner();
            let b = self.hi.peek().unwrap().0.into_inner();
            Some((a + b) / 2.0)
        }
    }

    /// Center `value` against the median of strictly earlier values, then
    /// absorb it. The first-ever value centers to 0.
    pub fn center_step(&mut self, value: f64) -> Result<f64> {
        let centered = match self.median() {
            Some(m) => value - m,
            None => 0.0,
        };
        self.insert(value)?;
        Ok(centered)
    }
}

/// Scalar Kalman filter for a random-walk latent state. Initialized at the
/// first measurement with variance r; strictly causal, no backward pass.
#[derive(Debug, Clone)]
pub struct KalmanState {
    x: Option<f64>,
    p_var: f64,
    q: f64,
    r: f64,
}

impl KalmanState {
    pub fn new(q: f64, r: f64) -> Self {
        Self {
            x: None,
            p_var: 0.0,
            q,
            r,
        }
    }

    pub fn step(&mut self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::Data(format!("non-finite Kalman measurement: {z}")));
        }
        let x = match self.x {
            None => {
                self.p_var = self.r;
                z
            }
            Some(x_prev) => {
                self.p_var += self.q;
                let gain = self.p_var / (self.p_var + self.r);
                self.p_var *= 1.0 - gain;
                x_prev + gain * (z - x_prev)
            }
        };
        self.x = Some(x);
        Ok(x)
    }
}

/// Causal first-difference estimate smoothed by a short simple moving
/// average. The first difference is 0 by convention; until the span fills,
/// the average runs over however many differences exist.
#[derive(Debug, Clone)]
pub struct DerivativeSmoother {
    span: usize,
    prev: Option<f64>,
    diffs: VecDeque<f64>,
}

impl DerivativeSmoother {
    pub fn new(span: usize) -> Self {
        Self {
            span,
            prev: None,
            diffs: VecDeque::with_capacity(span + 1),
        }
    }

    pub fn step(&mut self, value: f64) -> f64 {
        let diff = match self.prev.replace(value) {
            Some(p) => value - p,
            None => 0.0,
        };
        self.diffs.push_back(diff);
        if self.diffs.len() > self.span {
            self.diffs.pop_front();
        }
        self.diffs.iter().sum::<f64>() / self.diffs.len() as f64
    }
}

/// Alpha-weighted average of the four centered indicators.
pub fn composite(
    centered_mfi: f64,
    centered_rsi: f64,
    centered_bb: f64,
    centered_macd: f64,
    cfg: &PipelineConfig,
) -> f64 {
    (cfg.alpha_mfi * centered_mfi
        + cfg.alpha_rsi * centered_rsi
        + cfg.alpha_bb * centered_bb
        + cfg.alpha_macd * centered_macd)
        / 4.0
}

/// State-dependent mix of the smoothed composite and its causal
/// derivative. Near zero the derivative dominates; in persistent regimes
/// the composite itself does.
pub fn forward_operator(f0: f64, df0: f64, gain: f64) -> (f64, f64, f64) {
    let c1 = f0.abs().tanh();
    let c2 = 1.0 - (f0 / 2.0).abs().tanh();
    let f = c1 * f0 + gain * c2 * df0;
    (c1, c2, f)
}

/// Full per-bar pipeline over valid indicator vectors. Single-owner,
/// strictly sequential per instrument.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    median_mfi: RunningMedian,
    median_rsi: RunningMedian,
    median_bb: RunningMedian,
    median_macd: RunningMedian,
    kalman: KalmanState,
    derivative: DerivativeSmoother,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        Self {
            kalman: KalmanState::new(cfg.kalman_q, cfg.kalman_r),
            derivative: DerivativeSmoother::new(cfg.derivative_span),
            median_mfi: RunningMedian::new(),
            median_rsi: RunningMedian::new(),
            median_bb: RunningMedian::new(),
            median_macd: RunningMedian::new(),
            cfg,
        }
    }

    /// Advance one bar. The vector must be fully warm.
    pub fn step(&mut self, v: &IndicatorVector) -> Result<SignalState> {
        let (Some(mfi), Some(rsi), Some(bb), Some(macd)) = (v.mfi, v.rsi, v.bb_pct, v.macd_diff)
        else {
            return Err(Error::Data("pipeline fed a warm-up indicator vector".into()));
        };
        let centered_mfi = self.median_mfi.center_step(mfi)?;
        let centered_rsi = self.median_rsi.center_step(rsi)?;
        let centered_bb = self.median_bb.center_step(bb)?;
        let centered_macd = self.median_macd.center_step(macd)?;
        let f0_raw = composite(centered_mfi, centered_rsi, centered_bb, centered_macd, &self.cfg);
        let f0 = self.kalman.step(f0_raw)?;
        let df0 = self.derivative.step(f0);
        let (c1, c2, f) = forward_operator(f0, df0, self.cfg.derivative_gain);
        Ok(SignalState {
            centered_mfi,
            centered_rsi,
            centered_bb,
            centered_macd,
            f0_raw,
            f0,
            df0,
            c1,
            c2,
            f,
        })
    }
}
