//! Incremental, strictly causal computation of the four indicator series:
//! RSI (momentum), MFI (volume pressure), MACD difference (trend
//! acceleration), and Bollinger Band percent (volatility-normalized price
//! location). Each state consumes one bar at a time and never looks ahead.

use serde::{Deserialize, Serialize};

use crate::market_data::Bar;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct IndicatorConfig {
    pub rsi_window: usize,
    pub mfi_window: usize,
    pub macd_fast: usize,
    pub macd_slow: usize,
    pub macd_signal: usize,
    pub bb_window: usize,
    pub bb_k: f64,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        Self {
            rsi_window: 14,
            mfi_window: 14,
            macd_fast: 12,
            macd_slow: 26,
            macd_signal: 9,
            bb_window: 20,
            bb_k: 2.0,
        }
    }
}

impl IndicatorConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let windows = [
            ("rsi_window", self.rsi_window),
            ("mfi_window", self.mfi_window),
            ("macd_fast", self.macd_fast),
            ("macd_slow", self.macd_slow),
            ("macd_signal", self.macd_signal),
            ("bb_window", self.bb_window),
        ];
        for (name, w) in windows {
            if w < 2 {
                return Err(crate::Error::Config(format!("{name} must be >= 2, got {w}")));
            }
        }
        if self.macd_fast >= self.macd_slow {
            return Err(crate::Error::Config(format!(
                "macd_fast ({}) must be < macd_slow ({})",
                self.macd_fast, self.macd_slow
            )));
        }
        if !(self.bb_k > 0.0) {
            return Err(crate::Error::Config("bb_k must be > 0".into()));
        }
        Ok(())
    }
}

/// The four indicator values at one bar. `None` means still warming up.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IndicatorVector {
    pub mfi: Option<f64>,
    pub rsi: Option<f64>,
    pub bb_pct: Option<f64>,
    pub macd_diff: Option<f64>,
}

impl IndicatorVector {
    /// Valid for the pipeline only when all four indicators are warm.
    pub fn all_valid(&self) -> bool {
        self.mfi.is_some() && self.rsi.is_some() && self.bb_pct.is_some() && self.macd_diff.is_some()
    }
}

/// Ratio form shared by RSI and MFI: 100 * pos / (pos + neg) with the
/// degenerate cases resolved as continuous limits.
fn bounded_ratio(pos: f64, neg: f64) -> f64 {
    if pos == 0.0 && neg == 0.0 {
        50.0
    } else if neg == 0.0 {
        100.0
    } else if pos == 0.0 {
        0.0
    } else {
        100.0 * (1.0 - 1.0 / (1.0 + pos / neg))
    }
}

/// Wilder-smoothed RSI. Warm after `window + 1` closes.
#[derive(Debug, Clone)]
pub struct RsiState {
    window: usize,
    prev_close: Option<f64>,
    diffs_seen: usize,
    avg_gain: f64,
    avg_loss: f64,
}

impl RsiState {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            prev_close: None,
            diffs_seen: 0,
            avg_gain: 0.0,
            avg_loss: 0.0,
        }
    }

    pub fn step(&mut self, close: f64) -> Option<f64> {
        let prev = match self.prev_close.replace(close) {
            Some(p) => p,
            None => return None,
        };
        let diff = close - prev;
        let gain = diff.max(0.0);
        let loss = (-diff).max(0.0);
        let n = self.window as f64;
        if self.diffs_seen < self.window {
            // first `window` diffs: simple mean
            self.avg_gain += gain / n;
            self.avg_loss += loss / n;
        } else {
            self.avg_gain = (self.avg_gain * (n - 1.0) + gain) / n;
            self.avg_loss = (self.avg_loss * (n - 1.0) + loss) / n;
        }
        self.diffs_seen += 1;
        if self.diffs_seen < self.window {
            None
        } else {
            Some(bounded_ratio(self.avg_gain, self.avg_loss))
        }
    }
}

/// Money Flow Index over a trailing window of signed raw money flows.
/// Equal typical prices contribute to neither side. Warm after
/// `window + 1` bars.
#[derive(Debug, Clone)]
pub struct MfiState {
    window: usize,
    prev_tp: Option<f64>,
    // signed raw flow per bar transition: +tp*vol up, -tp*vol down, 0 flat
    flows: std::collections::VecDeque<f64>,
}

impl MfiState {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            prev_tp: None,
            flows: std::collections::VecDeque::with_capacity(window + 1),
        }
    }

    pub fn step(&mut self, bar: &Bar) -> Option<f64> {
        let tp = (bar.high + bar.low + bar.close) / 3.0;
        let prev = match self.prev_tp.replace(tp) {
            Some(p) => p,
            None => return None,
        };
        let raw = tp * bar.volume;
        let flow = if tp > prev {
            raw
        } else if tp < prev {
            -raw
        } else {
            0.0
        };
        self.flows.push_back(flow);
        if self.flows.len() > self.window {
            self.flows.pop_front();
        }
        if self.flows.len() < self.window {
            return None;
        }
        let pos: f64 = self.flows.iter().filter(|f| **f > 0.0).sum();
        let neg: f64 = -self.flows.iter().filter(|f| **f < 0.0).sum::<f64>();
        Some(bounded_ratio(pos, neg))
    }
}

/// EMA with span n: weight 2/(n+1), seeded at the first observation.
#[derive(Debug, Clone)]
struct Ema {
    weight: f64,
    value: Option<f64>,
}

impl Ema {
    fn new(span: usize) -> Self {
        Self {
            weight: 2.0 / (span as f64 + 1.0),
            value: None,
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        let v = match self.value {
            None => x,
            Some(prev) => prev + self.weight * (x - prev),
        };
        self.value = Some(v);
        v
    }
}

/// MACD line minus its signal line. Warm after `macd_slow` closes.
#[derive(Debug, Clone)]
pub struct MacdState {
    fast: Ema,
    slow: Ema,
    signal: Ema,
    slow_span: usize,
    seen: usize,
}

impl MacdState {
    pub fn new(fast: usize, slow: usize, signal: usize) -> Self {
        Self {
            fast: Ema::new(fast),
            slow: Ema::new(slow),
            signal: Ema::new(signal),
            slow_span: slow,
            seen: 0,
        }
    }

    pub fn step(&mut self, close: f64) -> Option<f64> {
        let line = self.fast.step(close) - self.slow.step(close);
        let signal = self.signal.step(line);
        self.seen += 1;
        if self.seen < self.slow_span {
            None
        } else {
            Some(line - signal)
        }
    }
}

/// Bollinger Band percent over a trailing window, population standard
/// deviation. Warm after `window` closes. A collapsed band (sigma = 0)
/// yields 0.5.
#[derive(Debug, Clone)]
pub struct BbState {
    window: usize,
    k: f64,
    closes: std::collections::VecDeque<f64>,
}

impl BbState {
    pub fn new(window: usize, k: f64) -> Self {
        Self {
            window,
            k,
            closes: std::collections::VecDeque::with_capacity(window + 1),
        }
    }

    pub fn step(&mut self, close: f64) -> Option<f64> {
        self.closes.push_back(close);
        if self.closes.len() > self.window {
            self.closes.pop_front();
        }
        if self.closes.len() < self.window {
            return None;
        }
        let n = self.window as f64;
        let mean: f64 = self.closes.iter().sum::<f64>() / n;
        let var: f64 = self.closes.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
        let sigma = var.sqrt();
        if sigma == 0.0 {
            return Some(0.5);
        }
        Some((close - (mean - self.k * sigma)) / (2.0 * self.k * sigma))
    }
}

/// All four streaming indicators driven from one bar stream.
#[derive(Debug, Clone)]
pub struct IndicatorEngine {
    rsi: RsiState,
    mfi: MfiState,
    macd: MacdState,
    bb: BbState,
}

impl IndicatorEngine {
    pub fn new(cfg: &IndicatorConfig) -> Self {
        Self {
            rsi: RsiState::new(cfg.rsi_window),
            mfi: MfiState::new(cfg.mfi_window),
            macd: MacdState::new(cfg.macd_fast, cfg.macd_slow, cfg.macd_signal),
            bb: BbState::new(cfg.bb_window, cfg.bb_k),
        }
    }

    pub fn step(&mut self, bar: &Bar) -> IndicatorVector {
        IndicatorVector {
            mfi: self.mfi.step(bar),
            rsi: self.rsi.step(bar.close),
            bb_pct: self.bb.step(bar.close),
            macd_diff: self.macd.step(bar.close),
        }
    }
}
