//! Python bindings: streaming building blocks (RunningMedian, Kalman) and
//! whole-series helpers over the causal pipeline, hysteresis rule, and
//! backtest accounting.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fwdsig::backtest;
use fwdsig::decision_engine::{self, DecisionConfig};
use fwdsig::indicators::{IndicatorConfig, IndicatorEngine};
use fwdsig::market_data::Bar;
use fwdsig::signal_pipeline::{self, Pipeline, PipelineConfig};

fn value_err(e: fwdsig::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Expanding-history running median (two-heap order statistics).
#[pyclass]
struct RunningMedian {
    inner: signal_pipeline::RunningMedian,
}

#[pymethods]
impl RunningMedian {
    #[new]
    fn new() -> Self {
        Self {
            inner: signal_pipeline::RunningMedian::new(),
        }
    }

    fn insert(&mut self, value: f64) -> PyResult<()> {
        self.inner.insert(value).map_err(value_err)
    }

    fn median(&self) -> Option<f64> {
        self.inner.median()
    }

    /// Center `value` against the median of earlier values, then absorb it.
    fn center_step(&mut self, value: f64) -> PyResult<f64> {
        self.inner.center_step(value).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Scalar random-walk Kalman filter, initialized at the first measurement.
#[pyclass]
struct Kalman {
    inner: signal_pipeline::KalmanState,
}

#[pymethods]
impl Kalman {
    #[new]
    #[pyo3(signature = (q=0.01, r=0.1))]
    fn new(q: f64, r: f64) -> Self {
        Self {
            inner: signal_pipeline::KalmanState::new(q, r),
        }
    }

    fn step(&mut self, z: f64) -> PyResult<f64> {
        self.inner.step(z).map_err(value_err)
    }
}

/// c1, c2 and the mixed forward observable for one (f0, df0) pair.
#[pyfunction]
#[pyo3(signature = (f0, df0, gain=2.0))]
fn forward_operator(f0: f64, df0: f64, gain: f64) -> (f64, f64, f64) {
    signal_pipeline::forward_operator(f0, df0, gain)
}

/// Filter a measurement series with the scalar Kalman recursion.
#[pyfunction]
#[pyo3(signature = (measurements, q=0.01, r=0.1))]
fn kalman_filter(measurements: Vec<f64>, q: f64, r: f64) -> PyResult<Vec<f64>> {
    let mut state = signal_pipeline::KalmanState::new(q, r);
    measurements
        .iter()
        .map(|z| state.step(*z).map_err(value_err))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn make_bars(
    highs: &[f64],
    lows: &[f64],
    closes: &[f64],
    volumes: &[f64],
) -> PyResult<Vec<Bar>> {
    let n = closes.len();
    if highs.len() != n || lows.len() != n || volumes.len() != n {
        return Err(PyValueError::new_err("highs, lows, closes, volumes must have equal length"));
    }
    let start = chrono::DateTime::from_timestamp(1_672_617_600, 0).unwrap(); // fixed synthetic origin
    Ok((0..n)
        .map(|i| Bar {
            timestamp: start + chrono::Duration::minutes(i as i64),
            open: closes[i],
            high: highs[i],
            low: lows[i],
            close: closes[i],
            volume: volumes[i],
        })
        .collect())
}

/// Run indicators + causal pipeline over aligned OHLCV arrays (already
/// session-filtered). Returns a dict of per-bar columns; warm-up entries
/// are None.
#[pyfunction]
#[pyo3(signature = (highs, lows, closes, volumes, *,
    rsi_window=14, mfi_window=14, macd_fast=12, macd_slow=26, macd_signal=9,
    bb_window=20, bb_k=2.0,
    alpha_mfi=0.02, alpha_rsi=0.02, alpha_bb=2.0, alpha_macd=1.0e4,
    kalman_q=0.01, kalman_r=0.1, derivative_span=4, derivative_gain=2.0))]
#[allow(clippy::too_many_arguments)]
fn run_pipeline<'py>(
    py: Python<'py>,
    highs: Vec<f64>,
    lows: Vec<f64>,
    closes: Vec<f64>,
    volumes: Vec<f64>,
    rsi_window: usize,
    mfi_window: usize,
    macd_fast: usize,
    macd_slow: usize,
    macd_signal: usize,
    bb_window: usize,
    bb_k: f64,
    alpha_mfi: f64,
    alpha_rsi: f64,
    alpha_bb: f64,
    alpha_macd: f64,
    kalman_q: f64,
    kalman_r: f64,
    derivative_span: usize,
    derivative_gain: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let indicator_cfg = IndicatorConfig {
        rsi_window,
        mfi_window,
        macd_fast,
        macd_slow,
        macd_signal,
        bb_window,
        bb_k,
    };
    indicator_cfg.validate().map_err(value_err)?;
    let pipeline_cfg = PipelineConfig {
        alpha_mfi,
        alpha_rsi,
        alpha_bb,
        alpha_macd,
        kalman_q,
        kalman_r,
        derivative_span,
        derivative_gain,
    };
    pipeline_cfg.validate().map_err(value_err)?;

    let bars = make_bars(&highs, &lows, &closes, &volumes)?;
    let mut engine = IndicatorEngine::new(&indicator_cfg);
    let mut pipeline = Pipeline::new(pipeline_cfg);
    let n = bars.len();
    let mut columns: Vec<(&str, Vec<Option<f64>>)> = [
        "mfi", "rsi", "bb_pct", "macd_diff", "centered_mfi", "centered_rsi", "centered_bb",
        "centered_macd", "f0_raw", "f0", "df0", "c1", "c2", "f",
    ]
    .iter()
    .map(|name| (*name, Vec::with_capacity(n)))
    .collect();
    let mut valid = Vec::with_capacity(n);
    for bar in &bars {
        let v = engine.step(bar);
        let signal = if v.all_valid() {
            Some(pipeline.step(&v).map_err(value_err)?)
        } else {
            None
        };
        valid.push(signal.is_some());
        let values = [
            v.mfi,
            v.rsi,
            v.bb_pct,
            v.macd_diff,
            signal.map(|s| s.centered_mfi),
            signal.map(|s| s.centered_rsi),
            signal.map(|s| s.centered_bb),
            signal.map(|s| s.centered_macd),
            signal.map(|s| s.f0_raw),
            signal.map(|s| s.f0),
            signal.map(|s| s.df0),
            signal.map(|s| s.c1),
            signal.map(|s| s.c2),
            signal.map(|s| s.f),
        ];
        for (col, value) in columns.iter_mut().zip(values) {
            col.1.push(value);
        }
    }
    let dict = PyDict::new(py);
    dict.set_item("valid", valid)?;
    for (name, col) in columns {
        dict.set_item(name, col)?;
    }
    Ok(dict)
}

/// Two-state hysteresis over a signal. Returns (p, p_applied, dp) lists.
#[pyfunction]
#[pyo3(signature = (signal, theta=0.06))]
fn run_decisions(signal: Vec<f64>, theta: f64) -> PyResult<(Vec<u32>, Vec<u32>, Vec<u32>)> {
    let cfg = DecisionConfig { theta };
    cfg.validate().map_err(value_err)?;
    let records = decision_engine::run_decisions(&signal, &cfg);
    // u32 so the lists surface as Python ints, not bytes
    Ok((
        records.iter().map(|r| r.p as u32).collect(),
        records.iter().map(|r| r.p_applied as u32).collect(),
        records.iter().map(|r| r.dp as u32).collect(),
    ))
}

/// Simple returns r_t = (P_t - P_{t-1}) / P_{t-1}.
#[pyfunction]
fn simple_returns(closes: Vec<f64>) -> PyResult<Vec<f64>> {
    backtest::simple_returns(&closes).map_err(value_err)
}

/// Delayed-accounting backtest of a signal against closes; returns a dict
/// with r, r_strategy, v, v_bench, trades_cum.
#[pyfunction]
#[pyo3(signature = (signal, closes, theta=0.06))]
fn run_backtest<'py>(
    py: Python<'py>,
    signal: Vec<f64>,
    closes: Vec<f64>,
    theta: f64,
) -> PyResult<Bound<'py, PyDict>> {
    if signal.len() != closes.len() {
        return Err(PyValueError::new_err("signal and closes must have equal length"));
    }
    let cfg = DecisionConfig { theta };
    cfg.validate().map_err(value_err)?;
    let positions = decision_engine::run_decisions(&signal, &cfg);
    let returns = backtest::simple_returns(&closes).map_err(value_err)?;
    let equity = backtest::realized_equity(&returns, &positions).map_err(value_err)?;
    let dict = PyDict::new(py);
    dict.set_item("r", equity.iter().map(|e| e.r).collect::<Vec<_>>())?;
    dict.set_item("r_strategy", equity.iter().map(|e| e.r_strategy).collect::<Vec<_>>())?;
    dict.set_item("v", equity.iter().map(|e| e.v).collect::<Vec<_>>())?;
    dict.set_item("v_bench", equity.iter().map(|e| e.v_bench).collect::<Vec<_>>())?;
    dict.set_item("trades_cum", equity.iter().map(|e| e.trades_cum).collect::<Vec<_>>())?;
    Ok(dict)
}

/// Maximum drawdown of a positive equity curve, as a non-positive fraction.
#[pyfunction]
fn max_drawdown(equity: Vec<f64>) -> PyResult<f64> {
    backtest::max_drawdown(&equity).map_err(value_err)
}

#[pymodule]
fn fwdsig_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<RunningMedian>()?;
    m.add_class::<Kalman>()?;
    m.add_function(wrap_pyfunction!(forward_operator, m)?)?;
    m.add_function(wrap_pyfunction!(kalman_filter, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(run_decisions, m)?)?;
    m.add_function(wrap_pyfunction!(simple_returns, m)?)?;
    m.add_function(wrap_pyfunction!(run_backtest, m)?)?;
    m.add_function(wrap_pyfunction!(max_drawdown, m)?)?;
    Ok(())
}
