//! End-to-end orchestration: bars -> indicators -> pipeline -> decisions
//! -> backtest, artifact serialization, the prefix-invariance causality
//! audit, and the forward-shift diagnostic.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backtest::{
    forward_shift_diagnostic, realized_equity, regime_report, simple_returns, EquityRecord,
    RegimeReport,
};
use crate::config::RunConfig;
use crate::decision_engine::{run_decisions, PositionRecord};
use crate::indicators::{IndicatorEngine, IndicatorVector};
use crate::market_data::{filter_session, format_timestamp, parse_bars, Bar};
use crate::signal_pipeline::{Pipeline, SignalState};
use crate::{Error, Result};

/// One trace row per session-surviving bar. `signal` is None while any
/// indicator is still warming up.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub timestamp: DateTime<Utc>,
    pub close: f64,
    pub vector: IndicatorVector,
    pub signal: Option<SignalState>,
}

impl TraceRow {
    /// Numeric columns in trace CSV order, for bit-exact comparison.
    pub fn columns(&self) -> [(&'static str, Option<f64>); 15] {
        let s = self.signal.as_ref();
        [
            ("close", Some(self.close)),
            ("mfi", self.vector.mfi),
            ("rsi", self.vector.rsi),
            ("bb_pct", self.vector.bb_pct),
            ("macd_diff", self.vector.macd_diff),
            ("centered_mfi", s.map(|x| x.centered_mfi)),
            ("centered_rsi", s.map(|x| x.centered_rsi)),
            ("centered_bb", s.map(|x| x.centered_bb)),
            ("centered_macd", s.map(|x| x.centered_macd)),
            ("f0_raw", s.map(|x| x.f0_raw)),
            ("f0", s.map(|x| x.f0)),
            ("df0", s.map(|x| x.df0)),
            ("c1", s.map(|x| x.c1)),
            ("c2", s.map(|x| x.c2)),
            ("f", s.map(|x| x.f)),
        ]
    }
}

/// Everything one pass over the data produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRow>,
    /// timestamps of the post-warm-up (valid) bars
    pub timestamps: Vec<DateTime<Utc>>,
    pub closes: Vec<f64>,
    /// forward observable per valid bar
    pub signal: Vec<f64>,
    pub positions: Vec<PositionRecord>,
    /// aligned to valid bars 1.., empty when fewer than 2 valid bars
    pub equity: Vec<EquityRecord>,
}

/// Run indicators + pipeline over already-filtered bars.
pub fn compute_trace(filtered: &[Bar], cfg: &RunConfig) -> Result<Vec<TraceRow>> {
    let mut engine = IndicatorEngine::new(&cfg.indicators);
    let mut pipeline = Pipeline::new(cfg.pipeline);
    let mut trace = Vec::with_capacity(filtered.len());
    for bar in filtered {
        let vector = engine.step(bar);
        let signal = if vector.all_valid() {
            Some(pipeline.step(&vector)?)
        } else {
            None
        };
        trace.push(TraceRow {
            timestamp: bar.timestamp,
            close: bar.close,
            vector,
            signal,
        });
    }
    Ok(trace)
}

/// Full in-memory run over raw bars: session filter, trace, decisions,
/// equity. Deterministic for identical inputs and config.
pub fn run_series(bars: &[Bar], cfg: &RunConfig) -> Result<RunOutput> {
    let policy = cfg.session.policy()?;
    let filtered = filter_session(bars, &policy);
    if filtered.is_empty() {
        return Err(Error::Data("no bars survive session filter".into()));
    }
    let trace = compute_trace(&filtered, cfg)?;
    let mut timestamps = Vec::new();
    let mut closes = Vec::new();
    let mut signal = Vec::new();
    for row in &trace {
        if let Some(s) = &row.signal {
            timestamps.push(row.timestamp);
            closes.push(row.close);
            signal.push(s.f);
        }
    }
    let positions = run_decisions(&signal, &cfg.decision);
    let equity = if closes.len() >= 2 {
        realized_equity(&simple_returns(&closes)?, &positions)?
    } else {
        Vec::new()
    };
    Ok(RunOutput {
        trace,
        timestamps,
        closes,
        signal,
        positions,
        equity,
    })
}

fn read_input(cfg: &RunConfig) -> Result<Vec<Bar>> {
    let file = fs::File::open(&cfg.input)
        .map_err(|e| Error::Config(format!("cannot open input {}: {e}", cfg.input)))?;
    parse_bars(std::io::BufReader::new(file), &cfg.columns)
}

fn fmt_f64(v: f64) -> String {
    // shortest representation that round-trips bit-exactly
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Removes everything it wrote if the run fails partway.
struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut file = fs::File::create(&path)?;
        file.write_all(contents.as_bytes())?;
        self.written.push(path.clone());
        Ok(path)
    }

    fn commit(mut self) {
        self.written.clear();
    }
}

impl Drop for ArtifactWriter {
    fn drop(&mut self) {
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
    }
}

fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from(
        "timestamp,close,valid,mfi,rsi,bb_pct,macd_diff,centered_mfi,centered_rsi,centered_bb,centered_macd,f0_raw,f0,df0,c1,c2,f\n",
    );
    for row in trace {
        out.push_str(&format_timestamp(row.timestamp));
        out.push(',');
        out.push_str(&fmt_f64(row.close));
        out.push(',');
        out.push(if row.signal.is_some() { '1' } else { '0' });
        for (_, value) in &row.columns()[1..] {
            out.push(',');
            out.push_str(&fmt_opt(*value));
        }
        out.push('\n');
    }
    out
}

fn positions_csv(timestamps: &[DateTime<Utc>], positions: &[PositionRecord]) -> String {
    let mut out = String::from("timestamp,p,p_applied,dp\n");
    for (ts, p) in timestamps.iter().zip(positions) {
        out.push_str(&format!(
            "{},{},{},{}\n",
            format_timestamp(*ts),
            p.p,
            p.p_applied,
            p.dp
        ));
    }
    out
}

fn equity_csv(timestamps: &[DateTime<Utc>], equity: &[EquityRecord]) -> String {
    // equity rows start at the second valid bar
    let mut out = String::from("timestamp,r,R,v,v_bench,trades_cum\n");
    for (ts, e) in timestamps[1..].iter().zip(equity) {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            format_timestamp(*ts),
            fmt_f64(e.r),
            fmt_f64(e.r_strategy),
            fmt_f64(e.v),
            fmt_f64(e.v_bench),
            e.trades_cum
        ));
    }
    out
}

const NO_COST_DISCLAIMER: &str =
    "all figures computed without transaction costs; trading frictions would reduce net performance";

fn metrics_csv(reports: &[RegimeReport]) -> String {
    let mut out = String::from("period,end_v,cum_ret_pct,mdd_pct,trades_per_month\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.label,
            fmt_f64(r.end_v),
            fmt_f64(r.cum_ret_pct),
            fmt_f64(r.mdd_pct),
            fmt_f64(r.trades_per_month)
        ));
    }
    out
}

fn metrics_txt(reports: &[RegimeReport]) -> String {
    let mut out = format!("# {NO_COST_DISCLAIMER}\n");
    for r in reports {
        out.push_str(&format!(
            "\nperiod = {}\nend_v = {}\ncum_ret_pct = {}\nmdd_pct = {}\ntrades_per_month = {}\n",
            r.label,
            fmt_f64(r.end_v),
            fmt_f64(r.cum_ret_pct),
            fmt_f64(r.mdd_pct),
            fmt_f64(r.trades_per_month)
        ));
    }
    out
}

/// `run`: full pipeline, artifacts written to the output directory.
pub fn cmd_run(cfg: &RunConfig) -> Result<Vec<RegimeReport>> {
    cfg.validate()?;
    if cfg.out.is_empty() {
        return Err(Error::Config("output directory is required".into()));
    }
    let bars = read_input(cfg)?;
    let output = run_series(&bars, cfg)?;
    if output.equity.is_empty() {
        return Err(Error::Data(
            "fewer than 2 bars survive indicator warm-up; nothing to evaluate".into(),
        ));
    }
    let splits = cfg.split_datetimes()?;
    let reports = regime_report(&output.timestamps[1..], &output.equity, &splits)?;

    let mut writer = ArtifactWriter::new(Path::new(&cfg.out))?;
    writer.write("trace.csv", &trace_csv(&output.trace))?;
    writer.write("positions.csv", &positions_csv(&output.timestamps, &output.positions))?;
    writer.write("equity.csv", &equity_csv(&output.timestamps, &output.equity))?;
    writer.write("metrics.csv", &metrics_csv(&reports))?;
    writer.write("metrics.txt", &metrics_txt(&reports))?;
    writer.write("config.toml", &cfg.to_toml())?;
    writer.commit();
    Ok(reports)
}

/// `diagnose-shifts`: one equity column per forward shift, explicitly
/// labeled non-causal.
pub fn cmd_diagnose_shifts(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    if cfg.out.is_empty() {
        return Err(Error::Config("output directory is required".into()));
    }
    if cfg.shifts.is_empty() {
        return Err(Error::Config("diagnostic shifts must be non-empty".into()));
    }
    let bars = read_input(cfg)?;
    let output = run_series(&bars, cfg)?;
    if output.closes.len() < 2 {
        return Err(Error::Data(
            "fewer than 2 bars survive indicator warm-up; nothing to evaluate".into(),
        ));
    }
    let curves = forward_shift_diagnostic(&output.signal, &output.closes, &cfg.shifts, &cfg.decision)?;

    let mut out = String::from(
        "# NON-CAUSAL DIAGNOSTIC: column v_shift_k applies signal value s_{t+k} at time t\n",
    );
    out.push_str("timestamp");
    for (k, _) in &curves {
        out.push_str(&format!(",v_shift_{k}"));
    }
    out.push('\n');
    let rows = output.timestamps.len() - 1;
    for i in 0..rows {
        out.push_str(&format_timestamp(output.timestamps[i + 1]));
        for (_, curve) in &curves {
            out.push(',');
            if i < curve.len() {
                out.push_str(&fmt_f64(curve[i].v));
            }
        }
        out.push('\n');
    }

    let mut writer = ArtifactWriter::new(Path::new(&cfg.out))?;
    let path = writer.write("shifts.csv", &out)?;
    writer.commit();
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct AuditFailure {
    pub cut: usize,
    pub timestamp: DateTime<Utc>,
    pub column: &'static str,
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub cuts: Vec<usize>,
    pub failure: Option<AuditFailure>,
    pub warning: Option<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

fn bits_equal(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => x.to_bits() == y.to_bits(),
        _ => false,
    }
}

/// Prefix-invariance audit against an arbitrary trace producer. The
/// producer sees raw (unfiltered) bars; prefixes are sampled uniformly
/// with a seeded generator so audits are reproducible.
pub fn audit_causality_with<F>(
    bars: &[Bar],
    cuts: usize,
    seed: u64,
    runner: F,
) -> Result<AuditReport>
where
    F: Fn(&[Bar]) -> Result<Vec<TraceRow>>,
{
    if cuts == 0 {
        return Ok(AuditReport {
            cuts: Vec::new(),
            failure: None,
            warning: Some("0 cut points requested: vacuous PASS".into()),
        });
    }
    if bars.is_empty() {
        return Err(Error::Data("audit on empty bar series".into()));
    }
    let full = runner(bars)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cut_points: Vec<usize> = (0..cuts).map(|_| rng.gen_range(1..=bars.len())).collect();
    for &cut in &cut_points {
        let prefix = runner(&bars[..cut])?;
        if prefix.len() > full.len() {
            return Err(Error::Data("prefix trace longer than full trace".into()));
        }
        for (row, full_row) in prefix.iter().zip(&full) {
            if row.timestamp != full_row.timestamp {
                return Ok(AuditReport {
                    cuts: cut_points.clone(),
                    failure: Some(AuditFailure {
                        cut,
                        timestamp: row.timestamp,
                        column: "timestamp",
                    }),
                    warning: None,
                });
            }
            for ((name, a), (_, b)) in row.columns().iter().zip(full_row.columns().iter()) {
                if !bits_equal(*a, *b) {
                    return Ok(AuditReport {
                        cuts: cut_points.clone(),
                        failure: Some(AuditFailure {
                            cut,
                            timestamp: row.timestamp,
                            column: name,
                        }),
                        warning: None,
                    });
                }
            }
        }
    }
    Ok(AuditReport {
        cuts: cut_points,
        failure: None,
        warning: None,
    })
}

/// `audit`: prefix-invariance check of the real pipeline.
pub fn cmd_audit_causality(cfg: &RunConfig, cuts: usize, seed: u64) -> Result<AuditReport> {
    cfg.validate()?;
    let bars = read_input(cfg)?;
    let policy = cfg.session.policy()?;
    audit_causality_with(&bars, cuts, seed, |prefix| {
        compute_trace(&filter_session(prefix, &policy), cfg)
    })
}
