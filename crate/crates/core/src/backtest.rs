//! Realized returns, compounded equity, drawdown, and activity metrics
//! under delayed accounting, plus regime-split reporting and the
//! (deliberately non-causal) forward-shift diagnostic.

use chrono::{DateTime, Utc};

use crate::decision_engine::{run_decisions, DecisionConfig, PositionRecord};
use crate::{Error, Result};

/// Per-bar accounting row, aligned to bar t = 1..n-1 of the evaluated
/// series (the first bar has no return).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquityRecord {
    /// simple asset return r_t
    pub r: f64,
    /// realized strategy return p_{t-1} * r_t
    pub r_strategy: f64,
    /// compounded strategy equity, V_0 = 1
    pub v: f64,
    /// compounded buy-and-hold equity
    pub v_bench: f64,
    /// cumulative state changes up to and including t
    pub trades_cum: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub label: String,
    pub end_v: f64,
    pub cum_ret_pct: f64,
    pub mdd_pct: f64,
    pub trades_per_month: f64,
}

/// Mean Gregorian month, used as the Trades/mo divisor.
pub const DAYS_PER_MONTH: f64 = 30.44;

/// r_t = (P_t - P_{t-1}) / P_{t-1}, length n-1.
pub fn simple_returns(closes: &[f64]) -> Result<Vec<f64>> {
    if closes.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 prices for returns, got {}",
            closes.len()
        )));
    }
    Ok(closes.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect())
}

/// Compound realized returns under delayed accounting. `returns` holds
/// r_t for t = 1..n-1 and `positions` one record per bar t = 0..n-1; the
/// position applied to r_t is p_{t-1}, already carried in the record.
pub fn realized_equity(returns: &[f64], positions: &[PositionRecord]) -> Result<Vec<EquityRecord>> {
    if positions.len() != returns.len() + 1 {
        return Err(Error::Data(format!(
            "misaligned inputs: {} positions for {} returns (need returns + 1)",
            positions.len(),
            returns.len()
        )));
    }
    let mut records = Vec::with_capacity(returns.len());
    let mut v = 1.0;
    let mut v_bench = 1.0;
    let mut trades_cum = positions[0].dp as u64;
    for (i, r) in returns.iter().enumerate() {
        let pos = &positions[i + 1];
        trades_cum += pos.dp as u64;
        let r_strategy = pos.p_applied as f64 * r;
        v *= 1.0 + r_strategy;
        v_bench *= 1.0 + r;
        records.push(EquityRecord {
            r: *r,
            r_strategy,
            v,
            v_bench,
            trades_cum,
        });
    }
    Ok(records)
}

/// Largest peak-to-trough fractional decline: min over t of
/// v_t / max_{tau<=t} v_tau - 1. Zero for monotone curves.
pub fn max_drawdown(equity: &[f64]) -> Result<f64> {
    if equity.is_empty() {
        return Err(Error::Data("max_drawdown on empty equity curve".into()));
    }
    let mut peak = f64::MIN;
    let mut mdd = 0.0f64;
    for v in equity {
        if !(*v > 0.0) {
            return Err(Error::Data(format!("non-positive equity value {v}")));
        }
        peak = peak.max(*v);
        mdd = mdd.min(v / peak - 1.0);
    }
    Ok(mdd)
}

fn months_between(a: DateTime<Utc>, b: DateTime<Utc>) -> f64 {
    (b - a).num_seconds() as f64 / (DAYS_PER_MONTH * 86_400.0)
}

fn report_for(
    label: String,
    timestamps: &[DateTime<Utc>],
    records: &[EquityRecord],
    trades_before: u64,
) -> Result<RegimeReport> {
    // renormalize to v = 1 at the subperiod start
    let mut v = 1.0;
    let mut curve = Vec::with_capacity(records.len() + 1);
    curve.push(v);
    for rec in records {
        v *= 1.0 + rec.r_strategy;
        curve.push(v);
    }
    let end_v = v;
    let mdd = max_drawdown(&curve)?;
    let trades = records.last().unwrap().trades_cum - trades_before;
    let months = months_between(timestamps[0], *timestamps.last().unwrap());
    let trades_per_month = if months > 0.0 { trades as f64 / months } else { 0.0 };
    Ok(RegimeReport {
        label,
        end_v,
        cum_ret_pct: 100.0 * (end_v - 1.0),
        mdd_pct: 100.0 * mdd,
        trades_per_month,
    })
}

/// Split the accounting rows at the given datetimes and report each
/// subperiod independently, renormalized to V = 1 at its first bar.
/// A record belongs to the subperiod whose start is <= its timestamp.
pub fn regime_report(
    timestamps: &[DateTime<Utc>],
    records: &[EquityRecord],
    splits: &[DateTime<Utc>],
) -> Result<Vec<RegimeReport>> {
    if timestamps.len() != records.len() {
        return Err(Error::Data("timestamps and records length mismatch".into()));
    }
    if records.is_empty() {
        return Err(Error::Data("regime report on empty series".into()));
    }
    for pair in splits.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::Config("split points must strictly increase".into()));
        }
    }
    let first = timestamps[0];
    let last = *timestamps.last().unwrap();
    for s in splits {
        if *s <= first || *s > last {
            return Err(Error::Config(format!(
                "split {s} outside data range ({first}, {last}]"
            )));
        }
    }
    let mut reports = Vec::with_capacity(splits.len() + 1);
    let mut start_idx = 0usize;
    let mut trades_before = 0u64;
    let mut boundaries: Vec<Option<DateTime<Utc>>> = splits.iter().map(|s| Some(*s)).collect();
    boundaries.push(None); // final subperiod runs to the end
    for boundary in boundaries {
        let end_idx = match boundary {
            Some(b) => start_idx + timestamps[start_idx..].partition_point(|t| *t < b),
            None => timestamps.len(),
        };
        if end_idx == start_idx {
            return Err(Error::Config("split produces an empty subperiod".into()));
        }
        let ts = &timestamps[start_idx..end_idx];
        let recs = &records[start_idx..end_idx];
        let label = format!(
            "{}..{}",
            ts[0].format("%Y-%m-%dT%H:%M:%SZ"),
            ts[ts.len() - 1].format("%Y-%m-%dT%H:%M:%SZ")
        );
        reports.push(report_for(label, ts, recs, trades_before)?);
        trades_before = recs.last().unwrap().trades_cum;
        start_idx = end_idx;
    }
    Ok(reports)
}

/// Evaluation-only, non-causal: for each shift k the decision rule sees
/// s_{t+k} at time t (the last k bars are dropped) and standard delayed
/// accounting is applied.
pub fn forward_shift_diagnostic(
    signal: &[f64],
    closes: &[f64],
    shifts: &[usize],
    cfg: &DecisionConfig,
) -> Result<Vec<(usize, Vec<EquityRecord>)>> {
    if signal.len() != closes.len() {
        return Err(Error::Data("signal and closes length mismatch".into()));
    }
    let mut curves = Vec::with_capacity(shifts.len());
    for &k in shifts {
        if k >= signal.len() {
            return Err(Error::Data(format!(
                "shift {k} >= series length {}",
                signal.len()
            )));
        }
        let shifted = &signal[k..];
        let truncated = &closes[..closes.len() - k];
        let positions = run_decisions(shifted, cfg);
        let returns = simple_returns(truncated)?;
        curves.push((k, realized_equity(&returns, &positions)?));
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn ts(minute: i64) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2023, 1, 2, 0, 0, 0).unwrap() + chrono::Duration::minutes(minute)
    }

    /// O(n^2) drawdown oracle over all peak/trough index pairs.
    fn mdd_oracle(equity: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..equity.len() {
            for j in i..equity.len() {
                worst = worst.min(equity[j] / equity[i] - 1.0);
            }
        }
        worst
    }

    #[test]
    fn returns_definition() {
        assert_eq!(simple_returns(&[100.0, 101.0]).unwrap(), vec![0.01]);
        let r = simple_returns(&[1.10, 1.089]).unwrap();
        assert!((r[0] - (-0.01)).abs() < 1e-12);
        assert!(simple_returns(&[100.0, 100.0, 100.0]).unwrap().iter().all(|r| *r == 0.0));
        assert!(simple_returns(&[100.0]).is_err());
    }

    fn positions_from(signal: &[f64], theta: f64) -> Vec<PositionRecord> {
        run_decisions(signal, &DecisionConfig { theta })
    }

    #[test]
    fn flat_strategy_stays_at_one() {
        let closes = [100.0, 101.0, 99.0, 102.0];
        let returns = simple_returns(&closes).unwrap();
        let positions = positions_from(&[0.0, 0.0, 0.0, 0.0], 0.06);
        let eq = realized_equity(&returns, &positions).unwrap();
        assert!(eq.iter().all(|e| e.v == 1.0));
        assert!((eq.last().unwrap().v_bench - 1.02).abs() < 1e-12);
    }

    #[test]
    fn always_long_tracks_benchmark() {
        let closes = [100.0, 101.0, 99.0, 102.0, 103.5];
        let returns = simple_returns(&closes).unwrap();
        // p = 1 from the first bar: the applied position is already 1 for
        // every return
        let positions: Vec<PositionRecord> = (0..closes.len())
            .map(|i| PositionRecord {
                p: 1,
                p_applied: if i == 0 { 0 } else { 1 },
                dp: u8::from(i == 0),
            })
            .collect();
        let eq = realized_equity(&returns, &positions).unwrap();
        for e in &eq {
            assert_eq!(e.v.to_bits(), e.v_bench.to_bits());
        }
    }

    #[test]
    fn five_bar_mixed_fixture() {
        // spreadsheet-style recomputation of the aligned recursion
        let closes = [100.0, 102.0, 101.0, 103.0, 104.0];
        let returns = simple_returns(&closes).unwrap();
        let positions = positions_from(&[0.07, 0.0, -0.07, 0.07, 0.0], 0.06);
        // p          = [1, 1, 0, 1, 1]
        // p_applied  = [0, 1, 1, 0, 1]
        let eq = realized_equity(&returns, &positions).unwrap();
        let expected_v = [
            1.0 * (1.0 + 0.02),
            1.02 * (1.0 + (101.0 - 102.0) / 102.0),
            1.02 * (1.0 + (101.0 - 102.0) / 102.0), // flat over bar 3
            1.02 * (1.0 + (101.0 - 102.0) / 102.0) * (1.0 + (104.0 - 103.0) / 103.0),
        ];
        for (e, v) in eq.iter().zip(&expected_v) {
            assert!((e.v - v).abs() < 1e-12, "{eq:?}");
        }
        assert_eq!(eq.last().unwrap().trades_cum, 3);
    }

    #[test]
    fn misaligned_inputs_rejected() {
        let positions = positions_from(&[0.0, 0.0], 0.06);
        assert!(realized_equity(&[0.01, 0.02], &positions).is_err());
    }

    #[test]
    fn mdd_monotone_is_zero() {
        assert_eq!(max_drawdown(&[1.0, 1.1, 1.2, 1.3]).unwrap(), 0.0);
    }

    #[test]
    fn mdd_fixtures_match_bruteforce() {
        let a = [1.0, 1.1, 0.99, 1.2];
        let got = max_drawdown(&a).unwrap();
        assert!((got - (0.99 / 1.1 - 1.0)).abs() < 1e-15);
        assert!((got - mdd_oracle(&a)).abs() < 1e-15);

        let b = [1.0, 0.5, 1.5, 0.9];
        let got = max_drawdown(&b).unwrap();
        assert!((got - (-0.5)).abs() < 1e-15);
        assert!((got - mdd_oracle(&b)).abs() < 1e-15);
    }

    #[test]
    fn mdd_empty_is_error() {
        assert!(max_drawdown(&[]).is_err());
    }

    proptest! {
        #[test]
        fn mdd_matches_bruteforce(equity in prop::collection::vec(0.1f64..10.0, 1..60)) {
            let got = max_drawdown(&equity).unwrap();
            let expected = mdd_oracle(&equity);
            prop_assert!((got - expected).abs() < 1e-12);
            prop_assert!(got <= 0.0 && got >= -1.0);
        }

        #[test]
        fn mdd_scale_invariant(equity in prop::collection::vec(0.1f64..10.0, 1..60), scale in 0.5f64..20.0) {
            let scaled: Vec<f64> = equity.iter().map(|v| v * scale).collect();
            let a = max_drawdown(&equity).unwrap();
            let b = max_drawdown(&scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn equity_recursion_identity(
            returns in prop::collection::vec(-0.05f64..0.05, 2..100),
            signal_seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(signal_seed);
            let signal: Vec<f64> = (0..returns.len() + 1).map(|_| rng.gen_range(-0.2..0.2)).collect();
            let positions = positions_from(&signal, 0.06);
            let eq = realized_equity(&returns, &positions).unwrap();
            let mut prev_v = 1.0;
            for e in &eq {
                prop_assert!((e.v / prev_v - 1.0 - e.r_strategy).abs() < 1e-12);
                prev_v = e.v;
            }
        }
    }

    fn fixture_records(n: usize) -> (Vec<DateTime<Utc>>, Vec<EquityRecord>) {
        // deterministic pseudo-random walk evaluated through the real chain
        let closes: Vec<f64> = (0..=n)
            .map(|i| 100.0 * (1.0 + 0.001 * ((i as f64 * 0.7).sin() + 0.3 * (i as f64 * 0.13).cos())))
            .collect();
        let signal: Vec<f64> = (0..=n).map(|i| 0.2 * (i as f64 * 0.37).sin()).collect();
        let returns = simple_returns(&closes).unwrap();
        let positions = positions_from(&signal, 0.06);
        let records = realized_equity(&returns, &positions).unwrap();
        let timestamps: Vec<DateTime<Utc>> = (1..=n).map(|i| ts(i as i64)).collect();
        (timestamps, records)
    }

    #[test]
    fn no_splits_single_report() {
        let (timestamps, records) = fixture_records(50);
        let reports = regime_report(&timestamps, &records, &[]).unwrap();
        assert_eq!(reports.len(), 1);
        assert!((reports[0].end_v - records.last().unwrap().v).abs() < 1e-12);
        assert!((reports[0].cum_ret_pct - 100.0 * (reports[0].end_v - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn split_at_first_timestamp_rejected() {
        let (timestamps, records) = fixture_records(50);
        assert!(regime_report(&timestamps, &records, &[timestamps[0]]).is_err());
    }

    #[test]
    fn split_outside_range_rejected() {
        let (timestamps, records) = fixture_records(50);
        let late = *timestamps.last().unwrap() + chrono::Duration::days(1);
        assert!(regime_report(&timestamps, &records, &[late]).is_err());
    }

    #[test]
    fn two_regime_fixture_matches_independent_recompute() {
        let (timestamps, records) = fixture_records(120);
        let split = timestamps[60];
        let reports = regime_report(&timestamps, &records, &[split]).unwrap();
        assert_eq!(reports.len(), 2);

        // recompute each subperiod directly from the raw strategy returns
        for (report, range) in reports.iter().zip([0..60usize, 60..records.len()]) {
            let sub = &records[range.clone()];
            let end_v: f64 = sub.iter().map(|e| 1.0 + e.r_strategy).product();
            assert!((report.end_v - end_v).abs() < 1e-12);
            let mut curve = vec![1.0];
            let mut v = 1.0;
            for e in sub {
                v *= 1.0 + e.r_strategy;
                curve.push(v);
            }
            assert!((report.mdd_pct - 100.0 * mdd_oracle(&curve)).abs() < 1e-9);
            let trades = sub.last().unwrap().trades_cum
                - if range.start == 0 { 0 } else { records[range.start - 1].trades_cum };
            let months = (timestamps[range.end - 1] - timestamps[range.start]).num_seconds()
                as f64
                / (30.44 * 86_400.0);
            assert!((report.trades_per_month - trades as f64 / months).abs() < 1e-9);
        }

        // regime additivity
        let full = regime_report(&timestamps, &records, &[]).unwrap();
        assert!((full[0].end_v - reports[0].end_v * reports[1].end_v).abs() < 1e-12);
    }

    #[test]
    fn shift_zero_is_identity() {
        let closes: Vec<f64> = (0..80).map(|i| 100.0 + (i as f64 * 0.3).sin()).collect();
        let signal: Vec<f64> = (0..80).map(|i| 0.1 * (i as f64 * 0.2).cos()).collect();
        let cfg = DecisionConfig { theta: 0.06 };
        let curves = forward_shift_diagnostic(&signal, &closes, &[0], &cfg).unwrap();
        let positions = run_decisions(&signal, &cfg);
        let expected = realized_equity(&simple_returns(&closes).unwrap(), &positions).unwrap();
        assert_eq!(curves[0].1, expected);
    }

    #[test]
    fn constant_signal_shift_invariant() {
        let closes: Vec<f64> = (0..60).map(|i| 100.0 + (i as f64 * 0.3).sin()).collect();
        let signal = vec![0.07; 60];
        let cfg = DecisionConfig { theta: 0.06 };
        let curves = forward_shift_diagnostic(&signal, &closes, &[0, 1, 3], &cfg).unwrap();
        let base = &curves[0].1;
        for (k, curve) in &curves[1..] {
            assert_eq!(&base[..curve.len()], &curve[..], "shift {k}");
        }
    }

    #[test]
    fn oversized_shift_rejected() {
        let cfg = DecisionConfig { theta: 0.06 };
        assert!(forward_shift_diagnostic(&[0.0; 5], &[1.0; 5], &[5], &cfg).is_err());
    }
}
