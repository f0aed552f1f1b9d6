//! OHLCV ingestion and the active-hours session filter.
//!
//! Bars are parsed from CSV with a configurable column mapping, validated,
//! and then passed through a weekend session policy before any indicator
//! sees them. Bars that survive the filter are treated as adjacent by all
//! downstream computations.

use std::io::Read;

use chrono::{DateTime, NaiveDateTime, NaiveTime, Timelike, Utc, Weekday};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One OHLCV observation. Timestamps are held in UTC; the session policy
/// converts to its own timezone when judging a bar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    pub timestamp: DateTime<Utc>,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Bar {
    fn validate(&self, line: u64) -> Result<()> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::Parse {
                line,
                message: format!("non-positive price at line {line}"),
            });
        }
        if !self.volume.is_finite() || self.volume < 0.0 {
            return Err(Error::Parse {
                line,
                message: format!("negative volume at line {line}"),
            });
        }
        if self.low > self.open.min(self.close) || self.high < self.open.max(self.close) {
            return Err(Error::Parse {
                line,
                message: format!("high/low outside open/close range at line {line}"),
            });
        }
        Ok(())
    }
}

/// CSV column names for the six bar fields.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(default)]
pub struct ColumnMap {
    pub timestamp: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
    pub volume: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            open: "open".into(),
            high: "high".into(),
            low: "low".into(),
            close: "close".into(),
            volume: "volume".into(),
        }
    }
}

/// Weekend trading-session policy. A bar is kept unless it falls on the
/// dropped day, before the weekly open, or after the weekly close, all in
/// the policy's local timezone. Boundary bars at exactly the open/close
/// time are kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionPolicy {
    pub timezone: Tz,
    pub open_day: Weekday,
    pub open_time: NaiveTime,
    pub close_day: Weekday,
    pub close_time: NaiveTime,
    pub drop_saturday: bool,
}

impl SessionPolicy {
    pub fn new(timezone: Tz) -> Self {
        Self {
            timezone,
            open_day: Weekday::Sun,
            open_time: NaiveTime::from_hms_opt(18, 0, 0).unwrap(),
            close_day: Weekday::Fri,
            close_time: NaiveTime::from_hms_opt(18, 0, 0).unwrap(),
            drop_saturday: true,
        }
    }
}

/// True iff the bar falls inside active hours under `policy`.
/// Stateless: the verdict depends only on the bar's own timestamp.
pub fn session_keep(bar: &Bar, policy: &SessionPolicy) -> bool {
    let local = bar.timestamp.with_timezone(&policy.timezone);
    let weekday = chrono::Datelike::weekday(&local);
    let time = local.time();
    if policy.drop_saturday && weekday == Weekday::Sat {
        return false;
    }
    if weekday == policy.open_day && time < policy.open_time {
        return false;
    }
    if weekday == policy.close_day && time > policy.close_time {
        return false;
    }
    true
}

/// Apply the session filter, keeping input order.
pub fn filter_session(bars: &[Bar], policy: &SessionPolicy) -> Vec<Bar> {
    bars.iter()
        .copied()
        .filter(|b| session_keep(b, policy))
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum TimestampFormat {
    Iso8601,
    EpochMillis,
}

fn parse_timestamp(raw: &str, format: TimestampFormat, line: u64) -> Result<DateTime<Utc>> {
    let bad = |message: String| Error::Parse { line, message };
    match format {
        TimestampFormat::EpochMillis => {
            let ms: i64 = raw
                .parse()
                .map_err(|_| bad(format!("invalid epoch milliseconds '{raw}'")))?;
            DateTime::<Utc>::from_timestamp_millis(ms)
                .ok_or_else(|| bad(format!("epoch milliseconds out of range '{raw}'")))
        }
        TimestampFormat::Iso8601 => {
            if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
                return Ok(dt.with_timezone(&Utc));
            }
            // No offset: interpreted as UTC.
            NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S")
                .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S"))
                .map(|n| n.and_utc())
                .map_err(|_| bad(format!("unknown timestamp format '{raw}'")))
        }
    }
}

fn detect_format(raw: &str) -> TimestampFormat {
    if raw.chars().all(|c| c.is_ascii_digit()) && !raw.is_empty() {
        TimestampFormat::EpochMillis
    } else {
        TimestampFormat::Iso8601
    }
}

/// Parse OHLCV bars from CSV. The timestamp format (ISO-8601 or epoch
/// milliseconds) is auto-detected from the first data row and assumed
/// uniform within the file. Timestamps must strictly increase.
pub fn parse_bars<R: Read>(source: R, columns: &ColumnMap) -> Result<Vec<Bar>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Config(format!("column '{name}' not found in CSV header"))
        })
    };
    let idx_ts = col(&columns.timestamp)?;
    let idx_open = col(&columns.open)?;
    let idx_high = col(&columns.high)?;
    let idx_low = col(&columns.low)?;
    let idx_close = col(&columns.close)?;
    let idx_volume = col(&columns.volume)?;

    let mut bars: Vec<Bar> = Vec::new();
    let mut format: Option<TimestampFormat> = None;
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2; // 1-based, after the header
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |idx: usize| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::Parse {
                line,
                message: format!("row has only {} fields", record.len()),
            })
        };
        let number = |idx: usize| -> Result<f64> {
            let raw = field(idx)?;
            raw.parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid number '{raw}'"),
            })
        };
        let raw_ts = field(idx_ts)?;
        let fmt = *format.get_or_insert_with(|| detect_format(raw_ts));
        let timestamp = parse_timestamp(raw_ts, fmt, line)?;
        let bar = Bar {
            timestamp,
            open: number(idx_open)?,
            high: number(idx_high)?,
            low: number(idx_low)?,
            close: number(idx_close)?,
            volume: number(idx_volume)?,
        };
        bar.validate(line)?;
        if let Some(prev) = bars.last() {
            if bar.timestamp == prev.timestamp {
                return Err(Error::Data(format!(
                    "duplicate timestamp {} at line {line}",
                    bar.timestamp
                )));
            }
            if bar.timestamp < prev.timestamp {
                return Err(Error::NonMonotone {
                    prev: prev.timestamp.to_rfc3339(),
                    next: bar.timestamp.to_rfc3339(),
                });
            }
        }
        bars.push(bar);
    }
    Ok(bars)
}

/// Format a UTC timestamp the way the trace/equity CSVs expect it.
pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    if ts.second() == 0 && ts.nanosecond() == 0 {
        ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
    } else {
        ts.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    }
}
