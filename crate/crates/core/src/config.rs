//! Run configuration: a flat TOML file with one section per subsystem.
//! Every key is optional except the input path and the session timezone,
//! which have no sensible silent defaults.

use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveTime, Utc, Weekday};
use serde::{Deserialize, Serialize};

use crate::decision_engine::DecisionConfig;
use crate::indicators::IndicatorConfig;
use crate::market_data::{ColumnMap, SessionPolicy};
use crate::signal_pipeline::PipelineConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(default)]
pub struct SessionConfig {
    /// IANA timezone identifier for "local time"; required, no default.
    pub timezone: String,
    pub open_day: String,
    pub open_time: String,
    pub close_day: String,
    pub close_time: String,
    pub drop_saturday: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            timezone: String::new(),
            open_day: "sunday".into(),
            open_time: "18:00".into(),
            close_day: "friday".into(),
            close_time: "18:00".into(),
            drop_saturday: true,
        }
    }
}

impl SessionConfig {
    pub fn policy(&self) -> Result<SessionPolicy> {
        if self.timezone.is_empty() {
            return Err(Error::Config(
                "session timezone is required (set [session] timezone)".into(),
            ));
        }
        let timezone = self
            .timezone
            .parse::<chrono_tz::Tz>()
            .map_err(|_| Error::Config(format!("unknown timezone '{}'", self.timezone)))?;
        let day = |raw: &str| -> Result<Weekday> {
            Weekday::from_str(raw).map_err(|_| Error::Config(format!("invalid weekday '{raw}'")))
        };
        let time = |raw: &str| -> Result<NaiveTime> {
            NaiveTime::parse_from_str(raw, "%H:%M")
                .or_else(|_| NaiveTime::parse_from_str(raw, "%H:%M:%S"))
                .map_err(|_| Error::Config(format!("invalid time of day '{raw}'")))
        };
        Ok(SessionPolicy {
            timezone,
            open_day: day(&self.open_day)?,
            open_time: time(&self.open_time)?,
            close_day: day(&self.close_day)?,
            close_time: time(&self.close_time)?,
            drop_saturday: self.drop_saturday,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default)]
pub struct RunConfig {
    pub input: String,
    pub out: String,
    /// regime split datetimes (ISO-8601, UTC when no offset given)
    pub splits: Vec<String>,
    /// forward-shift diagnostic shifts, in bars
    pub shifts: Vec<usize>,
    /// audit RNG seed
    pub seed: u64,
    /// number of random audit cut points
    pub cuts: usize,
    pub columns: ColumnMap,
    pub session: SessionConfig,
    pub indicators: IndicatorConfig,
    pub pipeline: PipelineConfig,
    pub decision: DecisionConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.is_empty() {
            return Err(Error::Config("input path is required".into()));
        }
        self.session.policy()?;
        self.indicators.validate()?;
        self.pipeline.validate()?;
        self.decision.validate()?;
        Ok(())
    }

    pub fn split_datetimes(&self) -> Result<Vec<DateTime<Utc>>> {
        self.splits.iter().map(|s| parse_datetime(s)).collect()
    }
}

/// Parse an ISO-8601 datetime; naive values are taken as UTC.
pub fn parse_datetime(raw: &str) -> Result<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Ok(dt.with_timezone(&Utc));
    }
    chrono::NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| chrono::NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S"))
        .map(|n| n.and_utc())
        .map_err(|_| Error::Config(format!("invalid datetime '{raw}'")))
}
