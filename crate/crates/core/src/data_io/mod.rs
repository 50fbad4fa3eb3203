//! Price and household-load ingestion, the retail tax transform, synthetic
//! fixtures and the run configuration file.

mod config;
mod loads;
mod prices;
mod synthetic;

pub use config::{
    BatterySection, Config, EconomicsSection, ForecasterSection, SimulationSection, TariffSection, TripsSection,
    TruncatedNormalSpec,
};
pub use loads::{load_household_csv, read_load_csv, write_load_csv, LoadDataset};
pub use prices::{apply_tax_transform, load_price_csv, write_price_csv, PriceUnit, RawPriceSeries, TaxTransform};
pub use synthetic::{generate_synthetic_load, generate_synthetic_prices, SyntheticLoad};

use std::path::PathBuf;

use chrono::{DateTime, Duration, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hours in the simulated year.
pub const HOURS_PER_YEAR: usize = 8760;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: unknown price unit in header {header:?} (expected €/MWh or €/kWh)")]
    UnknownUnit { path: PathBuf, header: String },
    #[error("{path}: duplicate timestamps {}", list(.timestamps))]
    Duplicates {
        path: PathBuf,
        timestamps: Vec<DateTime<Utc>>,
    },
    #[error("{path}: missing hours {}", list(.timestamps))]
    MissingHours {
        path: PathBuf,
        timestamps: Vec<DateTime<Utc>>,
    },
    #[error("{path}: negative load {value} kWh at {timestamp}")]
    NegativeLoad {
        path: PathBuf,
        timestamp: DateTime<Utc>,
        value: f64,
    },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("config: {0}")]
    Config(String),
}

fn list(ts: &[DateTime<Utc>]) -> String {
    const SHOWN: usize = 10;
    let mut s = ts
        .iter()
        .take(SHOWN)
        .map(|t| t.format("%Y-%m-%dT%H:%MZ").to_string())
        .collect::<Vec<_>>()
        .join(", ");
    if ts.len() > SHOWN {
        s.push_str(&format!(" and {} more", ts.len() - SHOWN));
    }
    s
}

/// An hourly series anchored at a UTC start time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlySeries {
    pub name: String,
    pub start: DateTime<Utc>,
    pub values: Vec<f64>,
}

impl HourlySeries {
    pub fn new(name: impl Into<String>, start: DateTime<Utc>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            start,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, hour: usize) -> DateTime<Utc> {
        self.start + Duration::hours(hour as i64)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Midnight, 1 January of `year`, UTC.
pub fn year_start(year: i32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0)
        .single()
        .expect("valid calendar date")
}

/// Accepts RFC 3339 and the common naive forms (taken as UTC).
pub(crate) fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ]
    .iter()
    .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
    .map(|n| n.and_utc())
}

pub(crate) fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Sorted rows checked for strict hourly spacing.
pub(crate) struct HourlyCheck {
    pub duplicates: Vec<DateTime<Utc>>,
    /// Runs of missing hours as (first missing, count).
    pub gaps: Vec<(DateTime<Utc>, usize)>,
    pub misaligned: Vec<DateTime<Utc>>,
}

pub(crate) fn check_hourly(ts: &[DateTime<Utc>]) -> HourlyCheck {
    let mut out = HourlyCheck {
        duplicates: Vec::new(),
        gaps: Vec::new(),
        misaligned: Vec::new(),
    };
    for pair in ts.windows(2) {
        let step = pair[1] - pair[0];
        if step == Duration::zero() {
            out.duplicates.push(pair[1]);
        } else if step.num_seconds() % 3600 != 0 || step < Duration::zero() {
            out.misaligned.push(pair[1]);
        } else if step > Duration::hours(1) {
            out.gaps
                .push((pair[0] + Duration::hours(1), (step.num_hours() - 1) as usize));
        }
    }
    out
}

/// Drops the extra day of a leap year so every year has 8760 hours.
pub(crate) fn trim_leap_year(values: &mut Vec<f64>, what: &str) {
    if values.len() == HOURS_PER_YEAR + 24 {
        log::warn!("{what}: 8784-hour year trimmed to the first 8760 hours");
        values.truncate(HOURS_PER_YEAR);
    }
}
