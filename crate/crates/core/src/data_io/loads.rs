use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::{check_hourly, format_timestamp, parse_timestamp, trim_leap_year, DataError, HourlySeries};

/// Household load series in concatenation order. The last series is held
/// out for simulation, the others train the forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadDataset {
    pub series: Vec<HourlySeries>,
    /// Applied to the test series only; predictors see unscaled history.
    pub multiplier: f64,
}

impl LoadDataset {
    pub fn new(series: Vec<HourlySeries>, multiplier: f64) -> Result<Self, DataError> {
        if series.len() < 2 {
            return Err(DataError::InvalidDataset(format!(
                "need at least two load series for a train/test split, got {}",
                series.len()
            )));
        }
        if !(multiplier > 0.0 && multiplier.is_finite()) {
            return Err(DataError::InvalidDataset(format!(
                "load multiplier must be positive, got {multiplier}"
            )));
        }
        for s in &series {
            if s.values.iter().any(|v| !(*v >= 0.0)) {
                return Err(DataError::InvalidDataset(format!(
                    "series {} has negative or non-finite loads",
                    s.name
                )));
            }
        }
        Ok(Self { series, multiplier })
    }

    pub fn with_multiplier(mut self, multiplier: f64) -> Result<Self, DataError> {
        self.multiplier = multiplier;
        Self::new(self.series, multiplier)
    }

    pub fn train_series(&self) -> &[HourlySeries] {
        &self.series[..self.series.len() - 1]
    }

    /// Held-out series, scaled by the multiplier.
    pub fn test_series(&self) -> HourlySeries {
        self.series[self.series.len() - 1].scaled(self.multiplier)
    }

    /// Concatenated training values.
    pub fn train(&self) -> Vec<f64> {
        self.train_series()
            .iter()
            .flat_map(|s| s.values.iter().copied())
            .collect()
    }

    /// Hour indices of the train and test parts in the concatenation.
    pub fn split_ranges(&self) -> (Range<usize>, Range<usize>) {
        let train_len: usize = self.train_series().iter().map(HourlySeries::len).sum();
        let total = train_len + self.series[self.series.len() - 1].len();
        (0..train_len, train_len..total)
    }
}

/// Reads `timestamp,<kWh column>` rows. A single missing hour is filled by
/// linear interpolation; two or more consecutive missing hours reject the
/// file.
pub fn read_load_csv(path: &Path) -> Result<HourlySeries, DataError> {
    let csv_err = |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let mut rows: Vec<(DateTime<Utc>, f64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let parse = |message: String| DataError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let ts = record.get(0).unwrap_or_default();
        let t = parse_timestamp(ts).ok_or_else(|| parse(format!("bad timestamp {ts:?}")))?;
        let raw = record.get(1).unwrap_or_default();
        let v: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse(format!("bad load {raw:?}")))?;
        if v < 0.0 {
            return Err(DataError::NegativeLoad {
                path: path.to_path_buf(),
                timestamp: t,
                value: v,
            });
        }
        rows.push((t, v));
    }
    if rows.is_empty() {
        return Err(DataError::InvalidDataset(format!("{}: no load rows", path.display())));
    }
    rows.sort_by_key(|r| r.0);
    let ts: Vec<_> = rows.iter().map(|r| r.0).collect();
    let check = check_hourly(&ts);
    if !check.duplicates.is_empty() {
        return Err(DataError::Duplicates {
            path: path.to_path_buf(),
            timestamps: check.duplicates,
        });
    }
    let long: Vec<_> = check
        .gaps
        .iter()
        .filter(|(_, n)| *n >= 2)
        .flat_map(|(t, n)| (0..*n).map(move |k| *t + Duration::hours(k as i64)))
        .chain(check.misaligned)
        .collect();
    if !long.is_empty() {
        return Err(DataError::MissingHours {
            path: path.to_path_buf(),
            timestamps: long,
        });
    }
    let mut values = Vec::with_capacity(rows.len() + check.gaps.len());
    for (i, (t, v)) in rows.iter().enumerate() {
        if i > 0 && *t - rows[i - 1].0 == Duration::hours(2) {
            log::warn!(
                "{}: interpolated missing hour {}",
                path.display(),
                format_timestamp(&(*t - Duration::hours(1)))
            );
            values.push(0.5 * (rows[i - 1].1 + v));
        }
        values.push(*v);
    }
    trim_leap_year(&mut values, &path.display().to_string());
    let name = path
        .file_stem()
        .map_or_else(|| "load".to_string(), |s| s.to_string_lossy().into_owned());
    Ok(HourlySeries::new(name, ts[0], values))
}

/// Reads several load files in the given order.
pub fn load_household_csv<P: AsRef<Path>>(paths: &[P], multiplier: f64) -> Result<LoadDataset, DataError> {
    let series = paths
        .iter()
        .map(|p| read_load_csv(p.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    LoadDataset::new(series, multiplier)
}

pub fn write_load_csv(path: &Path, series: &HourlySeries) -> Result<(), DataError> {
    let csv_err = |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["timestamp", "load_kwh"]).map_err(csv_err)?;
    for (h, v) in series.values.iter().enumerate() {
        w.write_record([format_timestamp(&series.timestamp(h)), v.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::year_start;

    fn series(name: &str, n: usize, v: f64) -> HourlySeries {
        HourlySeries::new(name, year_start(2022), vec![v; n])
    }

    #[test]
    fn split_assigns_last_series_to_test() {
        let ds = LoadDataset::new((0..5).map(|i| series(&format!("a{i}"), 8760, 0.9)).collect(), 1.0).unwrap();
        assert_eq!(ds.train().len(), 4 * 8760);
        assert_eq!(ds.test_series().len(), 8760);
        let (train, test) = ds.split_ranges();
        assert_eq!(train.end, test.start);
        assert!(train.clone().all(|h| !test.contains(&h)));
    }

    #[test]
    fn multiplier_scales_test_year() {
        let ds = LoadDataset::new(vec![series("a", 48, 0.5), series("b", 48, 0.9)], 4.0).unwrap();
        assert!(ds.test_series().values.iter().all(|v| (*v - 3.6).abs() < 1e-12));
        assert!(ds.train().iter().all(|v| *v == 0.5));
        let daily: f64 = ds.series[1].values[..24].iter().sum();
        assert!((daily - 21.6).abs() < 1e-9);
    }

    #[test]
    fn single_series_rejected() {
        assert!(LoadDataset::new(vec![series("a", 24, 1.0)], 1.0).is_err());
        assert!(LoadDataset::new(vec![series("a", 24, 1.0), series("b", 24, -1.0)], 1.0).is_err());
    }
}
