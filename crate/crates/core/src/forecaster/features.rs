use chrono::{DateTime, Datelike, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::ForecastError;
use crate::data_io::HourlySeries;

/// Calendar fields of one hour: day of year (1–365), day of week (0 =
/// Monday) and hour of day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalendarFeatures {
    pub day_of_year: f64,
    pub day_of_week: f64,
    pub hour_of_day: f64,
}

impl CalendarFeatures {
    pub fn at(t: DateTime<Utc>) -> Self {
        Self {
            // the 366th day of a leap year shares the last slot
            day_of_year: t.ordinal().min(365) as f64,
            day_of_week: t.weekday().num_days_from_monday() as f64,
            hour_of_day: t.hour() as f64,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.day_of_year, self.day_of_week, self.hour_of_day]
    }
}

/// Lagged loads t−(L−1)…t and the calendar fields of each lag hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// kWh, oldest first.
    pub lags: Vec<f64>,
    pub context: Vec<CalendarFeatures>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    pub fn validate(&self, lags: usize) -> Result<(), ForecastError> {
        if self.lags.len() != lags || self.context.len() != lags {
            return Err(ForecastError::Shape(format!(
                "expected {lags} lags with context, got {} and {}",
                self.lags.len(),
                self.context.len()
            )));
        }
        if self.lags.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(ForecastError::Shape("lag loads must be finite and ≥ 0".into()));
        }
        for c in &self.context {
            if !(1.0..=365.0).contains(&c.day_of_year)
                || !(0.0..=6.0).contains(&c.day_of_week)
                || !(0.0..=23.0).contains(&c.hour_of_day)
            {
                return Err(ForecastError::Shape(format!("calendar field out of range: {c:?}")));
            }
        }
        Ok(())
    }
}

/// Features ending at hour `t` of `series` (lags t−(lags−1)…t).
pub fn extract_features(series: &HourlySeries, t: usize, lags: usize) -> Result<FeatureVector, ForecastError> {
    if t + 1 < lags || t >= series.len() {
        return Err(ForecastError::InsufficientHistory {
            needed: lags,
            hour: t,
            available: series.len(),
        });
    }
    let first = t + 1 - lags;
    Ok(FeatureVector {
        lags: series.values[first..=t].to_vec(),
        context: (first..=t).map(|h| CalendarFeatures::at(series.timestamp(h))).collect(),
    })
}

/// Min-max bounds of one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Self {
        let (min, max) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Self { min, max }
    }

    fn span(&self) -> f64 {
        let s = self.max - self.min;
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.min) / self.span()
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.span() + self.min
    }
}

/// Per-feature min-max scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub load: MinMax,
    pub day_of_year: MinMax,
    pub day_of_week: MinMax,
    pub hour_of_day: MinMax,
}

impl Normalization {
    /// Load bounds come from the data. Calendar fields use their full
    /// domains so that dates outside the training span stay in range.
    pub fn fit(train: &[HourlySeries]) -> Self {
        Self {
            load: MinMax::fit(train.iter().flat_map(|s| s.values.iter().copied())),
            day_of_year: MinMax { min: 1.0, max: 365.0 },
            day_of_week: MinMax { min: 0.0, max: 6.0 },
            hour_of_day: MinMax { min: 0.0, max: 23.0 },
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.load, self.day_of_year, self.day_of_week, self.hour_of_day]
            .iter()
            .all(|m| m.min.is_finite() && m.max.is_finite())
    }

    /// Normalized context block, lag-hour major.
    pub fn context(&self, context: &[CalendarFeatures]) -> Vec<f64> {
        context
            .iter()
            .flat_map(|c| {
                [
                    self.day_of_year.normalize(c.day_of_year),
                    self.day_of_week.normalize(c.day_of_week),
                    self.hour_of_day.normalize(c.hour_of_day),
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::year_start;
    use chrono::Duration;

    #[test]
    fn constant_series_lags() {
        let s = HourlySeries::new("c", year_start(2022), vec![0.7; 100]);
        let f = extract_features(&s, 50, 24).unwrap();
        assert!(f.lags.iter().all(|v| *v == 0.7));
        assert!(f.validate(24).is_ok());
        assert!(extract_features(&s, 22, 24).is_err());
    }

    #[test]
    fn calendar_wraps_at_new_year() {
        // 23 hours of 31 Dec then midnight 1 Jan as the last lag
        let start = year_start(2023) - Duration::hours(23);
        let s = HourlySeries::new("w", start, vec![1.0; 30]);
        let f = extract_features(&s, 23, 24).unwrap();
        let hod: Vec<f64> = f.context.iter().map(|c| c.hour_of_day).collect();
        let expected: Vec<f64> = (1..=23).chain([0]).map(f64::from).collect();
        assert_eq!(hod, expected);
        assert_eq!(f.context[0].day_of_year, 365.0);
        assert_eq!(f.context[23].day_of_year, 1.0);
    }

    #[test]
    fn periodic_series_differs_only_in_calendar() {
        let v: Vec<f64> = (0..200).map(|h| ((h % 24) as f64).sin() + 2.0).collect();
        let s = HourlySeries::new("p", year_start(2022), v);
        let a = extract_features(&s, 60, 24).unwrap();
        let b = extract_features(&s, 84, 24).unwrap();
        assert_eq!(a.lags, b.lags);
        assert_ne!(a.context, b.context);
        let hod = |f: &FeatureVector| f.context.iter().map(|c| c.hour_of_day).collect::<Vec<_>>();
        assert_eq!(hod(&a), hod(&b));
    }

    #[test]
    fn normalization_round_trip() {
        let m = MinMax { min: 0.2, max: 3.7 };
        for v in [0.2, 1.0, 2.5, 3.7] {
            assert!((m.denormalize(m.normalize(v)) - v).abs() < 1e-12);
        }
        let flat = MinMax { min: 1.0, max: 1.0 };
        assert_eq!(flat.normalize(1.0), 0.0);
    }
}
