use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{check_hourly, format_timestamp, parse_timestamp, trim_leap_year, DataError};
use crate::optimizer::{OptimizerError, TariffSeries};

/// Hourly day-ahead prices in €/kWh. Values may be negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPriceSeries {
    pub start: DateTime<Utc>,
    pub prices: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceUnit {
    EurPerMwh,
    EurPerKwh,
}

impl PriceUnit {
    /// Reads the unit from a column header such as `price_eur_per_mwh` or
    /// `Price [EUR/MWh]`.
    pub fn from_header(header: &str) -> Option<Self> {
        let h: String = header
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        if h.ends_with("mwh") {
            Some(Self::EurPerMwh)
        } else if h.ends_with("kwh") {
            Some(Self::EurPerKwh)
        } else {
            None
        }
    }

    pub fn to_eur_per_kwh(self, v: f64) -> f64 {
        match self {
            Self::EurPerMwh => v / 1000.0,
            Self::EurPerKwh => v,
        }
    }
}

/// Retail price from the day-ahead price: `p·multiplier + adder`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaxTransform {
    pub multiplier: f64,
    /// €/kWh
    pub adder: f64,
}

impl Default for TaxTransform {
    fn default() -> Self {
        Self {
            multiplier: 1.25,
            adder: 0.006,
        }
    }
}

impl TaxTransform {
    pub fn apply(&self, p: f64) -> f64 {
        p * self.multiplier + self.adder
    }
}

pub fn apply_tax_transform(
    raw: &RawPriceSeries,
    tax: &TaxTransform,
    price_ratio: f64,
) -> Result<TariffSeries, OptimizerError> {
    TariffSeries::new(raw.prices.iter().map(|p| tax.apply(*p)).collect(), price_ratio)
}

/// Reads `timestamp,<price column>` rows. The unit comes from the price
/// column header; €/MWh is converted to €/kWh.
pub fn load_price_csv(path: &Path) -> Result<RawPriceSeries, DataError> {
    let csv_err = |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    let price_header = header.get(1).unwrap_or_default().to_string();
    let unit = PriceUnit::from_header(&price_header).ok_or_else(|| DataError::UnknownUnit {
        path: path.to_path_buf(),
        header: price_header.clone(),
    })?;
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
            .ok_or_else(|| parse(format!("bad price {raw:?}")))?;
        rows.push((t, unit.to_eur_per_kwh(v)));
    }
    if rows.is_empty() {
        return Err(DataError::InvalidDataset(format!("{}: no price rows", path.display())));
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
    let mut missing: Vec<_> = check
        .gaps
        .iter()
        .flat_map(|(t, n)| (0..*n).map(move |k| *t + chrono::Duration::hours(k as i64)))
        .collect();
    missing.extend(check.misaligned);
    if !missing.is_empty() {
        return Err(DataError::MissingHours {
            path: path.to_path_buf(),
            timestamps: missing,
        });
    }
    let mut prices: Vec<f64> = rows.iter().map(|r| r.1).collect();
    trim_leap_year(&mut prices, &path.display().to_string());
    Ok(RawPriceSeries { start: ts[0], prices })
}

/// Writes €/kWh with shortest round-trip formatting.
pub fn write_price_csv(path: &Path, raw: &RawPriceSeries) -> Result<(), DataError> {
    let csv_err = |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["timestamp", "price_eur_per_kwh"]).map_err(csv_err)?;
    for (h, p) in raw.prices.iter().enumerate() {
        let t = raw.start + chrono::Duration::hours(h as i64);
        w.write_record([format_timestamp(&t), p.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tax_transform_examples() {
        let t = TaxTransform::default();
        assert!((t.apply(0.0) - 0.006).abs() < 1e-15);
        assert!((t.apply(0.1) - 0.131).abs() < 1e-15);
        assert!((t.apply(-0.02) + 0.019).abs() < 1e-15);
    }

    #[test]
    fn unit_headers() {
        assert_eq!(PriceUnit::from_header("price_eur_per_mwh"), Some(PriceUnit::EurPerMwh));
        assert_eq!(PriceUnit::from_header("Price [EUR/MWh]"), Some(PriceUnit::EurPerMwh));
        assert_eq!(PriceUnit::from_header("price_eur_per_kwh"), Some(PriceUnit::EurPerKwh));
        assert_eq!(PriceUnit::from_header("price"), None);
        assert!((PriceUnit::EurPerMwh.to_eur_per_kwh(131.0) - 0.131).abs() < 1e-15);
    }
}
