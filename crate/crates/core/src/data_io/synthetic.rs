use std::f64::consts::TAU;

use chrono::{DateTime, Utc};
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{HourlySeries, RawPriceSeries};

/// Shapes of synthetic household load, kWh per hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SyntheticLoad {
    Constant {
        value: f64,
    },
    Sinusoid {
        mean: f64,
        amplitude: f64,
        period_h: f64,
        phase_h: f64,
    },
    /// Base load with Gaussian bumps at 07:00 and 19:00 plus white noise.
    TwoPeak {
        base: f64,
        morning_peak: f64,
        evening_peak: f64,
        noise_std: f64,
    },
}

impl SyntheticLoad {
    /// Two-peak profile averaging roughly 0.9 kWh/h.
    pub fn household() -> Self {
        Self::TwoPeak {
            base: 0.6,
            morning_peak: 0.8,
            evening_peak: 1.2,
            noise_std: 0.1,
        }
    }
}

pub fn generate_synthetic_load(kind: SyntheticLoad, start: DateTime<Utc>, hours: usize, seed: u64) -> HourlySeries {
    let mut rng = StdRng::seed_from_u64(seed);
    let values = match kind {
        SyntheticLoad::Constant { value } => vec![value; hours],
        SyntheticLoad::Sinusoid {
            mean,
            amplitude,
            period_h,
            phase_h,
        } => (0..hours)
            .map(|h| mean + amplitude * (TAU * (h as f64 + phase_h) / period_h).sin())
            .collect(),
        SyntheticLoad::TwoPeak {
            base,
            morning_peak,
            evening_peak,
            noise_std,
        } => {
            let noise = Normal::new(0.0, noise_std.max(0.0)).expect("finite std");
            let bump = |hod: f64, center: f64, width: f64| {
                let d = (hod - center).abs().min(24.0 - (hod - center).abs());
                (-0.5 * (d / width).powi(2)).exp()
            };
            (0..hours)
                .map(|h| {
                    let hod = (h % 24) as f64;
                    let v = base
                        + morning_peak * bump(hod, 7.0, 1.5)
                        + evening_peak * bump(hod, 19.0, 2.0)
                        + noise.sample(&mut rng);
                    v.max(0.0)
                })
                .collect()
        }
    };
    HourlySeries::new(format!("synthetic-{seed}"), start, values)
}

/// Day-ahead prices in €/kWh with a daily two-peak shape, day-to-day level
/// drift and hourly noise, scaled so the coefficient of variation is close
/// to `volatility` (σ/μ). Values are floored at zero.
pub fn generate_synthetic_prices(
    start: DateTime<Utc>,
    hours: usize,
    mean: f64,
    volatility: f64,
    seed: u64,
) -> RawPriceSeries {
    let mut rng = StdRng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let shape = |hod: f64| -0.8 * (TAU * hod / 24.0).cos() + 0.6 * (2.0 * TAU * (hod - 2.0) / 24.0).cos();
    let mut level = 0.0;
    let mut raw = Vec::with_capacity(hours);
    for h in 0..hours {
        if h % 24 == 0 {
            level = 0.8 * level + 0.6 * unit.sample(&mut rng);
        }
        raw.push(shape((h % 24) as f64) + 0.5 * level + 0.3 * unit.sample(&mut rng));
    }
    let n = raw.len().max(1) as f64;
    let mu = raw.iter().sum::<f64>() / n;
    let sd = (raw.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n)
        .sqrt()
        .max(1e-12);
    RawPriceSeries {
        start,
        prices: raw
            .iter()
            .map(|v| (mean * (1.0 + volatility * (v - mu) / sd)).max(0.0))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::year_start;

    #[test]
    fn constant_is_flat() {
        let s = generate_synthetic_load(SyntheticLoad::Constant { value: 0.9 }, year_start(2022), 100, 1);
        assert!(s.values.iter().all(|v| *v == 0.9));
    }

    #[test]
    fn sinusoid_repeats_daily() {
        let kind = SyntheticLoad::Sinusoid {
            mean: 1.0,
            amplitude: 0.5,
            period_h: 24.0,
            phase_h: 0.0,
        };
        let v = generate_synthetic_load(kind, year_start(2022), 24 * 10, 0).values;
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let autocorr = |lag: usize| -> f64 {
            v.iter()
                .zip(&v[lag..])
                .map(|(a, b)| (a - mean) * (b - mean))
                .sum::<f64>()
                / (v.len() - lag) as f64
        };
        let peak = (1..48).max_by(|a, b| autocorr(*a).total_cmp(&autocorr(*b))).unwrap();
        assert_eq!(peak, 24);
    }

    #[test]
    fn two_peak_reproducible() {
        let a = generate_synthetic_load(SyntheticLoad::household(), year_start(2022), 500, 9);
        let b = generate_synthetic_load(SyntheticLoad::household(), year_start(2022), 500, 9);
        let c = generate_synthetic_load(SyntheticLoad::household(), year_start(2022), 500, 10);
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
        assert!(a.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn price_volatility() {
        let p = generate_synthetic_prices(year_start(2022), 8760, 0.1, 0.4, 3).prices;
        let mu = p.iter().sum::<f64>() / p.len() as f64;
        let sd = (p.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / p.len() as f64).sqrt();
        assert!((mu - 0.1).abs() < 0.01, "{mu}");
        assert!((sd / mu - 0.4).abs() < 0.05, "{}", sd / mu);
    }
}
