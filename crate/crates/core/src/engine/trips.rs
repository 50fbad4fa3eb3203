use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::data_io::{TripsSection, TruncatedNormalSpec};

/// Sampling model for the daily commute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripModel {
    /// Hour of day.
    pub pickup: TruncatedNormalSpec,
    /// h
    pub duration: TruncatedNormalSpec,
    /// km
    pub distance: TruncatedNormalSpec,
    /// Hour of day; later returns are clamped to it.
    pub latest_return_h: f64,
}

impl Default for TripModel {
    fn default() -> Self {
        Self::from_section(&TripsSection::default())
    }
}

impl TripModel {
    pub fn from_section(s: &TripsSection) -> Self {
        Self {
            pickup: s.pickup(),
            duration: s.duration(),
            distance: s.distance(),
            latest_return_h: s.latest_return_h,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        for (name, d) in [
            ("pickup", self.pickup),
            ("duration", self.duration),
            ("distance", self.distance),
        ] {
            if !(d.std > 0.0 && d.min <= d.mean && d.mean <= d.max && d.min.is_finite() && d.max.is_finite()) {
                return Err(EngineError::Config(format!("invalid {name} distribution {d:?}")));
            }
        }
        if self.pickup.min < 0.0 || self.duration.min < 0.0 || self.distance.min < 0.0 {
            return Err(EngineError::Config("trip bounds must be ≥ 0".into()));
        }
        if !(self.latest_return_h <= 23.0 && self.latest_return_h > self.pickup.max.round()) {
            return Err(EngineError::Config(format!(
                "latest return hour {} must lie after the latest pickup and by 23:00",
                self.latest_return_h
            )));
        }
        Ok(())
    }
}

/// Rejection sampling from a normal truncated to [min, max].
pub fn sample_truncated<R: Rng>(spec: &TruncatedNormalSpec, rng: &mut R) -> f64 {
    let normal = Normal::new(spec.mean, spec.std).expect("validated std");
    loop {
        let x = normal.sample(rng);
        if (spec.min..=spec.max).contains(&x) {
            return x;
        }
    }
}

/// One day's commute, snapped to whole hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub day: usize,
    /// Hour of day the vehicle leaves.
    pub pickup_hour: usize,
    /// Hour of day the vehicle is back; driving covers
    /// `pickup_hour..return_hour`.
    pub return_hour: usize,
    /// km
    pub distance_km: f64,
}

impl Trip {
    pub fn driving_hours(&self) -> usize {
        self.return_hour - self.pickup_hour
    }

    /// Driving energy per hour, kWh, for a vehicle using `kwh_per_km`.
    pub fn hourly_energy(&self, kwh_per_km: f64) -> f64 {
        self.distance_km * kwh_per_km / self.driving_hours() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TripSchedule {
    pub trips: Vec<Trip>,
}

/// One trip per day, deterministic per seed.
pub fn generate_trips(days: usize, model: &TripModel, seed: u64) -> Result<TripSchedule, EngineError> {
    model.validate()?;
    let mut rng = StdRng::seed_from_u64(seed);
    let latest = model.latest_return_h.floor() as usize;
    let trips = (0..days)
        .map(|day| {
            let pickup = sample_truncated(&model.pickup, &mut rng);
            let duration = sample_truncated(&model.duration, &mut rng);
            let distance_km = sample_truncated(&model.distance, &mut rng);
            let pickup_hour = pickup.round() as usize;
            let return_hour = ((pickup + duration).round() as usize).max(pickup_hour + 1).min(latest);
            Trip {
                day,
                pickup_hour,
                return_hour,
                distance_km,
            }
        })
        .collect();
    Ok(TripSchedule { trips })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_and_determinism() {
        let m = TripModel::default();
        let a = generate_trips(365, &m, 5).unwrap();
        assert_eq!(a, generate_trips(365, &m, 5).unwrap());
        assert_ne!(a, generate_trips(365, &m, 6).unwrap());
        for t in &a.trips {
            assert!((6..=10).contains(&t.pickup_hour));
            assert!((7..=11).contains(&t.driving_hours()));
            assert!((30.0..=40.0).contains(&t.distance_km));
            assert!(t.pickup_hour < t.return_hour);
        }
    }

    #[test]
    fn truncated_mean() {
        let m = TripModel::default();
        let mut rng = StdRng::seed_from_u64(11);
        let n = 10_000;
        let mean = (0..n).map(|_| sample_truncated(&m.distance, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 35.0).abs() < 0.5, "{mean}");
    }

    #[test]
    fn late_returns_clamped() {
        let mut m = TripModel::default();
        m.duration.mean = 19.0;
        m.duration.min = 18.0;
        m.duration.max = 20.0;
        let s = generate_trips(50, &m, 1).unwrap();
        assert!(s.trips.iter().all(|t| t.return_hour == 23));
    }

    #[test]
    fn driving_energy_per_hour() {
        let t = Trip {
            day: 0,
            pickup_hour: 8,
            return_hour: 17,
            distance_km: 35.0,
        };
        let kwh_per_km = 82.0 / 514.0;
        let dsoc = t.hourly_energy(kwh_per_km) / 82.0;
        assert!((dsoc - 35.0 / 9.0 / 514.0).abs() < 1e-15);
        assert!((dsoc - 0.00756).abs() < 1e-5);
    }
}
