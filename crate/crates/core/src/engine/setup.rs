use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};

use super::{
    EngineError, ForecastPredictor, LoadPredictor, OraclePredictor, PersistencePredictor, Scenario, SimulationConfig,
    TripModel,
};
use crate::battery::{BatteryEconomics, BatteryModel, DegradationParams, VehicleBatterySpec};
use crate::data_io::{
    apply_tax_transform, generate_synthetic_load, generate_synthetic_prices, load_household_csv, load_price_csv,
    Config, LoadDataset, RawPriceSeries, TaxTransform,
};
use crate::forecaster::{Architecture, ForecastModel, TrainingConfig};
use crate::optimizer::SolverConfig;

/// Hours of training data kept as predictor warm-up before the simulated year.
const PRELUDE_HOURS: usize = 168;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    Oracle,
    Persistence,
    Forecast,
}

impl FromStr for PredictorKind {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "persistence" => Ok(Self::Persistence),
            "forecast" => Ok(Self::Forecast),
            other => Err(EngineError::Config(format!(
                "unknown predictor {other:?} (expected forecast, oracle or persistence)"
            ))),
        }
    }
}

pub fn build_predictor(
    kind: PredictorKind,
    model: Option<Arc<ForecastModel>>,
) -> Result<Box<dyn LoadPredictor>, EngineError> {
    Ok(match kind {
        PredictorKind::Oracle => Box::new(OraclePredictor),
        PredictorKind::Persistence => Box::new(PersistencePredictor),
        PredictorKind::Forecast => {
            Box::new(ForecastPredictor::new(model.ok_or_else(|| {
                EngineError::Config("the forecast predictor needs a trained model".into())
            })?))
        }
    })
}

/// Data and models referenced by a config file, loaded once.
#[derive(Debug, Clone)]
pub struct RunInputs {
    pub battery: BatteryModel,
    pub raw_prices: RawPriceSeries,
    pub tax: TaxTransform,
    /// Unscaled; the multiplier is applied by the simulation.
    pub dataset: LoadDataset,
    pub start: DateTime<Utc>,
}

impl RunInputs {
    pub fn battery(cfg: &Config) -> Result<BatteryModel, EngineError> {
        let b = &cfg.battery;
        let spec = VehicleBatterySpec::new(
            b.capacity_kwh,
            b.nominal_capacity_ah,
            b.nominal_voltage_v,
            b.driving_range_km,
            b.max_hourly_energy_kwh,
            b.eol_fraction,
        )?;
        let e = &cfg.economics;
        let economics = BatteryEconomics {
            replacement_cost_per_kwh: e.replacement_cost_eur_per_kwh,
            residual_fraction: e.residual_fraction,
            discount_rate: e.discount_rate_per_yr,
            nominal_life_yr: e.nominal_life_yr,
        };
        let params = match &b.degradation_params_path {
            Some(p) => DegradationParams::from_file(&cfg.resolve(p))?,
            None => DegradationParams::lfp_reference(),
        };
        Ok(BatteryModel::new(spec, economics, &params, b.temperature_k)?)
    }

    pub fn solver(cfg: &Config) -> SolverConfig {
        let s = &cfg.simulation;
        SolverConfig {
            kkt_tolerance: s.kkt_tolerance_unitless,
            max_iterations: s.max_iterations_count,
            slack_penalty_weight: s.slack_penalty_eur_per_pp,
            gate_smoothing_eps: s.gate_smoothing_eps_fraction,
            degradation_denominator_freeze: s.freeze_denominators,
            throughput_floor_ah: s.throughput_floor_ah,
            curve_smoothing_width: s.curve_smoothing_width_fraction,
            ..SolverConfig::default()
        }
    }

    pub fn training(cfg: &Config) -> TrainingConfig {
        let f = &cfg.forecaster;
        TrainingConfig {
            architecture: Architecture {
                lags: f.lag_count,
                hidden: f.hidden_units_count,
                dense1: f.dense1_units_count,
                dense2: f.dense2_units_count,
            },
            batch_size: f.batch_size_count,
            epochs: f.epochs_count,
            learning_rate: f.learning_rate_unitless,
            rng_seed: cfg.simulation.rng_seed_unitless,
            ..TrainingConfig::default()
        }
    }

    /// Reads the price and load files named in the config, or generates
    /// seeded synthetic data (one training year and one simulated year)
    /// where none are given.
    pub fn from_config(cfg: &Config) -> Result<Self, EngineError> {
        cfg.validate()?;
        let sim = &cfg.simulation;
        let start = sim.start()?;
        let seed = sim.rng_seed_unitless;
        let hours = sim.hours_count;
        let t = &cfg.tariff;
        let raw_prices = match &t.price_csv_path {
            Some(p) => load_price_csv(&cfg.resolve(p))?,
            None => generate_synthetic_prices(
                start,
                hours,
                t.synthetic_mean_eur_per_kwh,
                t.synthetic_volatility_ratio,
                seed,
            ),
        };
        let dataset = if sim.load_csv_paths.is_empty() {
            let train_start = start - Duration::hours(hours as i64);
            LoadDataset::new(
                vec![
                    generate_synthetic_load(sim.synthetic_load, train_start, hours, seed.wrapping_add(1)),
                    generate_synthetic_load(sim.synthetic_load, start, hours, seed),
                ],
                1.0,
            )?
        } else {
            let paths: Vec<_> = sim.load_csv_paths.iter().map(|p| cfg.resolve(p)).collect();
            load_household_csv(&paths, 1.0)?
        };
        let test_start = dataset.series[dataset.series.len() - 1].start;
        if test_start != raw_prices.start {
            log::warn!(
                "price series starts {} but the simulated load starts {}; hours are aligned by index",
                raw_prices.start,
                test_start
            );
        }
        Ok(Self {
            battery: Self::battery(cfg)?,
            raw_prices,
            tax: TaxTransform {
                multiplier: t.tax_multiplier_ratio,
                adder: t.tax_adder_eur_per_kwh,
            },
            dataset,
            start,
        })
    }

    /// Loads preceding the simulated year, unscaled.
    pub fn prelude(&self) -> Vec<f64> {
        let train = self.dataset.train();
        train[train.len().saturating_sub(PRELUDE_HOURS)..].to_vec()
    }

    pub fn simulation(&self, cfg: &Config, scenario: Scenario, gamma: f64) -> Result<SimulationConfig, EngineError> {
        let sim = &cfg.simulation;
        let tariff = apply_tax_transform(&self.raw_prices, &self.tax, gamma)?;
        let loads = self.dataset.series[self.dataset.series.len() - 1].clone();
        let mut s = SimulationConfig::new(self.battery.clone(), tariff, loads);
        s.scenario = scenario;
        s.load_prelude = self.prelude();
        s.load_multiplier = sim.load_multiplier_ratio;
        s.hours = sim.hours_count;
        s.initial_soc = cfg.battery.initial_soc_fraction;
        s.initial_age_h = cfg.battery.initial_age_h;
        s.trips = TripModel::from_section(&cfg.trips);
        s.rng_seed = sim.rng_seed_unitless;
        s.mismatch_tolerance_kwh = sim.mismatch_tolerance_kwh;
        s.soc_goal = sim.soc_goal_fraction;
        s.solver = Self::solver(cfg);
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_inputs_from_defaults() {
        let mut cfg = Config::default();
        cfg.simulation.hours_count = 24 * 7;
        let inputs = RunInputs::from_config(&cfg).unwrap();
        assert_eq!(inputs.raw_prices.prices.len(), 24 * 7);
        assert_eq!(inputs.dataset.series.len(), 2);
        assert_eq!(inputs.prelude().len(), PRELUDE_HOURS);
        let sim = inputs.simulation(&cfg, Scenario::Unidirectional, 0.5).unwrap();
        assert_eq!(sim.tariff.price_ratio, 0.5);
        assert_eq!(sim.hours, 24 * 7);
        assert!("forecast".parse::<PredictorKind>().is_ok());
        assert!("lstm".parse::<PredictorKind>().is_err());
        assert!(build_predictor(PredictorKind::Forecast, None).is_err());
    }
}
