use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::{DataError, SyntheticLoad};

/// Run configuration. Every section and key is optional and defaults to the
/// reference setup; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub battery: BatterySection,
    pub economics: EconomicsSection,
    pub tariff: TariffSection,
    pub trips: TripsSection,
    pub forecaster: ForecasterSection,
    pub simulation: SimulationSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatterySection {
    pub capacity_kwh: f64,
    pub nominal_capacity_ah: f64,
    pub nominal_voltage_v: f64,
    pub driving_range_km: f64,
    pub max_hourly_energy_kwh: f64,
    pub eol_fraction: f64,
    pub temperature_k: f64,
    pub initial_soc_fraction: f64,
    pub initial_age_h: f64,
    /// Degradation parameter file; the shipped LiFePO₄ set when absent.
    pub degradation_params_path: Option<PathBuf>,
}

impl Default for BatterySection {
    fn default() -> Self {
        Self {
            capacity_kwh: 82.0,
            nominal_capacity_ah: 205.0,
            nominal_voltage_v: 400.0,
            driving_range_km: 514.0,
            max_hourly_energy_kwh: 11.0,
            eol_fraction: 0.8,
            temperature_k: 288.15,
            initial_soc_fraction: 0.6,
            initial_age_h: 60.0 * 24.0,
            degradation_params_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EconomicsSection {
    pub replacement_cost_eur_per_kwh: f64,
    pub residual_fraction: f64,
    pub discount_rate_per_yr: f64,
    pub nominal_life_yr: f64,
}

impl Default for EconomicsSection {
    fn default() -> Self {
        Self {
            replacement_cost_eur_per_kwh: 111.5,
            residual_fraction: 0.3,
            discount_rate_per_yr: 0.1,
            nominal_life_yr: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TariffSection {
    /// Day-ahead price file; synthetic prices when absent.
    pub price_csv_path: Option<PathBuf>,
    /// Sell price / buy price.
    pub sell_price_ratio: f64,
    pub tax_multiplier_ratio: f64,
    pub tax_adder_eur_per_kwh: f64,
    pub synthetic_mean_eur_per_kwh: f64,
    /// Coefficient of variation σ/μ of the synthetic day-ahead prices.
    pub synthetic_volatility_ratio: f64,
}

impl Default for TariffSection {
    fn default() -> Self {
        Self {
            price_csv_path: None,
            sell_price_ratio: 1.0,
            tax_multiplier_ratio: 1.25,
            tax_adder_eur_per_kwh: 0.006,
            synthetic_mean_eur_per_kwh: 0.12,
            synthetic_volatility_ratio: 0.5,
        }
    }
}

/// Gaussian with mean and σ, truncated to [min, max].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormalSpec {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl TruncatedNormalSpec {
    fn validate(&self, what: &str) -> Result<(), DataError> {
        if !(self.std > 0.0 && self.min <= self.mean && self.mean <= self.max) {
            return Err(DataError::Config(format!(
                "[trips] {what}: need std > 0 and min ≤ mean ≤ max, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TripsSection {
    pub pickup_mean_h: f64,
    pub pickup_std_h: f64,
    pub pickup_min_h: f64,
    pub pickup_max_h: f64,
    pub duration_mean_h: f64,
    pub duration_std_h: f64,
    pub duration_min_h: f64,
    pub duration_max_h: f64,
    pub distance_mean_km: f64,
    pub distance_std_km: f64,
    pub distance_min_km: f64,
    pub distance_max_km: f64,
    /// Returns later than this hour of day are clamped to it.
    pub latest_return_h: f64,
}

impl Default for TripsSection {
    fn default() -> Self {
        Self {
            pickup_mean_h: 8.0,
            pickup_std_h: 1.0,
            pickup_min_h: 6.0,
            pickup_max_h: 10.0,
            duration_mean_h: 9.0,
            duration_std_h: 1.0,
            duration_min_h: 7.0,
            duration_max_h: 11.0,
            distance_mean_km: 35.0,
            distance_std_km: 2.5,
            distance_min_km: 30.0,
            distance_max_km: 40.0,
            latest_return_h: 23.0,
        }
    }
}

impl TripsSection {
    pub fn pickup(&self) -> TruncatedNormalSpec {
        TruncatedNormalSpec {
            mean: self.pickup_mean_h,
            std: self.pickup_std_h,
            min: self.pickup_min_h,
            max: self.pickup_max_h,
        }
    }

    pub fn duration(&self) -> TruncatedNormalSpec {
        TruncatedNormalSpec {
            mean: self.duration_mean_h,
            std: self.duration_std_h,
            min: self.duration_min_h,
            max: self.duration_max_h,
        }
    }

    pub fn distance(&self) -> TruncatedNormalSpec {
        TruncatedNormalSpec {
            mean: self.distance_mean_km,
            std: self.distance_std_km,
            min: self.distance_min_km,
            max: self.distance_max_km,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecasterSection {
    /// Trained model file used by `simulate`.
    pub model_path: Option<PathBuf>,
    pub lag_count: usize,
    pub hidden_units_count: usize,
    pub dense1_units_count: usize,
    pub dense2_units_count: usize,
    pub batch_size_count: usize,
    pub epochs_count: usize,
    pub learning_rate_unitless: f64,
}

impl Default for ForecasterSection {
    fn default() -> Self {
        Self {
            model_path: None,
            lag_count: 24,
            hidden_units_count: 50,
            dense1_units_count: 64,
            dense2_units_count: 32,
            batch_size_count: 8,
            epochs_count: 75,
            learning_rate_unitless: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub hours_count: usize,
    /// Calendar date of hour 0 (YYYY-MM-DD, UTC).
    pub start_date: String,
    pub rng_seed_unitless: u64,
    /// Household load files in concatenation order; the last one is simulated.
    pub load_csv_paths: Vec<PathBuf>,
    /// Synthetic load used when no files are given.
    pub synthetic_load: SyntheticLoad,
    pub load_multiplier_ratio: f64,
    /// `forecast`, `oracle` or `persistence`.
    pub predictor: String,
    pub mismatch_tolerance_kwh: f64,
    pub soc_goal_fraction: f64,
    pub slack_penalty_eur_per_pp: f64,
    pub kkt_tolerance_unitless: f64,
    pub max_iterations_count: usize,
    pub gate_smoothing_eps_fraction: f64,
    pub curve_smoothing_width_fraction: f64,
    pub freeze_denominators: bool,
    pub throughput_floor_ah: f64,
    /// Solver failures tolerated before a run counts as numerically failed.
    pub max_solver_failures_count: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            hours_count: super::HOURS_PER_YEAR,
            start_date: "2022-01-01".into(),
            rng_seed_unitless: 42,
            load_csv_paths: Vec::new(),
            synthetic_load: SyntheticLoad::household(),
            load_multiplier_ratio: 1.0,
            predictor: "forecast".into(),
            mismatch_tolerance_kwh: 0.0,
            soc_goal_fraction: 0.8,
            slack_penalty_eur_per_pp: 10.0,
            kkt_tolerance_unitless: 1e-8,
            max_iterations_count: 200,
            gate_smoothing_eps_fraction: 0.01,
            curve_smoothing_width_fraction: 0.005,
            freeze_denominators: true,
            throughput_floor_ah: 1.0,
            max_solver_failures_count: 5,
        }
    }
}

impl SimulationSection {
    pub fn start(&self) -> Result<DateTime<Utc>, DataError> {
        NaiveDate::parse_from_str(&self.start_date, "%Y-%m-%d")
            .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc())
            .map_err(|e| DataError::Config(format!("[simulation] start_date: {e}")))
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, DataError> {
        let cfg: Self = toml::from_str(text).map_err(|e| DataError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| DataError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is serializable")
    }

    /// Resolves a path from the file against the config's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Config(m));
        let b = &self.battery;
        if !(0.0..=1.0).contains(&b.initial_soc_fraction) {
            return bad(format!(
                "[battery] initial_soc_fraction {} outside [0, 1]",
                b.initial_soc_fraction
            ));
        }
        if !(b.initial_age_h >= 0.0) {
            return bad("[battery] initial_age_h must be ≥ 0".into());
        }
        let t = &self.tariff;
        if !(0.0..=1.0).contains(&t.sell_price_ratio) {
            return bad(format!(
                "[tariff] sell_price_ratio {} outside [0, 1]",
                t.sell_price_ratio
            ));
        }
        if !(t.synthetic_volatility_ratio >= 0.0) {
            return bad("[tariff] synthetic_volatility_ratio must be ≥ 0".into());
        }
        let tr = &self.trips;
        tr.pickup().validate("pickup")?;
        tr.duration().validate("duration")?;
        tr.distance().validate("distance")?;
        if tr.distance_min_km < 0.0 || tr.pickup_min_h < 0.0 || tr.duration_min_h < 1.0 {
            return bad("[trips] bounds must be nonnegative and durations ≥ 1 h".into());
        }
        if !(0.0..=23.0).contains(&tr.latest_return_h) {
            return bad("[trips] latest_return_h outside [0, 23]".into());
        }
        let f = &self.forecaster;
        if f.lag_count == 0
            || f.hidden_units_count == 0
            || f.dense1_units_count == 0
            || f.dense2_units_count == 0
            || f.batch_size_count == 0
            || f.epochs_count == 0
            || !(f.learning_rate_unitless > 0.0)
        {
            return bad("[forecaster] sizes, batch size, epochs and learning rate must be positive".into());
        }
        let s = &self.simulation;
        s.start()?;
        if s.hours_count == 0 {
            return bad("[simulation] hours_count must be positive".into());
        }
        if !(s.load_multiplier_ratio > 0.0) {
            return bad("[simulation] load_multiplier_ratio must be positive".into());
        }
        if !["forecast", "oracle", "persistence"].contains(&s.predictor.as_str()) {
            return bad(format!(
                "[simulation] predictor {:?} is not one of forecast, oracle, persistence",
                s.predictor
            ));
        }
        if !(s.mismatch_tolerance_kwh >= 0.0) || !(0.0..=1.0).contains(&s.soc_goal_fraction) {
            return bad("[simulation] tolerance must be ≥ 0 and goal within [0, 1]".into());
        }
        Ok(())
    }
}
