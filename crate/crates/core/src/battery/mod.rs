//! Battery aging and battery economics.
//!
//! Capacity loss is the sum of one calendar mechanism (√t law) and three
//! cycle mechanisms: high temperature (√Q_tot), low temperature (√Q_ch) and
//! low temperature at high SoC (linear in Q_ch, gated on SoC). Charge
//! throughput is obtained from energy by dividing by the mean of the pack
//! open-circuit voltages at the start and end of the step.

mod aging;
mod curve;
mod params;

pub use aging::{
    anode_potential, calendar_step, calendar_stress, cycle_ht_step, cycle_lt_step, cycle_lthsoc_step, step_voltage,
    total_degradation_step, AgingContext, HourAging, MechanismIncrements, SocGate, ThroughputDenominator,
};
pub use curve::SocCurve;
pub use params::{DegradationParams, PhysicalConstants, DEFAULT_PARAMS_TOML};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BatteryError {
    #[error("state of charge {0} outside [0, 1]")]
    SocOutOfRange(f64),
    #[error("temperature must be positive, got {0} K")]
    NonPositiveTemperature(f64),
    #[error("negative charge throughput {0} Ah")]
    NegativeThroughput(f64),
    #[error("negative energy flow {0} kWh")]
    NegativeEnergy(f64),
    #[error("time step must be positive, got {0} h")]
    NonPositiveTimeStep(f64),
    #[error("calendar aging is singular at zero battery age")]
    ZeroAge,
    #[error("end-of-life fraction must be below 1, got {0}")]
    EolAtFullCapacity(f64),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("invalid degradation parameters: {0}")]
    InvalidParams(String),
    #[error("parameter file: {0}")]
    ParamsFile(String),
    #[error("invalid battery specification: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleBatterySpec {
    pub capacity_kwh: f64,
    pub nominal_capacity_ah: f64,
    pub nominal_voltage_v: f64,
    pub driving_range_km: f64,
    /// Charger limit per hour, both directions.
    pub max_hourly_energy_kwh: f64,
    pub eol_fraction: f64,
}

impl VehicleBatterySpec {
    pub fn new(
        capacity_kwh: f64,
        nominal_capacity_ah: f64,
        nominal_voltage_v: f64,
        driving_range_km: f64,
        max_hourly_energy_kwh: f64,
        eol_fraction: f64,
    ) -> Result<Self, BatteryError> {
        let spec = Self {
            capacity_kwh,
            nominal_capacity_ah,
            nominal_voltage_v,
            driving_range_km,
            max_hourly_energy_kwh,
            eol_fraction,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 82 kWh / 205 Ah / 400 V pack, 514 km range, 11 kWh/h charger.
    pub fn reference_ev() -> Self {
        Self {
            capacity_kwh: 82.0,
            nominal_capacity_ah: 205.0,
            nominal_voltage_v: 400.0,
            driving_range_km: 514.0,
            max_hourly_energy_kwh: 11.0,
            eol_fraction: 0.8,
        }
    }

    /// Same chemistry and vehicle consumption with a different pack size:
    /// Ah capacity follows the nominal voltage and the range keeps kWh/km.
    pub fn with_capacity(&self, capacity_kwh: f64) -> Result<Self, BatteryError> {
        let scale = capacity_kwh / self.capacity_kwh;
        Self::new(
            capacity_kwh,
            capacity_kwh * 1000.0 / self.nominal_voltage_v,
            self.nominal_voltage_v,
            self.driving_range_km * scale,
            self.max_hourly_energy_kwh,
            self.eol_fraction,
        )
    }

    pub fn validate(&self) -> Result<(), BatteryError> {
        let bad = |m: &str| Err(BatteryError::InvalidSpec(m.into()));
        if !(self.capacity_kwh > 0.0) {
            return bad("capacity must be positive");
        }
        if !(self.nominal_voltage_v > 0.0) {
            return bad("nominal voltage must be positive");
        }
        let implied = self.capacity_kwh * 1000.0 / self.nominal_voltage_v;
        if !((self.nominal_capacity_ah - implied).abs() <= 0.02 * implied) {
            return Err(BatteryError::InvalidSpec(format!(
                "nominal capacity {} Ah inconsistent with {} kWh at {} V",
                self.nominal_capacity_ah, self.capacity_kwh, self.nominal_voltage_v
            )));
        }
        if !(self.driving_range_km > 0.0) {
            return bad("driving range must be positive");
        }
        if !(self.max_hourly_energy_kwh > 0.0) {
            return bad("charger limit must be positive");
        }
        if !(self.eol_fraction > 0.0 && self.eol_fraction < 1.0) {
            return bad("end-of-life fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryEconomics {
    /// €/kWh
    pub replacement_cost_per_kwh: f64,
    /// Residual value as a fraction of the replacement cost.
    pub residual_fraction: f64,
    /// 1/yr
    pub discount_rate: f64,
    /// yr
    pub nominal_life_yr: f64,
}

impl Default for BatteryEconomics {
    fn default() -> Self {
        Self {
            replacement_cost_per_kwh: 111.5,
            residual_fraction: 0.3,
            discount_rate: 0.1,
            nominal_life_yr: 10.0,
        }
    }
}

impl BatteryEconomics {
    pub fn validate(&self) -> Result<(), BatteryError> {
        if !(self.replacement_cost_per_kwh > 0.0)
            || !(0.0..1.0).contains(&self.residual_fraction)
            || !(self.discount_rate >= 0.0)
            || !(self.nominal_life_yr > 0.0)
        {
            return Err(BatteryError::InvalidParams(format!(
                "invalid battery economics {self:?}"
            )));
        }
        Ok(())
    }
}

/// Discounted replacement cost minus discounted residual value, €.
pub fn net_value(econ: &BatteryEconomics, spec: &VehicleBatterySpec) -> f64 {
    let replacement = econ.replacement_cost_per_kwh * spec.capacity_kwh;
    let residual = econ.residual_fraction * replacement;
    (replacement - residual) / (1.0 + econ.discount_rate).powf(econ.nominal_life_yr)
}

/// Prorates the net value over the usable capacity range down to end of life.
pub fn battery_cost(bd_percent: f64, nv: f64, eol_fraction: f64) -> Result<f64, BatteryError> {
    if eol_fraction >= 1.0 {
        return Err(BatteryError::EolAtFullCapacity(eol_fraction));
    }
    if bd_percent < 0.0 {
        return Err(BatteryError::InvalidParams(format!(
            "negative degradation {bd_percent}%"
        )));
    }
    Ok(nv * bd_percent / (100.0 * (1.0 - eol_fraction)))
}

/// Cumulative aging bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DegradationState {
    pub age_hours: f64,
    /// Ah, charge plus discharge.
    pub q_tot: f64,
    /// Ah, charge only.
    pub q_ch: f64,
    pub bd_cal: f64,
    pub bd_cyc_ht: f64,
    pub bd_cyc_lt: f64,
    pub bd_cyc_lthsoc: f64,
}

impl DegradationState {
    pub fn with_age_hours(age_hours: f64) -> Self {
        Self {
            age_hours,
            ..Self::default()
        }
    }

    pub fn bd_cyc(&self) -> f64 {
        self.bd_cyc_ht + self.bd_cyc_lt + self.bd_cyc_lthsoc
    }

    pub fn bd_total(&self) -> f64 {
        self.bd_cal + self.bd_cyc()
    }

    pub(crate) fn advance(&self, dt_hours: f64, dq_tot: f64, dq_ch: f64, inc: &MechanismIncrements<f64>) -> Self {
        Self {
            age_hours: self.age_hours + dt_hours,
            q_tot: self.q_tot + dq_tot,
            q_ch: self.q_ch + dq_ch,
            bd_cal: self.bd_cal + inc.calendar,
            bd_cyc_ht: self.bd_cyc_ht + inc.cycle_ht,
            bd_cyc_lt: self.bd_cyc_lt + inc.cycle_lt,
            bd_cyc_lthsoc: self.bd_cyc_lthsoc + inc.cycle_lthsoc,
        }
    }
}

/// A pack with its economics, parameters scaled to the pack, and the
/// (constant) cell temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryModel {
    pub spec: VehicleBatterySpec,
    pub economics: BatteryEconomics,
    pub params: DegradationParams,
    pub consts: PhysicalConstants,
    pub temperature_k: f64,
}

impl BatteryModel {
    /// `params` may be given at any reference capacity; they are rescaled
    /// to the pack's nominal Ah.
    pub fn new(
        spec: VehicleBatterySpec,
        economics: BatteryEconomics,
        params: &DegradationParams,
        temperature_k: f64,
    ) -> Result<Self, BatteryError> {
        spec.validate()?;
        economics.validate()?;
        params.validate()?;
        if !(temperature_k > 0.0) {
            return Err(BatteryError::NonPositiveTemperature(temperature_k));
        }
        Ok(Self {
            params: params.scaled_to_capacity(spec.nominal_capacity_ah),
            spec,
            economics,
            consts: PhysicalConstants::default(),
            temperature_k,
        })
    }

    /// Reference EV at 15 °C with the shipped parameters.
    pub fn reference() -> Self {
        Self::new(
            VehicleBatterySpec::reference_ev(),
            BatteryEconomics::default(),
            &DegradationParams::lfp_reference(),
            288.15,
        )
        .expect("reference battery is valid")
    }

    /// Same chemistry, economics and temperature with a resized pack.
    pub fn with_capacity(&self, capacity_kwh: f64) -> Result<Self, BatteryError> {
        let mut m = Self::new(
            self.spec.with_capacity(capacity_kwh)?,
            self.economics.clone(),
            &self.params,
            self.temperature_k,
        )?;
        m.consts = self.consts;
        Ok(m)
    }

    pub fn net_value(&self) -> f64 {
        net_value(&self.economics, &self.spec)
    }

    /// € per percentage point of capacity loss.
    pub fn cost_per_percent(&self) -> f64 {
        self.net_value() / (100.0 * (1.0 - self.spec.eol_fraction))
    }

    pub fn exact_context(&self) -> AgingContext<'_> {
        AgingContext {
            params: &self.params,
            consts: &self.consts,
            temperature_k: self.temperature_k,
            gate: SocGate::Exact,
            throughput: ThroughputDenominator::PostIncrement,
            curve_smoothing: 0.0,
        }
    }

    /// Exact accounting for one step.
    pub fn step(
        &self,
        state: &DegradationState,
        soc_prev: f64,
        soc_now: f64,
        e_in_kwh: f64,
        e_out_kwh: f64,
        dt_hours: f64,
    ) -> Result<(DegradationState, MechanismIncrements<f64>), BatteryError> {
        total_degradation_step(
            state,
            self.temperature_k,
            soc_prev,
            soc_now,
            e_in_kwh,
            e_out_kwh,
            dt_hours,
            &self.params,
            &self.consts,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn net_value_without_discounting_or_residual() {
        let econ = BatteryEconomics {
            discount_rate: 0.0,
            residual_fraction: 0.0,
            ..Default::default()
        };
        let spec = VehicleBatterySpec::reference_ev();
        assert!((net_value(&econ, &spec) - 111.5 * 82.0).abs() < 1e-9);
    }

    #[test]
    fn net_value_reference_constants() {
        // 111.5 * 82 * 0.7 / 1.1^10
        let expected = 6400.1 / 2.593_742_460_1;
        let nv = net_value(&BatteryEconomics::default(), &VehicleBatterySpec::reference_ev());
        assert!((nv - expected).abs() < 1e-6, "{nv}");
        assert!((nv - 2467.5).abs() < 0.05);
    }

    #[test]
    fn net_value_full_residual_is_zero() {
        // residual_fraction = 1 is outside the validated range but the formula
        // itself must give zero
        let econ = BatteryEconomics {
            residual_fraction: 1.0,
            ..Default::default()
        };
        assert_eq!(net_value(&econ, &VehicleBatterySpec::reference_ev()), 0.0);
        assert!(econ.validate().is_err());
    }

    #[test]
    fn battery_cost_cases() {
        assert_eq!(battery_cost(0.0, 2467.5, 0.8).unwrap(), 0.0);
        assert!((battery_cost(20.0, 2467.5, 0.8).unwrap() - 2467.5).abs() < 1e-9);
        let nv = net_value(&BatteryEconomics::default(), &VehicleBatterySpec::reference_ev());
        let bc = battery_cost(5.42, nv, 0.8).unwrap();
        assert!((bc - 668.7).abs() < 0.1, "{bc}");
        assert!(matches!(
            battery_cost(1.0, nv, 1.0),
            Err(BatteryError::EolAtFullCapacity(_))
        ));
        assert!(battery_cost(-1.0, nv, 0.8).is_err());
    }

    #[test]
    fn spec_consistency() {
        assert!(VehicleBatterySpec::reference_ev().validate().is_ok());
        let mut s = VehicleBatterySpec::reference_ev();
        s.nominal_capacity_ah = 215.0;
        assert!(s.validate().is_err());
        s.nominal_capacity_ah = 208.0;
        assert!(s.validate().is_ok());
        s.eol_fraction = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn capacity_variants() {
        let s = VehicleBatterySpec::reference_ev().with_capacity(41.0).unwrap();
        assert!((s.nominal_capacity_ah - 102.5).abs() < 1e-12);
        assert!((s.driving_range_km - 257.0).abs() < 1e-12);
        assert_eq!(s.max_hourly_energy_kwh, 11.0);
    }

    #[test]
    fn cost_per_percent_reference() {
        let m = BatteryModel::reference();
        assert!((m.cost_per_percent() - m.net_value() / 20.0).abs() < 1e-12);
    }
}
