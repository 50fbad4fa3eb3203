use std::path::Path;

use serde::{Deserialize, Serialize};

use super::curve::SocCurve;
use super::BatteryError;

/// Parameter set shipped with the crate.
pub const DEFAULT_PARAMS_TOML: &str = include_str!("../../data/lfp_degradation.toml");

/// Universal gas constant and Faraday constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// J/(mol·K)
    pub gas_constant: f64,
    /// C/mol
    pub faraday_constant: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            gas_constant: 8.314_462_618,
            faraday_constant: 96_485.332_12,
        }
    }
}

/// Constants of the calendar and three cycle aging mechanisms.
///
/// Rate constants produce capacity loss in percent. Throughput-related
/// constants refer to a cell of `reference_capacity_ah`; use
/// [`DegradationParams::scaled_to_capacity`] before feeding pack-level Ah.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationParams {
    pub reference_capacity_ah: f64,
    /// Lower bound on the calendar-age denominator, hours.
    pub min_age_h: f64,

    pub k_cal_ref: f64,
    pub ea_cal: f64,
    pub alpha: f64,
    pub u_a_ref: f64,
    pub k0: f64,
    pub t_ref: f64,

    pub k_cyc_ht_ref: f64,
    pub ea_cyc_ht: f64,

    pub k_cyc_lt_ref: f64,
    pub ea_cyc_lt: f64,
    pub beta_lt: f64,
    pub i_ch_ref: f64,

    pub k_cyc_lthsoc_ref: f64,
    pub ea_cyc_lthsoc: f64,
    pub beta_lthsoc: f64,
    pub soc_ref: f64,

    pub anode_potential: SocCurve,
    pub ocv: SocCurve,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    reference_capacity_ah: f64,
    #[serde(default = "default_min_age_h")]
    min_age_h: f64,
    k_cal_ref_pct_per_sqrt_h: f64,
    ea_cal_j_per_mol: f64,
    alpha_unitless: f64,
    u_a_ref_v: f64,
    k0_unitless: f64,
    t_ref_k: f64,
    k_cyc_ht_ref_pct_per_sqrt_ah: f64,
    ea_cyc_ht_j_per_mol: f64,
    k_cyc_lt_ref_pct_per_sqrt_ah: f64,
    ea_cyc_lt_j_per_mol: f64,
    beta_lt_h: f64,
    i_ch_ref_a: f64,
    k_cyc_lthsoc_ref_pct_per_ah: f64,
    ea_cyc_lthsoc_j_per_mol: f64,
    beta_lthsoc_h: f64,
    soc_ref_fraction: f64,
    anode_potential_curve: AnodeTable,
    ocv_curve: OcvTable,
}

fn default_min_age_h() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnodeTable {
    soc_fraction: Vec<f64>,
    potential_v: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OcvTable {
    soc_fraction: Vec<f64>,
    voltage_v: Vec<f64>,
}

impl DegradationParams {
    pub fn from_toml_str(text: &str) -> Result<Self, BatteryError> {
        let f: ParamsFile = toml::from_str(text).map_err(|e| BatteryError::ParamsFile(e.to_string()))?;
        let params = Self {
            reference_capacity_ah: f.reference_capacity_ah,
            min_age_h: f.min_age_h,
            k_cal_ref: f.k_cal_ref_pct_per_sqrt_h,
            ea_cal: f.ea_cal_j_per_mol,
            alpha: f.alpha_unitless,
            u_a_ref: f.u_a_ref_v,
            k0: f.k0_unitless,
            t_ref: f.t_ref_k,
            k_cyc_ht_ref: f.k_cyc_ht_ref_pct_per_sqrt_ah,
            ea_cyc_ht: f.ea_cyc_ht_j_per_mol,
            k_cyc_lt_ref: f.k_cyc_lt_ref_pct_per_sqrt_ah,
            ea_cyc_lt: f.ea_cyc_lt_j_per_mol,
            beta_lt: f.beta_lt_h,
            i_ch_ref: f.i_ch_ref_a,
            k_cyc_lthsoc_ref: f.k_cyc_lthsoc_ref_pct_per_ah,
            ea_cyc_lthsoc: f.ea_cyc_lthsoc_j_per_mol,
            beta_lthsoc: f.beta_lthsoc_h,
            soc_ref: f.soc_ref_fraction,
            anode_potential: SocCurve::new(
                f.anode_potential_curve.soc_fraction,
                f.anode_potential_curve.potential_v,
            )?,
            ocv: SocCurve::new(f.ocv_curve.soc_fraction, f.ocv_curve.voltage_v)?,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn from_file(path: &Path) -> Result<Self, BatteryError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| BatteryError::ParamsFile(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// The shipped LiFePO₄ parameter set (reference-cell level).
    pub fn lfp_reference() -> Self {
        Self::from_toml_str(DEFAULT_PARAMS_TOML).expect("shipped parameter file is valid")
    }

    pub fn validate(&self) -> Result<(), BatteryError> {
        let rates = [
            ("k_cal_ref", self.k_cal_ref),
            ("k_cyc_ht_ref", self.k_cyc_ht_ref),
            ("k_cyc_lt_ref", self.k_cyc_lt_ref),
            ("k_cyc_lthsoc_ref", self.k_cyc_lthsoc_ref),
        ];
        for (name, v) in rates {
            if !(v >= 0.0) {
                return Err(BatteryError::InvalidParams(format!("{name} must be >= 0")));
            }
        }
        if !(self.t_ref > 0.0) {
            return Err(BatteryError::InvalidParams("t_ref must be > 0".into()));
        }
        if !(self.reference_capacity_ah > 0.0) {
            return Err(BatteryError::InvalidParams("reference capacity must be > 0".into()));
        }
        if !(self.min_age_h >= 0.0) {
            return Err(BatteryError::InvalidParams("min_age_h must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.soc_ref) {
            return Err(BatteryError::InvalidParams("soc_ref outside [0, 1]".into()));
        }
        if !self.ocv.is_nondecreasing() {
            return Err(BatteryError::InvalidCurve(
                "ocv curve must be nondecreasing in SoC".into(),
            ));
        }
        if !self.anode_potential.is_monotone() {
            return Err(BatteryError::InvalidCurve(
                "anode potential curve must be monotone".into(),
            ));
        }
        Ok(())
    }

    /// Re-expresses the throughput-dependent constants for a battery of
    /// `capacity_ah`, keeping the stress per normalized throughput unchanged.
    pub fn scaled_to_capacity(&self, capacity_ah: f64) -> Self {
        let ratio = self.reference_capacity_ah / capacity_ah;
        Self {
            reference_capacity_ah: capacity_ah,
            k_cyc_ht_ref: self.k_cyc_ht_ref * ratio.sqrt(),
            k_cyc_lt_ref: self.k_cyc_lt_ref * ratio.sqrt(),
            k_cyc_lthsoc_ref: self.k_cyc_lthsoc_ref * ratio,
            i_ch_ref: self.i_ch_ref / ratio,
            ..self.clone()
        }
    }
}
