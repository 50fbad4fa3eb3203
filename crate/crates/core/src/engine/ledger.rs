use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EngineError, YearlyMetrics};

/// One executed hour. Energies in kWh, prices and costs in €.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LedgerRow {
    pub hour: usize,
    pub price: f64,
    pub hl_actual: f64,
    /// Latest prediction made for this hour before it was observed; equal
    /// to the actual load where none was made.
    pub hl_predicted: f64,
    pub e_g2v: f64,
    pub e_g2h: f64,
    pub e_v2g: f64,
    pub e_v2h: f64,
    /// End of hour.
    pub soc: f64,
    /// Goal shortfall, SoC fraction.
    pub s: f64,
    /// Capacity loss this hour, %.
    pub bd_increment: f64,
    pub ec: f64,
    pub bc: f64,
    /// Energy drawn by driving.
    pub e_drive: f64,
}

impl LedgerRow {
    /// Total energy through the battery this hour.
    pub fn battery_throughput(&self) -> f64 {
        self.e_g2v + self.e_v2g + self.e_v2h + self.e_drive
    }
}

pub fn write_ledger_csv(path: &Path, rows: &[LedgerRow]) -> Result<(), EngineError> {
    let io = |e: csv::Error| EngineError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush()
        .map_err(|e| EngineError::Io(format!("{}: {e}", path.display())))
}

pub fn read_ledger_csv(path: &Path) -> Result<Vec<LedgerRow>, EngineError> {
    let io = |e: csv::Error| EngineError::Io(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    r.deserialize().map(|row| row.map_err(io)).collect()
}

/// Largest deviations found by [`audit_ledger`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LedgerAudit {
    /// Negative flows, charger limits and SoC bounds, kWh or SoC.
    pub bound_violation: f64,
    /// |g2h + v2h − HL|, kWh.
    pub balance_error: f64,
    /// SoC recursion residual.
    pub soc_recursion_error: f64,
    /// |Σ ec − EC| and |Σ bc − BC|, €.
    pub energy_cost_error: f64,
    pub battery_cost_error: f64,
    /// |FC − EC − BC|, €.
    pub total_cost_error: f64,
    /// |BD − BD_cal − BD_cyc|, %.
    pub degradation_split_error: f64,
    /// Hours with simultaneous driving and grid or home flows.
    pub driving_flow_hours: usize,
}

impl LedgerAudit {
    /// True when every check is within the stated tolerances.
    pub fn passes(&self) -> bool {
        self.bound_violation <= 1e-6
            && self.balance_error <= 1e-9
            && self.soc_recursion_error <= 1e-9
            && self.energy_cost_error <= 1e-6
            && self.battery_cost_error <= 1e-6
            && self.total_cost_error <= 1e-6
            && self.degradation_split_error <= 1e-9
            && self.driving_flow_hours == 0
    }
}

/// Recomputes the per-hour constraints and the yearly sums from the ledger.
pub fn audit_ledger(
    metrics: &YearlyMetrics,
    ledger: &[LedgerRow],
    capacity_kwh: f64,
    max_hourly_kwh: f64,
) -> LedgerAudit {
    let mut a = LedgerAudit::default();
    let mut soc = metrics.initial_soc;
    let (mut ec, mut bc) = (0.0, 0.0);
    for r in ledger {
        let flows = [r.e_g2v, r.e_g2h, r.e_v2g, r.e_v2h, r.e_drive];
        let mut worst = flows.iter().fold(0.0_f64, |m, v| m.max(-v));
        worst = worst
            .max(r.e_g2v - max_hourly_kwh)
            .max(r.e_v2g + r.e_v2h - max_hourly_kwh)
            .max(-r.soc)
            .max(r.soc - 1.0);
        a.bound_violation = a.bound_violation.max(worst);
        a.balance_error = a.balance_error.max((r.e_g2h + r.e_v2h - r.hl_actual).abs());
        let expected = soc + (r.e_g2v - r.e_v2g - r.e_v2h - r.e_drive) / capacity_kwh;
        a.soc_recursion_error = a.soc_recursion_error.max((expected - r.soc).abs());
        soc = r.soc;
        if r.e_drive > 0.0 && (r.e_g2v > 0.0 || r.e_v2g > 0.0 || r.e_v2h > 0.0) {
            a.driving_flow_hours += 1;
        }
        ec += r.ec;
        bc += r.bc;
    }
    a.energy_cost_error = (ec - metrics.ec).abs();
    a.battery_cost_error = (bc - metrics.bc).abs();
    a.total_cost_error = (metrics.fc - metrics.ec - metrics.bc).abs();
    a.degradation_split_error = (metrics.bd - metrics.bd_cal - metrics.bd_cyc).abs();
    a
}
