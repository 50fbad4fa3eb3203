use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{run_year, EngineError, LoadPredictor, Scenario, SimulationConfig, YearlyMetrics};
use crate::parallel;

/// Parameter lists of a sweep; every combination is one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub gammas: Vec<f64>,
    pub capacities_kwh: Vec<f64>,
    pub load_multipliers: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            gammas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            capacities_kwh: vec![41.0, 61.5, 82.0, 102.5],
            load_multipliers: vec![1.0, 4.0, 8.0],
        }
    }
}

impl SweepGrid {
    pub fn cells(&self) -> usize {
        self.gammas.len() * self.capacities_kwh.len() * self.load_multipliers.len()
    }

    fn validate(&self) -> Result<(), EngineError> {
        if self.cells() == 0 {
            return Err(EngineError::Config("sweep lists must be nonempty".into()));
        }
        Ok(())
    }
}

/// One row of the long-format sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub capacity_kwh: f64,
    pub load_multiplier: f64,
    pub gamma: f64,
    pub fc_a: f64,
    pub fc_b: f64,
    /// FC_B − FC_A
    pub gain: f64,
    pub ec_a: f64,
    pub bc_a: f64,
    pub bd_a: f64,
    pub ec_b: f64,
    pub bc_b: f64,
    pub bd_b: f64,
    pub e_v2g_a: f64,
    pub e_v2h_a: f64,
    pub solver_failures: usize,
}

#[derive(Debug, Clone, Copy)]
struct Task {
    capacity_kwh: f64,
    load_multiplier: f64,
    /// None for the Scenario B run, which does not depend on γ.
    gamma: Option<f64>,
}

fn run_task(base: &SimulationConfig, predictor: &dyn LoadPredictor, task: &Task) -> Result<YearlyMetrics, EngineError> {
    let mut cfg = base.clone();
    cfg.battery = base.battery.with_capacity(task.capacity_kwh)?;
    cfg.load_multiplier = task.load_multiplier;
    match task.gamma {
        Some(g) => {
            cfg.scenario = Scenario::Bidirectional;
            cfg.tariff.price_ratio = g;
        }
        None => cfg.scenario = Scenario::Unidirectional,
    }
    let m = run_year(&cfg, predictor)?;
    log::info!(
        "cell E_b {} kWh ×{} γ {:?}: {}",
        task.capacity_kwh,
        task.load_multiplier,
        task.gamma,
        m.summary_row()
    );
    Ok(m)
}

fn sweep_with<M>(
    base: &SimulationConfig,
    predictor: &dyn LoadPredictor,
    grid: &SweepGrid,
    map: M,
) -> Result<Vec<SweepCell>, EngineError>
where
    M: Fn(
        &[Task],
        &(dyn Fn(&Task) -> Result<YearlyMetrics, EngineError> + Sync),
    ) -> Vec<Result<YearlyMetrics, EngineError>>,
{
    grid.validate()?;
    let mut tasks = Vec::new();
    for &capacity_kwh in &grid.capacities_kwh {
        for &load_multiplier in &grid.load_multipliers {
            tasks.push(Task {
                capacity_kwh,
                load_multiplier,
                gamma: None,
            });
            for &g in &grid.gammas {
                tasks.push(Task {
                    capacity_kwh,
                    load_multiplier,
                    gamma: Some(g),
                });
            }
        }
    }
    let results = map(&tasks, &|t: &Task| run_task(base, predictor, t));
    let mut cells = Vec::with_capacity(grid.cells());
    let mut b: Option<YearlyMetrics> = None;
    for (task, result) in tasks.iter().zip(results) {
        let m = result?;
        match task.gamma {
            None => b = Some(m),
            Some(gamma) => {
                let b = b.as_ref().expect("B run precedes its A runs");
                cells.push(SweepCell {
                    capacity_kwh: task.capacity_kwh,
                    load_multiplier: task.load_multiplier,
                    gamma,
                    fc_a: m.fc,
                    fc_b: b.fc,
                    gain: b.fc - m.fc,
                    ec_a: m.ec,
                    bc_a: m.bc,
                    bd_a: m.bd,
                    ec_b: b.ec,
                    bc_b: b.bc,
                    bd_b: b.bd,
                    e_v2g_a: m.e_v2g,
                    e_v2h_a: m.e_v2h,
                    solver_failures: m.solver_failures + b.solver_failures,
                });
            }
        }
    }
    Ok(cells)
}

/// Runs Scenario A for every cell and Scenario B once per capacity and
/// load multiplier (B does not depend on γ). Cells run in parallel.
pub fn run_sweep(
    base: &SimulationConfig,
    predictor: &dyn LoadPredictor,
    grid: &SweepGrid,
) -> Result<Vec<SweepCell>, EngineError> {
    sweep_with(base, predictor, grid, |tasks, f| parallel::map(tasks, f))
}

/// [`run_sweep`] on the calling thread.
pub fn run_sweep_sequential(
    base: &SimulationConfig,
    predictor: &dyn LoadPredictor,
    grid: &SweepGrid,
) -> Result<Vec<SweepCell>, EngineError> {
    sweep_with(base, predictor, grid, |tasks, f| parallel::map_sequential(tasks, f))
}

pub fn write_sweep_csv(path: &Path, cells: &[SweepCell]) -> Result<(), EngineError> {
    let io = |e: csv::Error| EngineError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for c in cells {
        w.serialize(c).map_err(io)?;
    }
    w.flush()
        .map_err(|e| EngineError::Io(format!("{}: {e}", path.display())))
}
