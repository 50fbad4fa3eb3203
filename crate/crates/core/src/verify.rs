//! Self-checks of the optimizer: continuous solutions against exhaustive
//! search on small windows, and automatic derivatives against central
//! differences.

use std::time::Instant;

use num_dual::Dual64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::battery::{BatteryModel, DegradationState, MechanismIncrements};
use crate::optimizer::{
    brute_force_oracle, central_difference, compare_objective_gradient, evaluate_objective, relative_error,
    solve_window, solver_aging_context, FlowSchedule, OptimizationWindow, OptimizerError, SolverConfig, TariffSeries,
};
use crate::parallel;

/// Difference step over decision variables, kWh.
const ENERGY_STEP: f64 = 3e-4;
/// Difference step for single-hour aging; must stay well below the SoC
/// curve smoothing width.
const AGING_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub oracle_cases: usize,
    pub oracle_horizon: usize,
    pub grid_step_kwh: f64,
    /// Continuous objective may exceed the oracle by at most this, €.
    pub tolerance_eur: f64,
    /// ... and undercut it by at most this, €.
    pub lower_margin_eur: f64,
    pub gradient_points: usize,
    pub gradient_rel_tolerance: f64,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            oracle_cases: 50,
            oracle_horizon: 3,
            grid_step_kwh: 0.5,
            tolerance_eur: 1e-3,
            lower_margin_eur: 0.05,
            gradient_points: 100,
            gradient_rel_tolerance: 1e-5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCase {
    pub index: usize,
    pub prices: Vec<f64>,
    pub load: Vec<f64>,
    pub price_ratio: f64,
    pub soc_initial: f64,
    pub soc_goal: Option<f64>,
    /// Exact objective of the solver's schedule, €.
    pub continuous: f64,
    pub oracle: f64,
    pub converged: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCase {
    pub index: usize,
    pub horizon: usize,
    pub frozen_denominators: bool,
    /// Worst entry error over the gradient's max-norm.
    pub objective_rel_error: f64,
    /// Calendar, high-temperature cycle, low-temperature cycle and
    /// low-temperature high-SoC cycle aging.
    pub mechanism_rel_errors: [f64; 4],
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub config: VerifyConfig,
    pub oracle_cases: Vec<OracleCase>,
    pub gradient_cases: Vec<GradientCase>,
    pub oracle_failures: usize,
    pub gradient_failures: usize,
    pub max_excess_eur: f64,
    pub max_undercut_eur: f64,
    pub max_gradient_rel_error: f64,
    /// Wall-clock times; left out of the file so reports are reproducible.
    #[serde(skip)]
    pub oracle_seconds: f64,
    #[serde(skip)]
    pub gradient_seconds: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.oracle_failures == 0 && self.gradient_failures == 0
    }
}

fn random_state(rng: &mut StdRng) -> DegradationState {
    let q_tot = rng.random_range(500.0..20_000.0);
    DegradationState {
        age_hours: rng.random_range(1440.0..9000.0),
        q_tot,
        q_ch: q_tot * rng.random_range(0.4..0.6),
        ..DegradationState::default()
    }
}

/// A random window whose loads and initial SoC sit on the oracle's energy
/// lattice. Half of the windows carry a 0.8 pickup goal, reachable from a
/// lattice start.
pub fn random_oracle_window(rng: &mut StdRng, battery: &BatteryModel, horizon: usize, step: f64) -> OptimizationWindow {
    let eb = battery.spec.capacity_kwh;
    let base = rng.random_range(0.04..0.25);
    let prices: Vec<f64> = (0..horizon).map(|_| base * rng.random_range(0.4..2.2)).collect();
    let load: Vec<f64> = (0..horizon)
        .map(|_| (rng.random_range(0.0..3.0_f64) / step).round() * step)
        .collect();
    let gamma = rng.random_range(0.0..=1.0);
    let tariff = TariffSeries::new(prices, gamma).expect("valid random tariff");
    let goal = rng.random_bool(0.5).then_some(0.8);
    let soc0 = match goal {
        Some(g) => g - rng.random_range(0..=50) as f64 * step / eb,
        None => (rng.random_range(0.15..0.95_f64) * eb / step).round() * step / eb,
    };
    let w = OptimizationWindow::new(battery.clone(), random_state(rng), &tariff, load, soc0);
    match goal {
        Some(g) => w.with_final_goal(g),
        None => w,
    }
}

fn oracle_case(
    index: usize,
    w: &OptimizationWindow,
    cfg: &VerifyConfig,
    solver: &SolverConfig,
) -> Result<OracleCase, OptimizerError> {
    let (s, r) = solve_window(w, solver)?;
    let continuous = evaluate_objective(w, &s, &solver.exact_accounting())?.objective_value;
    let (_, oracle) = brute_force_oracle(w, cfg.grid_step_kwh, solver)?;
    let passed = r.converged && continuous <= oracle + cfg.tolerance_eur && continuous >= oracle - cfg.lower_margin_eur;
    Ok(OracleCase {
        index,
        prices: w.prices.clone(),
        load: w.predicted_load.clone(),
        price_ratio: w.price_ratio,
        soc_initial: w.soc_initial,
        soc_goal: w.soc_goal.last().copied().filter(|g| *g > 0.0),
        continuous,
        oracle,
        converged: r.converged,
        passed,
    })
}

/// A feasible schedule with random flows that keeps SoC inside [0.05, 0.95]
/// of the room available each hour.
pub fn random_feasible_schedule(rng: &mut StdRng, w: &OptimizationWindow) -> FlowSchedule {
    let spec = &w.battery.spec;
    let eb = spec.capacity_kwh;
    let emax = spec.max_hourly_energy_kwh;
    let mut soc = w.soc_initial;
    let flows: Vec<(f64, f64, f64)> = (0..w.horizon())
        .map(|t| {
            let g2v = rng.random_range(0.05..0.9) * emax.min((1.0 - soc) * eb);
            let cap = emax.min((soc * eb + g2v) * 0.9);
            let v2h = if w.v2h_enabled {
                rng.random_range(0.05..0.9) * cap.min(w.predicted_load[t])
            } else {
                0.0
            };
            let v2g = if w.v2g_enabled {
                rng.random_range(0.05..0.9) * (cap - v2h).max(0.0)
            } else {
                0.0
            };
            soc += (g2v - v2g - v2h) / eb;
            (g2v, v2g, v2h)
        })
        .collect();
    FlowSchedule::from_flows(w, &flows)
}

/// Partial derivatives of each aging mechanism's hourly increment with
/// respect to (SoC before, SoC after, energy in, energy out): forward-mode
/// dual numbers against central differences. Returns the worst relative
/// error per mechanism.
pub fn mechanism_gradient_errors(
    w: &OptimizationWindow,
    solver: &SolverConfig,
    state: &DegradationState,
    point: [f64; 4],
    step: f64,
) -> Result<[f64; 4], OptimizerError> {
    let ctx = solver_aging_context(w, solver);
    let eval = |z: [Dual64; 4]| -> Result<MechanismIncrements<Dual64>, OptimizerError> {
        Ok(ctx
            .hour(
                state.age_hours,
                Dual64::from_re(state.q_tot),
                Dual64::from_re(state.q_ch),
                z[0],
                z[1],
                z[2],
                z[3],
                1.0,
            )?
            .increments)
    };
    let parts = |m: &MechanismIncrements<Dual64>| [m.calendar, m.cycle_ht, m.cycle_lt, m.cycle_lthsoc];
    let mut analytic = [[0.0; 4]; 4];
    let mut numeric = [[0.0; 4]; 4];
    for i in 0..4 {
        let z: [Dual64; 4] = std::array::from_fn(|k| {
            let d = Dual64::from_re(point[k]);
            if k == i {
                d.derivative()
            } else {
                d
            }
        });
        for (m, a) in parts(&eval(z)?).iter().enumerate() {
            analytic[m][i] = a.eps;
            let shifted = |delta: f64| {
                let z = std::array::from_fn(|k| Dual64::from_re(point[k] + if k == i { delta } else { 0.0 }));
                eval(z).map(|inc| parts(&inc)[m].re)
            };
            numeric[m][i] = central_difference(shifted, step)?;
        }
    }
    Ok(std::array::from_fn(|m| {
        relative_error(&analytic[m], &numeric[m], 1e-12)
    }))
}

fn gradient_case(
    index: usize,
    seed: u64,
    cfg: &VerifyConfig,
    battery: &BatteryModel,
) -> Result<GradientCase, OptimizerError> {
    let mut rng = StdRng::seed_from_u64(seed);
    let horizon = rng.random_range(1..=6);
    let mut w = random_oracle_window(&mut rng, battery, horizon, 0.5);
    w.predicted_load
        .iter_mut()
        .for_each(|l| *l += rng.random_range(0.0..0.5));
    w.soc_initial = rng.random_range(0.1..0.9);
    let frozen = index.is_multiple_of(2);
    let solver = SolverConfig {
        degradation_denominator_freeze: frozen,
        ..SolverConfig::default()
    };
    let s = random_feasible_schedule(&mut rng, &w);
    let objective_rel_error = compare_objective_gradient(&w, &solver, &s, ENERGY_STEP)?.max_relative_error(1e-12);

    let t = rng.random_range(0..horizon);
    let soc_prev = if t == 0 { w.soc_initial } else { s.hours[t - 1].soc };
    let h = s.hours[t];
    let mechanism_rel_errors = mechanism_gradient_errors(
        &w,
        &solver,
        &w.degradation,
        [soc_prev, h.soc, h.battery_in(), h.battery_out()],
        AGING_STEP,
    )?;
    let worst = mechanism_rel_errors.iter().copied().fold(objective_rel_error, f64::max);
    Ok(GradientCase {
        index,
        horizon,
        frozen_denominators: frozen,
        objective_rel_error,
        mechanism_rel_errors,
        passed: worst < cfg.gradient_rel_tolerance,
    })
}

/// Runs both suites. Cases are independent and spread over the thread pool.
pub fn run_verification(cfg: &VerifyConfig, battery: &BatteryModel) -> Result<VerifyReport, OptimizerError> {
    let solver = SolverConfig::default();
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let windows: Vec<OptimizationWindow> = (0..cfg.oracle_cases)
        .map(|_| random_oracle_window(&mut rng, battery, cfg.oracle_horizon, cfg.grid_step_kwh))
        .collect();
    let indexed: Vec<(usize, &OptimizationWindow)> = windows.iter().enumerate().collect();
    let t0 = Instant::now();
    let oracle_cases = parallel::map(&indexed, |(i, w)| oracle_case(*i, w, cfg, &solver))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let oracle_seconds = t0.elapsed().as_secs_f64();

    let seeds: Vec<(usize, u64)> = (0..cfg.gradient_points).map(|i| (i, rng.random())).collect();
    let t1 = Instant::now();
    let gradient_cases = parallel::map(&seeds, |(i, s)| gradient_case(*i, *s, cfg, battery))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let gradient_seconds = t1.elapsed().as_secs_f64();

    Ok(VerifyReport {
        oracle_failures: oracle_cases.iter().filter(|c| !c.passed).count(),
        gradient_failures: gradient_cases.iter().filter(|c| !c.passed).count(),
        max_excess_eur: oracle_cases
            .iter()
            .map(|c| c.continuous - c.oracle)
            .reduce(f64::max)
            .unwrap_or(0.0),
        max_undercut_eur: oracle_cases
            .iter()
            .map(|c| c.oracle - c.continuous)
            .reduce(f64::max)
            .unwrap_or(0.0),
        max_gradient_rel_error: gradient_cases
            .iter()
            .flat_map(|c| c.mechanism_rel_errors.into_iter().chain([c.objective_rel_error]))
            .fold(0.0, f64::max),
        config: cfg.clone(),
        oracle_cases,
        gradient_cases,
        oracle_seconds,
        gradient_seconds,
    })
}
