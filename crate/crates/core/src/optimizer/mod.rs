//! Per-parking-window nonlinear program.
//!
//! Decision variables per hour are the four energy flows (V2G, V2H, G2V,
//! G2H) and a slack on the pickup SoC goal. G2H is eliminated through the
//! load balance and SoC through its recursion, which leaves an NLP with a
//! smooth nonlinear objective (energy cost + battery aging cost + slack
//! penalty) and purely linear inequality constraints. It is solved by a
//! primal-dual interior-point method ([`ipm`]).

mod ipm;
mod oracle;
mod problem;

pub use oracle::{brute_force_oracle, brute_force_oracle_with_limits, OracleLimits};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{BatteryError, BatteryModel, DegradationState};

use problem::{Layout, WindowProblem};

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("schedule has {got} hours, window has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("oracle refused: {0}")]
    OracleGuard(String),
    #[error("solver breakdown: {0}")]
    Numerical(String),
    #[error(transparent)]
    Battery(#[from] BatteryError),
}

/// Hourly buy prices and the sell/buy price ratio γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffSeries {
    /// €/kWh
    pub prices: Vec<f64>,
    pub price_ratio: f64,
}

impl TariffSeries {
    pub fn new(prices: Vec<f64>, price_ratio: f64) -> Result<Self, OptimizerError> {
        if !(0.0..=1.0).contains(&price_ratio) {
            return Err(OptimizerError::InvalidWindow(format!(
                "price ratio {price_ratio} outside [0, 1]"
            )));
        }
        if let Some(p) = prices.iter().find(|p| !p.is_finite()) {
            return Err(OptimizerError::InvalidWindow(format!("non-finite price {p}")));
        }
        Ok(Self { prices, price_ratio })
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// Energy cost of one hour: purchases minus V2G revenue, €.
pub fn energy_cost(flows: &HourFlows, price: f64, price_ratio: f64) -> f64 {
    (flows.e_g2v + flows.e_g2h) * price - flows.e_v2g * price_ratio * price
}

/// One optimization problem: the hours from `start_hour` until pickup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationWindow {
    pub start_hour: usize,
    pub prices: Vec<f64>,
    pub price_ratio: f64,
    /// kWh per hour.
    pub predicted_load: Vec<f64>,
    pub soc_initial: f64,
    /// Required SoC at the end of each hour (nonzero only at pickup).
    pub soc_goal: Vec<f64>,
    /// kWh per hour; `None` is unbounded.
    pub grid_limit: Vec<Option<f64>>,
    pub v2g_enabled: bool,
    pub v2h_enabled: bool,
    pub degradation: DegradationState,
    pub battery: BatteryModel,
}

impl OptimizationWindow {
    /// Bidirectional window without a SoC goal and with an unbounded grid.
    pub fn new(
        battery: BatteryModel,
        degradation: DegradationState,
        tariff: &TariffSeries,
        predicted_load: Vec<f64>,
        soc_initial: f64,
    ) -> Self {
        let h = tariff.len();
        Self {
            start_hour: 0,
            prices: tariff.prices.clone(),
            price_ratio: tariff.price_ratio,
            predicted_load,
            soc_initial,
            soc_goal: vec![0.0; h],
            grid_limit: vec![None; h],
            v2g_enabled: true,
            v2h_enabled: true,
            degradation,
            battery,
        }
    }

    /// Requires `goal` at the end of the last hour.
    pub fn with_final_goal(mut self, goal: f64) -> Self {
        if let Some(last) = self.soc_goal.last_mut() {
            *last = goal;
        }
        self
    }

    pub fn with_grid_limit(mut self, limit: Vec<Option<f64>>) -> Self {
        self.grid_limit = limit;
        self
    }

    pub fn with_start_hour(mut self, start_hour: usize) -> Self {
        self.start_hour = start_hour;
        self
    }

    /// Copy with V2G and V2H disabled.
    pub fn unidirectional(&self) -> Self {
        Self {
            v2g_enabled: false,
            v2h_enabled: false,
            ..self.clone()
        }
    }

    pub fn horizon(&self) -> usize {
        self.prices.len()
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let h = self.horizon();
        let bad = |m: String| Err(OptimizerError::InvalidWindow(m));
        if h == 0 {
            return bad("horizon must be at least one hour".into());
        }
        for (name, len) in [
            ("predicted_load", self.predicted_load.len()),
            ("soc_goal", self.soc_goal.len()),
            ("grid_limit", self.grid_limit.len()),
        ] {
            if len != h {
                return bad(format!("{name} has {len} entries, horizon is {h}"));
            }
        }
        if !(0.0..=1.0).contains(&self.soc_initial) {
            return bad(format!("initial SoC {} outside [0, 1]", self.soc_initial));
        }
        if !(0.0..=1.0).contains(&self.price_ratio) {
            return bad(format!("price ratio {} outside [0, 1]", self.price_ratio));
        }
        if self.prices.iter().any(|p| !p.is_finite()) {
            return bad("non-finite price".into());
        }
        if let Some(l) = self.predicted_load.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return bad(format!("invalid predicted load {l}"));
        }
        if let Some(g) = self.soc_goal.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return bad(format!("SoC goal {g} outside [0, 1]"));
        }
        for (t, limit) in self.grid_limit.iter().enumerate() {
            if let Some(g) = limit {
                if *g < self.predicted_load[t] - self.battery.spec.max_hourly_energy_kwh {
                    return bad(format!("grid limit {g} cannot cover the load in hour {t}"));
                }
            }
        }
        Ok(())
    }
}

/// Energy flows of one hour, kWh, and the resulting state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HourFlows {
    pub e_v2g: f64,
    pub e_v2h: f64,
    pub e_g2v: f64,
    pub e_g2h: f64,
    /// Shortfall below the SoC goal, SoC fraction.
    pub slack: f64,
    /// SoC at the end of the hour.
    pub soc: f64,
}

impl HourFlows {
    pub fn battery_in(&self) -> f64 {
        self.e_g2v
    }

    pub fn battery_out(&self) -> f64 {
        self.e_v2g + self.e_v2h
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FlowSchedule {
    pub hours: Vec<HourFlows>,
}

impl FlowSchedule {
    pub fn len(&self) -> usize {
        self.hours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hours.is_empty()
    }

    /// Schedule with the first `n` hours removed; used as a warm start for
    /// the next re-optimization.
    pub fn shifted(&self, n: usize) -> Self {
        Self {
            hours: self.hours.iter().skip(n).copied().collect(),
        }
    }

    /// Builds a consistent schedule from raw flows: recomputes G2H from the
    /// load, SoC from the recursion and the slack from the goal.
    pub fn from_flows(window: &OptimizationWindow, flows: &[(f64, f64, f64)]) -> Self {
        let eb = window.battery.spec.capacity_kwh;
        let mut soc = window.soc_initial;
        let hours = flows
            .iter()
            .enumerate()
            .map(|(t, &(g2v, v2g, v2h))| {
                soc += (g2v - v2g - v2h) / eb;
                HourFlows {
                    e_v2g: v2g,
                    e_v2h: v2h,
                    e_g2v: g2v,
                    e_g2h: window.predicted_load[t] - v2h,
                    slack: (window.soc_goal[t] - soc).max(0.0),
                    soc,
                }
            })
            .collect();
        Self { hours }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub kkt_tolerance: f64,
    pub max_iterations: usize,
    /// € per SoC percentage point of shortfall.
    pub slack_penalty_weight: f64,
    pub warm_start: bool,
    /// Width of the logistic SoC gate; 0 evaluates the exact signum gate.
    pub gate_smoothing_eps: f64,
    /// Evaluate √Q denominators at their window-start values.
    pub degradation_denominator_freeze: bool,
    /// Lower bound on frozen √Q denominators, Ah.
    pub throughput_floor_ah: f64,
    /// Corner blend half-width for the OCV and anode tables, SoC fraction.
    pub curve_smoothing_width: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kkt_tolerance: 1e-8,
            max_iterations: 200,
            slack_penalty_weight: 10.0,
            warm_start: true,
            gate_smoothing_eps: 0.01,
            degradation_denominator_freeze: true,
            throughput_floor_ah: 1.0,
            curve_smoothing_width: 0.005,
        }
    }
}

impl SolverConfig {
    /// Objective as accounted by the simulation: exact gate, exact tables
    /// and post-increment denominators.
    pub fn exact_accounting(&self) -> Self {
        Self {
            gate_smoothing_eps: 0.0,
            degradation_denominator_freeze: false,
            curve_smoothing_width: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        if !(self.kkt_tolerance > 0.0)
            || !(self.slack_penalty_weight > 0.0)
            || !(self.gate_smoothing_eps >= 0.0)
            || !(self.curve_smoothing_width >= 0.0)
            || !(self.throughput_floor_ah > 0.0)
        {
            return Err(OptimizerError::InvalidWindow(
                "tolerance, penalty and floor must be positive, smoothing widths nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Constraint family of the window problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    Nonnegativity,
    ChargeLimit,
    DischargeLimit,
    SocBounds,
    SocRecursion,
    SocGoal,
    LoadBalance,
    GridLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ConstraintKind,
    pub hour: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveReport {
    pub objective_value: f64,
    pub energy_cost: f64,
    pub battery_cost: f64,
    pub slack_penalty: f64,
    /// Sum of SoC shortfalls, SoC fraction.
    pub slack_total: f64,
    /// Capacity loss over the window, percent.
    pub degradation_percent: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    pub max_constraint_violation: f64,
    pub worst_violation: Option<Violation>,
}

/// Minimizes energy + battery + slack cost over the window.
pub fn solve_window(
    window: &OptimizationWindow,
    cfg: &SolverConfig,
) -> Result<(FlowSchedule, SolveReport), OptimizerError> {
    solve_window_from(window, cfg, None)
}

/// Same as [`solve_window`], starting from `warm` when `cfg.warm_start` is set.
pub fn solve_window_from(
    window: &OptimizationWindow,
    cfg: &SolverConfig,
    warm: Option<&FlowSchedule>,
) -> Result<(FlowSchedule, SolveReport), OptimizerError> {
    window.validate()?;
    cfg.validate()?;
    let layout = Layout::new(window);
    let problem = WindowProblem::new(window, cfg, &layout);
    let x0 = match warm {
        Some(w) if cfg.warm_start => layout.pack(window, w),
        _ => layout.cold_start(window),
    };
    let (a, b) = layout.constraints(window);
    let opts = ipm::IpmOptions {
        tolerance: cfg.kkt_tolerance,
        max_iterations: cfg.max_iterations,
    };
    let result = ipm::solve(&problem, &a, &b, &x0, &opts)?;
    let schedule = layout.unpack(window, result.x.as_slice());
    let mut report = evaluate_objective(window, &schedule, cfg)?;
    report.iterations = result.iterations;
    report.kkt_residual = result.kkt_residual;
    report.converged = result.converged && report.max_constraint_violation <= 1e-6;
    Ok((schedule, report))
}

/// Unidirectional smart charging: V2G and V2H fixed at zero.
pub fn solve_window_unidirectional(
    window: &OptimizationWindow,
    cfg: &SolverConfig,
) -> Result<(FlowSchedule, SolveReport), OptimizerError> {
    solve_window(&window.unidirectional(), cfg)
}

/// Recomputes the objective (with the gate and denominators of `cfg`) and
/// audits every constraint for an arbitrary schedule.
pub fn evaluate_objective(
    window: &OptimizationWindow,
    flows: &FlowSchedule,
    cfg: &SolverConfig,
) -> Result<SolveReport, OptimizerError> {
    window.validate()?;
    if flows.len() != window.horizon() {
        return Err(OptimizerError::DimensionMismatch {
            expected: window.horizon(),
            got: flows.len(),
        });
    }
    let model = problem::CostModel::new(window, cfg);
    let breakdown = model.evaluate(flows)?;
    let worst = audit(window, flows);
    Ok(SolveReport {
        objective_value: breakdown.energy + breakdown.battery + breakdown.penalty,
        energy_cost: breakdown.energy,
        battery_cost: breakdown.battery,
        slack_penalty: breakdown.penalty,
        slack_total: flows.hours.iter().map(|h| h.slack).sum(),
        degradation_percent: breakdown.degradation,
        iterations: 0,
        converged: worst.is_none_or(|v| v.magnitude <= 1e-6),
        kkt_residual: 0.0,
        max_constraint_violation: worst.map_or(0.0, |v| v.magnitude),
        worst_violation: worst,
    })
}

/// Largest violation of the window constraints, if any is positive.
pub fn audit(window: &OptimizationWindow, flows: &FlowSchedule) -> Option<Violation> {
    let spec = &window.battery.spec;
    let e_max = spec.max_hourly_energy_kwh;
    let eb = spec.capacity_kwh;
    let mut worst: Option<Violation> = None;
    let mut note = |kind, hour, magnitude: f64| {
        if magnitude > 0.0 && worst.is_none_or(|w| magnitude > w.magnitude) {
            worst = Some(Violation { kind, hour, magnitude });
        }
    };
    let mut soc_prev = window.soc_initial;
    for (t, h) in flows.hours.iter().enumerate() {
        let most_negative = [h.e_v2g, h.e_v2h, h.e_g2v, h.e_g2h, h.slack]
            .into_iter()
            .fold(0.0_f64, |m, v| m.max(-v));
        note(ConstraintKind::Nonnegativity, t, most_negative);
        if !window.v2g_enabled {
            note(ConstraintKind::Nonnegativity, t, h.e_v2g.abs());
        }
        if !window.v2h_enabled {
            note(ConstraintKind::Nonnegativity, t, h.e_v2h.abs());
        }
        note(ConstraintKind::ChargeLimit, t, h.e_g2v - e_max);
        note(ConstraintKind::DischargeLimit, t, h.e_v2g + h.e_v2h - e_max);
        note(ConstraintKind::SocBounds, t, (-h.soc).max(h.soc - 1.0));
        let expected = soc_prev + (h.e_g2v - h.e_v2g - h.e_v2h) / eb;
        note(ConstraintKind::SocRecursion, t, (h.soc - expected).abs());
        note(ConstraintKind::SocGoal, t, window.soc_goal[t] - h.soc - h.slack);
        note(
            ConstraintKind::LoadBalance,
            t,
            (h.e_g2h + h.e_v2h - window.predicted_load[t]).abs(),
        );
        if let Some(g) = window.grid_limit[t] {
            note(ConstraintKind::GridLimit, t, h.e_g2v + h.e_g2h - g);
        }
        soc_prev = h.soc;
    }
    worst
}

/// The aging model as the solver sees it for `cfg` (gate, denominators and
/// curve smoothing).
pub fn solver_aging_context<'a>(
    window: &'a OptimizationWindow,
    cfg: &SolverConfig,
) -> crate::battery::AgingContext<'a> {
    problem::aging_context(window, cfg)
}

/// Analytic and central-difference gradients of the solver objective with
/// respect to its decision vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientComparison {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradientComparison {
    /// Largest |a − n| relative to the larger gradient's max-norm.
    pub fn max_relative_error(&self, abs_floor: f64) -> f64 {
        relative_error(&self.analytic, &self.numeric, abs_floor)
    }
}

/// max |a − n| over max(‖a‖∞, ‖n‖∞); zero when both norms are at or below
/// `abs_floor`.
pub(crate) fn relative_error(a: &[f64], n: &[f64], abs_floor: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let scale = norm(a).max(norm(n));
    if scale <= abs_floor {
        return 0.0;
    }
    a.iter().zip(n).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max) / scale
}

/// Fourth-order central difference of `f` at 0.
pub(crate) fn central_difference<E>(f: impl Fn(f64) -> Result<f64, E>, h: f64) -> Result<f64, E> {
    Ok((f(-2.0 * h)? - 8.0 * f(-h)? + 8.0 * f(h)? - f(2.0 * h)?) / (12.0 * h))
}

/// Compares gradients at the decision vector that encodes `schedule`.
pub fn compare_objective_gradient(
    window: &OptimizationWindow,
    cfg: &SolverConfig,
    schedule: &FlowSchedule,
    step: f64,
) -> Result<GradientComparison, OptimizerError> {
    window.validate()?;
    cfg.validate()?;
    if schedule.len() != window.horizon() {
        return Err(OptimizerError::DimensionMismatch {
            expected: window.horizon(),
            got: schedule.len(),
        });
    }
    let layout = Layout::new(window);
    let problem = WindowProblem::new(window, cfg, &layout);
    let x: Vec<f64> = layout.pack(window, schedule).iter().copied().collect();
    let (_, grad, _) = problem.derivatives(&x)?;
    let mut numeric = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let at = |delta: f64| {
            let mut xs = x.clone();
            xs[i] += delta;
            problem.value(&xs)
        };
        numeric.push(central_difference(at, step)?);
    }
    Ok(GradientComparison {
        analytic: grad.iter().copied().collect(),
        numeric,
    })
}

/// Window, schedule and report as pretty JSON, for bug reports.
pub fn dump_diagnostics(window: &OptimizationWindow, schedule: &FlowSchedule, report: &SolveReport) -> String {
    #[derive(Serialize)]
    struct Dump<'a> {
        window: &'a OptimizationWindow,
        schedule: &'a FlowSchedule,
        report: &'a SolveReport,
    }
    serde_json::to_string_pretty(&Dump {
        window,
        schedule,
        report,
    })
    .expect("window data is serializable")
}
