//! Year-long online simulation: daily trips, receding-horizon optimization
//! while parked, exact aging accounting and yearly cost metrics.

mod ledger;
mod predictor;
mod setup;
mod sweep;
mod trips;

pub use ledger::{audit_ledger, read_ledger_csv, write_ledger_csv, LedgerAudit, LedgerRow};
pub use predictor::{ForecastPredictor, LoadPredictor, LoadView, OraclePredictor, PersistencePredictor};
pub use setup::{build_predictor, PredictorKind, RunInputs};
pub use sweep::{run_sweep, run_sweep_sequential, write_sweep_csv, SweepCell, SweepGrid};
pub use trips::{generate_trips, sample_truncated, Trip, TripModel, TripSchedule};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{BatteryError, BatteryModel, DegradationState};
use crate::data_io::HourlySeries;
use crate::forecaster::ForecastError;
use crate::optimizer::{
    energy_cost, solve_window_from, FlowSchedule, HourFlows, OptimizationWindow, OptimizerError, SolverConfig,
    TariffSeries,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("{what} series has {got} hours, need {needed}")]
    DataLength {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("state of charge would drop to {soc} while driving in hour {hour}")]
    SocDepleted { hour: usize, soc: f64 },
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Battery(#[from] BatteryError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Data(#[from] crate::data_io::DataError),
    #[error("{0}")]
    Io(String),
}

/// A: V2G and V2H allowed. B: smart charging only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "A")]
    Bidirectional,
    #[serde(rename = "B")]
    Unidirectional,
}

impl Scenario {
    pub fn label(self) -> &'static str {
        match self {
            Self::Bidirectional => "A",
            Self::Unidirectional => "B",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub scenario: Scenario,
    pub battery: BatteryModel,
    /// Retail prices and sell/buy ratio.
    pub tariff: TariffSeries,
    /// Simulated household load before the multiplier.
    pub loads: HourlySeries,
    /// Unscaled loads preceding hour 0, for predictor warm-up.
    pub load_prelude: Vec<f64>,
    pub load_multiplier: f64,
    pub hours: usize,
    pub initial_soc: f64,
    pub initial_age_h: f64,
    pub trips: TripModel,
    pub rng_seed: u64,
    /// Re-optimize when |actual − predicted| load exceeds this, kWh.
    pub mismatch_tolerance_kwh: f64,
    pub soc_goal: f64,
    pub solver: SolverConfig,
}

impl SimulationConfig {
    /// Defaults: Scenario A, SoC 0.6, 60-day-old battery, 0.8 pickup goal,
    /// re-optimization on any load deviation.
    pub fn new(battery: BatteryModel, tariff: TariffSeries, loads: HourlySeries) -> Self {
        let hours = tariff.len().min(loads.len());
        Self {
            scenario: Scenario::Bidirectional,
            battery,
            tariff,
            loads,
            load_prelude: Vec::new(),
            load_multiplier: 1.0,
            hours,
            initial_soc: 0.6,
            initial_age_h: 1440.0,
            trips: TripModel::default(),
            rng_seed: 42,
            mismatch_tolerance_kwh: 0.0,
            soc_goal: 0.8,
            solver: SolverConfig::default(),
        }
    }

    pub fn with_scenario(mut self, scenario: Scenario) -> Self {
        self.scenario = scenario;
        self
    }

    pub fn with_price_ratio(mut self, gamma: f64) -> Self {
        self.tariff.price_ratio = gamma;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Config(m));
        if self.hours == 0 {
            return bad("simulation needs at least one hour".into());
        }
        for (what, got) in [("price", self.tariff.len()), ("load", self.loads.len())] {
            if got < self.hours {
                return Err(EngineError::DataLength {
                    what,
                    needed: self.hours,
                    got,
                });
            }
        }
        if !(0.0..=1.0).contains(&self.tariff.price_ratio) {
            return bad(format!("price ratio {} outside [0, 1]", self.tariff.price_ratio));
        }
        if !(self.load_multiplier > 0.0 && self.load_multiplier.is_finite()) {
            return bad(format!("load multiplier {} must be positive", self.load_multiplier));
        }
        if !(0.0..=1.0).contains(&self.initial_soc) || !(0.0..=1.0).contains(&self.soc_goal) {
            return bad("initial SoC and goal must lie in [0, 1]".into());
        }
        if !(self.initial_age_h >= 0.0) {
            return bad("initial battery age must be ≥ 0".into());
        }
        if !(self.mismatch_tolerance_kwh >= 0.0) {
            return bad("mismatch tolerance must be ≥ 0".into());
        }
        if self.loads.values[..self.hours]
            .iter()
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return bad("loads must be finite and ≥ 0".into());
        }
        self.battery.spec.validate()?;
        self.trips.validate()?;
        self.solver.validate()?;
        Ok(())
    }
}

/// Yearly totals. Costs in €, degradation in % of nominal capacity,
/// energies in kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearlyMetrics {
    pub scenario: Scenario,
    pub price_ratio: f64,
    pub capacity_kwh: f64,
    pub load_multiplier: f64,
    pub rng_seed: u64,
    pub predictor: String,
    pub hours: usize,
    /// FC = EC + BC
    pub fc: f64,
    pub ec: f64,
    pub bc: f64,
    pub bd: f64,
    pub bd_cal: f64,
    pub bd_cyc: f64,
    pub bd_cyc_ht: f64,
    pub bd_cyc_lt: f64,
    pub bd_cyc_lthsoc: f64,
    /// All energy into and out of the battery, driving included.
    pub e_batt: f64,
    pub e_drive: f64,
    pub e_g2v: f64,
    pub e_g2h: f64,
    pub e_v2g: f64,
    pub e_v2h: f64,
    pub initial_soc: f64,
    pub final_soc: f64,
    pub sessions: usize,
    pub optimizations: usize,
    pub solver_failures: usize,
    /// Sessions that ended below the pickup goal.
    pub goal_shortfalls: usize,
    /// Worst constraint violation of any solved window.
    pub max_window_violation: f64,
    #[serde(skip)]
    pub ledger: Vec<LedgerRow>,
}

impl YearlyMetrics {
    /// One-line summary of costs, aging and battery energy.
    pub fn summary_row(&self) -> String {
        format!(
            "scenario {} | FC {:.2} € | EC {:.2} € | BC {:.2} € | BD {:.3} % | BD_cal {:.3} % | BD_cyc {:.3} % | E_batt {:.1} kWh",
            self.scenario, self.fc, self.ec, self.bc, self.bd, self.bd_cal, self.bd_cyc, self.e_batt
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

/// A parked interval `[start, end)`, with the pickup goal applying at the
/// end of hour `end − 1`.
#[derive(Debug, Clone, Copy)]
struct Session {
    start: usize,
    end: usize,
    goal: Option<f64>,
}

enum Phase {
    Park(Session),
    Drive {
        start: usize,
        end: usize,
        kwh_per_hour: f64,
    },
}

fn timeline(cfg: &SimulationConfig, trips: &TripSchedule) -> Vec<Phase> {
    let spec = &cfg.battery.spec;
    let kwh_per_km = spec.capacity_kwh / spec.driving_range_km;
    let mut phases = Vec::new();
    let mut parked_from = 0;
    for trip in &trips.trips {
        let pickup = 24 * trip.day + trip.pickup_hour;
        if pickup >= cfg.hours {
            break;
        }
        if pickup > parked_from {
            phases.push(Phase::Park(Session {
                start: parked_from,
                end: pickup,
                goal: Some(cfg.soc_goal),
            }));
        }
        let back = (24 * trip.day + trip.return_hour).min(cfg.hours);
        phases.push(Phase::Drive {
            start: pickup,
            end: back,
            kwh_per_hour: trip.hourly_energy(kwh_per_km),
        });
        parked_from = back;
    }
    // the vehicle leaves again after the horizon, so the last session keeps
    // the pickup goal instead of selling its reserve
    if parked_from < cfg.hours {
        phases.push(Phase::Park(Session {
            start: parked_from,
            end: cfg.hours,
            goal: Some(cfg.soc_goal),
        }));
    }
    phases
}

struct Plan {
    start: usize,
    schedule: FlowSchedule,
    loads: Vec<f64>,
}

struct Simulation<'a> {
    cfg: &'a SimulationConfig,
    predictor: &'a dyn LoadPredictor,
    loads: HourlySeries,
    prelude: Vec<f64>,
    cost_per_percent: f64,
    soc: f64,
    deg: DegradationState,
    ledger: Vec<LedgerRow>,
    optimizations: usize,
    failures: usize,
    shortfalls: usize,
    sessions: usize,
    max_violation: f64,
}

impl Simulation<'_> {
    fn bidirectional(&self) -> bool {
        self.cfg.scenario == Scenario::Bidirectional
    }

    fn window(&self, t: usize, session: &Session, loads: Vec<f64>) -> OptimizationWindow {
        let cfg = self.cfg;
        let n = session.end - t;
        let mut goal = vec![0.0; n];
        if let Some(g) = session.goal {
            goal[n - 1] = g;
        }
        OptimizationWindow {
            start_hour: t,
            prices: cfg.tariff.prices[t..session.end].to_vec(),
            price_ratio: cfg.tariff.price_ratio,
            predicted_load: loads,
            soc_initial: self.soc,
            soc_goal: goal,
            grid_limit: vec![None; n],
            v2g_enabled: self.bidirectional(),
            v2h_enabled: self.bidirectional(),
            degradation: self.deg,
            battery: cfg.battery.clone(),
        }
    }

    /// Loads assumed by a plan made at hour `t`: the observed load now and
    /// predictions after. Scenario B plans on actual loads.
    fn planning_loads(&self, t: usize, end: usize) -> Result<Vec<f64>, EngineError> {
        let mut loads = vec![self.loads.values[t]];
        if end - t > 1 {
            let rest = if self.bidirectional() {
                let view = LoadView {
                    series: &self.loads,
                    t,
                    scale: self.cfg.load_multiplier,
                    prelude: &self.prelude,
                };
                self.predictor.predict(&view, end - t - 1)?
            } else {
                self.loads.values[t + 1..end].to_vec()
            };
            if rest.len() != end - t - 1 || rest.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(EngineError::Config(format!(
                    "predictor {} returned an invalid forecast at hour {t}",
                    self.predictor.name()
                )));
            }
            loads.extend(rest);
        }
        Ok(loads)
    }

    fn solve(&mut self, t: usize, session: &Session, warm: Option<&FlowSchedule>) -> Result<Option<Plan>, EngineError> {
        let loads = self.planning_loads(t, session.end)?;
        let window = self.window(t, session, loads.clone());
        self.optimizations += 1;
        match solve_window_from(&window, &self.cfg.solver, warm) {
            Ok((schedule, report)) if report.converged => {
                self.max_violation = self.max_violation.max(report.max_constraint_violation);
                Ok(Some(Plan {
                    start: t,
                    schedule,
                    loads,
                }))
            }
            Ok((_, report)) => {
                self.failures += 1;
                log::warn!(
                    "hour {t}: solver did not converge (kkt {:.2e}, violation {:.2e}); charging toward the goal instead",
                    report.kkt_residual,
                    report.max_constraint_violation
                );
                Ok(None)
            }
            Err(OptimizerError::Numerical(m)) => {
                self.failures += 1;
                log::warn!("hour {t}: solver failed ({m}); charging toward the goal instead");
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Unidirectional charging toward the goal, as fast as the charger allows.
    fn fallback_flows(&self, session: &Session) -> (f64, f64, f64) {
        let spec = &self.cfg.battery.spec;
        let g2v = match session.goal {
            Some(goal) if goal > self.soc => ((goal - self.soc) * spec.capacity_kwh).min(spec.max_hourly_energy_kwh),
            _ => 0.0,
        };
        (g2v, 0.0, 0.0)
    }

    fn run_session(&mut self, session: Session) -> Result<(), EngineError> {
        self.sessions += 1;
        let eb = self.cfg.battery.spec.capacity_kwh;
        let tol = self.cfg.mismatch_tolerance_kwh;
        let mut plan: Option<Plan> = None;
        let mut last_plan: Option<FlowSchedule> = None;
        for t in session.start..session.end {
            let actual = self.loads.values[t];
            let predicted = plan.as_ref().map(|p| p.loads[t - p.start]);
            let stale = match predicted {
                None => true,
                Some(p) => (actual - p).abs() > tol,
            };
            if stale {
                let warm = last_plan
                    .as_ref()
                    .map(|s| s.shifted(s.len().saturating_sub(session.end - t)));
                plan = self.solve(t, &session, warm.as_ref())?;
                if let Some(p) = &plan {
                    last_plan = Some(p.schedule.clone());
                }
            }
            let (g2v, v2g, v2h) = match &plan {
                Some(p) => {
                    let h = p.schedule.hours[t - p.start];
                    (h.e_g2v, h.e_v2g, h.e_v2h)
                }
                None => self.fallback_flows(&session),
            };
            self.execute_parked(t, actual, predicted.unwrap_or(actual), (g2v, v2g, v2h), &session, eb)?;
        }
        if let Some(goal) = session.goal {
            if self.soc < goal - 1e-6 {
                self.shortfalls += 1;
            }
        }
        Ok(())
    }

    fn execute_parked(
        &mut self,
        t: usize,
        hl: f64,
        hl_predicted: f64,
        (g2v, v2g, v2h): (f64, f64, f64),
        session: &Session,
        eb: f64,
    ) -> Result<(), EngineError> {
        let mut g2v = g2v.max(0.0);
        let mut v2g = v2g.max(0.0);
        let mut v2h = v2h.max(0.0).min(hl);
        let mut soc = self.soc + (g2v - v2g - v2h) / eb;
        if soc > 1.0 {
            g2v = (g2v - (soc - 1.0) * eb).max(0.0);
            soc = self.soc + (g2v - v2g - v2h) / eb;
        }
        if soc < 0.0 {
            let mut deficit = -soc * eb;
            let cut = deficit.min(v2g);
            v2g -= cut;
            deficit -= cut;
            v2h = (v2h - deficit).max(0.0);
            soc = self.soc + (g2v - v2g - v2h) / eb;
        }
        let soc = soc.clamp(0.0, 1.0);
        let flows = HourFlows {
            e_v2g: v2g,
            e_v2h: v2h,
            e_g2v: g2v,
            e_g2h: hl - v2h,
            slack: match session.goal {
                Some(goal) if t + 1 == session.end => (goal - soc).max(0.0),
                _ => 0.0,
            },
            soc,
        };
        self.record(t, hl, hl_predicted, flows, 0.0)
    }

    fn drive(&mut self, t: usize, kwh: f64) -> Result<(), EngineError> {
        let eb = self.cfg.battery.spec.capacity_kwh;
        let soc = self.soc - kwh / eb;
        if soc < -1e-12 {
            return Err(EngineError::SocDepleted { hour: t, soc });
        }
        let hl = self.loads.values[t];
        let flows = HourFlows {
            e_g2h: hl,
            soc: soc.max(0.0),
            ..HourFlows::default()
        };
        self.record(t, hl, hl, flows, kwh)
    }

    fn record(&mut self, t: usize, hl: f64, hl_predicted: f64, f: HourFlows, e_drive: f64) -> Result<(), EngineError> {
        let price = self.cfg.tariff.prices[t];
        let (deg, inc) = self.cfg.battery.step(
            &self.deg,
            self.soc,
            f.soc,
            f.battery_in(),
            f.battery_out() + e_drive,
            1.0,
        )?;
        let bd_increment = inc.calendar + inc.cycle_ht + inc.cycle_lt + inc.cycle_lthsoc;
        self.ledger.push(LedgerRow {
            hour: t,
            price,
            hl_actual: hl,
            hl_predicted,
            e_g2v: f.e_g2v,
            e_g2h: f.e_g2h,
            e_v2g: f.e_v2g,
            e_v2h: f.e_v2h,
            soc: f.soc,
            s: f.slack,
            bd_increment,
            ec: energy_cost(&f, price, self.cfg.tariff.price_ratio),
            bc: self.cost_per_percent * bd_increment,
            e_drive,
        });
        self.deg = deg;
        self.soc = f.soc;
        Ok(())
    }
}

/// Simulates `cfg.hours` hours. Deterministic for a given config, seed
/// and predictor.
pub fn run_year(cfg: &SimulationConfig, predictor: &dyn LoadPredictor) -> Result<YearlyMetrics, EngineError> {
    cfg.validate()?;
    let days = cfg.hours.div_ceil(24);
    let trips = generate_trips(days, &cfg.trips, cfg.rng_seed)?;
    let k = cfg.load_multiplier;
    let mut loads = cfg.loads.scaled(k);
    loads.values.truncate(cfg.hours);
    let initial = DegradationState::with_age_hours(cfg.initial_age_h);
    let mut sim = Simulation {
        cfg,
        predictor,
        loads,
        prelude: cfg.load_prelude.iter().map(|v| v * k).collect(),
        cost_per_percent: cfg.battery.cost_per_percent(),
        soc: cfg.initial_soc,
        deg: initial,
        ledger: Vec::with_capacity(cfg.hours),
        optimizations: 0,
        failures: 0,
        shortfalls: 0,
        sessions: 0,
        max_violation: 0.0,
    };
    for phase in timeline(cfg, &trips) {
        match phase {
            Phase::Park(s) => sim.run_session(s)?,
            Phase::Drive {
                start,
                end,
                kwh_per_hour,
            } => {
                for t in start..end {
                    sim.drive(t, kwh_per_hour)?;
                }
            }
        }
    }
    let sum = |f: fn(&LedgerRow) -> f64| sim.ledger.iter().map(f).sum::<f64>();
    let ec = sum(|r| r.ec);
    let bc = sum(|r| r.bc);
    let d = &sim.deg;
    let bd_cyc = (d.bd_cyc_ht - initial.bd_cyc_ht)
        + (d.bd_cyc_lt - initial.bd_cyc_lt)
        + (d.bd_cyc_lthsoc - initial.bd_cyc_lthsoc);
    let bd_cal = d.bd_cal - initial.bd_cal;
    Ok(YearlyMetrics {
        scenario: cfg.scenario,
        price_ratio: cfg.tariff.price_ratio,
        capacity_kwh: cfg.battery.spec.capacity_kwh,
        load_multiplier: k,
        rng_seed: cfg.rng_seed,
        predictor: if cfg.scenario == Scenario::Bidirectional {
            predictor.name().to_string()
        } else {
            "actual".into()
        },
        hours: cfg.hours,
        fc: ec + bc,
        ec,
        bc,
        bd: bd_cal + bd_cyc,
        bd_cal,
        bd_cyc,
        bd_cyc_ht: d.bd_cyc_ht - initial.bd_cyc_ht,
        bd_cyc_lt: d.bd_cyc_lt - initial.bd_cyc_lt,
        bd_cyc_lthsoc: d.bd_cyc_lthsoc - initial.bd_cyc_lthsoc,
        e_batt: sum(LedgerRow::battery_throughput),
        e_drive: sum(|r| r.e_drive),
        e_g2v: sum(|r| r.e_g2v),
        e_g2h: sum(|r| r.e_g2h),
        e_v2g: sum(|r| r.e_v2g),
        e_v2h: sum(|r| r.e_v2h),
        initial_soc: cfg.initial_soc,
        final_soc: sim.soc,
        sessions: sim.sessions,
        optimizations: sim.optimizations,
        solver_failures: sim.failures,
        goal_shortfalls: sim.shortfalls,
        max_window_violation: sim.max_violation,
        ledger: sim.ledger,
    })
}
