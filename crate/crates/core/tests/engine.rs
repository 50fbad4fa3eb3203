use vhg_core::data_io::Config;
use vhg_core::engine::*;

fn two_weeks(seed: u64) -> (Config, RunInputs) {
    let mut cfg = Config::default();
    cfg.simulation.hours_count = 24 * 14;
    cfg.simulation.rng_seed_unitless = seed;
    let inputs = RunInputs::from_config(&cfg).unwrap();
    (cfg, inputs)
}

/// Predicts one kWh too much everywhere, so every parked hour is stale.
struct Biased;

impl LoadPredictor for Biased {
    fn name(&self) -> &str {
        "biased"
    }

    fn predict(&self, view: &LoadView, horizon: usize) -> Result<Vec<f64>, EngineError> {
        let mut p = OraclePredictor.predict(view, horizon)?;
        p.iter_mut().for_each(|v| *v += 1.0);
        Ok(p)
    }
}

fn parked_hours(m: &YearlyMetrics) -> usize {
    m.ledger.iter().filter(|r| r.e_drive == 0.0).count()
}

#[test]
fn exact_predictions_solve_once_per_session() {
    let (cfg, inputs) = two_weeks(1);
    let sim = inputs.simulation(&cfg, Scenario::Bidirectional, 0.5).unwrap();
    let m = run_year(&sim, &OraclePredictor).unwrap();
    assert_eq!(m.optimizations, m.sessions);
    assert_eq!(m.solver_failures, 0);
    assert_eq!(m.goal_shortfalls, 0);
    assert_eq!(m.ledger.len(), 24 * 14);
}

#[test]
fn wrong_predictions_resolve_every_parked_hour() {
    let (cfg, inputs) = two_weeks(1);
    let sim = inputs.simulation(&cfg, Scenario::Bidirectional, 0.5).unwrap();
    let m = run_year(&sim, &Biased).unwrap();
    assert_eq!(m.optimizations, parked_hours(&m));
    // first-hour loads are observed, so recorded predictions lag by a plan
    assert!(m.ledger.iter().any(|r| r.hl_predicted != r.hl_actual));
}

#[test]
fn loose_tolerance_keeps_plans() {
    let (cfg, inputs) = two_weeks(1);
    let mut sim = inputs.simulation(&cfg, Scenario::Bidirectional, 0.5).unwrap();
    sim.mismatch_tolerance_kwh = 1.5;
    let m = run_year(&sim, &Biased).unwrap();
    assert_eq!(m.optimizations, m.sessions);
}

#[test]
fn unidirectional_never_discharges_to_home_or_grid() {
    let (cfg, inputs) = two_weeks(2);
    let sim = inputs.simulation(&cfg, Scenario::Unidirectional, 1.0).unwrap();
    let m = run_year(&sim, &PersistencePredictor).unwrap();
    assert_eq!(m.e_v2g, 0.0);
    assert_eq!(m.e_v2h, 0.0);
    assert_eq!(m.optimizations, m.sessions);
    assert!((m.e_batt - (m.e_drive + m.e_g2v)).abs() < 1e-9);
    assert_eq!(m.predictor, "actual");
}

#[test]
fn runs_are_deterministic() {
    let (cfg, inputs) = two_weeks(3);
    let sim = inputs.simulation(&cfg, Scenario::Bidirectional, 1.0).unwrap();
    let a = run_year(&sim, &PersistencePredictor).unwrap();
    let b = run_year(&sim, &PersistencePredictor).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ledger_audits_and_round_trips() {
    let (cfg, inputs) = two_weeks(4);
    let sim = inputs.simulation(&cfg, Scenario::Bidirectional, 0.75).unwrap();
    let m = run_year(&sim, &PersistencePredictor).unwrap();
    let spec = &sim.battery.spec;
    let audit = audit_ledger(&m, &m.ledger, spec.capacity_kwh, spec.max_hourly_energy_kwh);
    assert!(audit.passes(), "{audit:?}");
    assert!((m.fc - (m.ec + m.bc)).abs() < 1e-9);
    assert!((m.bd - (m.bd_cal + m.bd_cyc)).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.csv");
    write_ledger_csv(&path, &m.ledger).unwrap();
    let back = read_ledger_csv(&path).unwrap();
    assert_eq!(back, m.ledger);
}

#[test]
fn sessions_end_at_the_goal() {
    let (cfg, inputs) = two_weeks(5);
    let sim = inputs.simulation(&cfg, Scenario::Bidirectional, 1.0).unwrap();
    let m = run_year(&sim, &PersistencePredictor).unwrap();
    assert_eq!(m.goal_shortfalls, 0);
    for w in m.ledger.windows(2) {
        // last parked hour before a drive
        if w[0].e_drive == 0.0 && w[1].e_drive > 0.0 {
            assert!(w[0].soc >= sim.soc_goal - 1e-6, "hour {}: {}", w[0].hour, w[0].soc);
        }
    }
}

#[test]
fn larger_battery_and_loads() {
    let (cfg, inputs) = two_weeks(6);
    let mut sim = inputs.simulation(&cfg, Scenario::Bidirectional, 1.0).unwrap();
    sim.battery = sim.battery.with_capacity(41.0).unwrap();
    sim.load_multiplier = 4.0;
    let m = run_year(&sim, &PersistencePredictor).unwrap();
    assert_eq!(m.capacity_kwh, 41.0);
    let spec = &sim.battery.spec;
    assert!(audit_ledger(&m, &m.ledger, spec.capacity_kwh, spec.max_hourly_energy_kwh).passes());
    let base: f64 = inputs.dataset.test_series().values[..24 * 14].iter().sum();
    let hl: f64 = m.ledger.iter().map(|r| r.hl_actual).sum();
    assert!((hl - 4.0 * base).abs() < 1e-6 * hl);
}

#[test]
fn invalid_configs_rejected() {
    let (cfg, inputs) = two_weeks(1);
    let mut sim = inputs.simulation(&cfg, Scenario::Bidirectional, 1.0).unwrap();
    sim.hours = 24 * 400;
    assert!(matches!(
        run_year(&sim, &OraclePredictor),
        Err(EngineError::DataLength { .. })
    ));
    let mut sim = inputs.simulation(&cfg, Scenario::Bidirectional, 1.0).unwrap();
    sim.load_multiplier = 0.0;
    assert!(matches!(run_year(&sim, &OraclePredictor), Err(EngineError::Config(_))));
}
