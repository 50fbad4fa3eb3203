use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Context};
use serde::Serialize;
use vhg_core::data_io::Config;
use vhg_core::engine::{
    build_predictor, run_sweep, run_sweep_sequential, run_year, write_ledger_csv, write_sweep_csv, EngineError,
    LoadPredictor, PredictorKind, RunInputs, Scenario, SweepGrid, YearlyMetrics,
};
use vhg_core::forecaster::{rollout_mape, train as train_model, ForecastError, ForecastModel};
use vhg_core::optimizer::OptimizerError;
use vhg_core::verify::{run_verification, VerifyConfig};

use crate::{Failure, PredictorArg, PredictorArgs, ScenarioArg, SimulateArgs, SweepArgs, TrainArgs, VerifyArgs};

/// Forecast horizon used to score a freshly trained model, h.
const EVAL_HORIZON: usize = 12;

fn engine_failure(e: EngineError) -> Failure {
    match e {
        EngineError::Optimizer(OptimizerError::Numerical(m)) => Failure::Numerical(m),
        EngineError::Forecast(ForecastError::Diverged { epoch }) => {
            Failure::Numerical(format!("forecaster training diverged at epoch {epoch}"))
        }
        other => Failure::Input(other.into()),
    }
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    Ok(match path {
        Some(p) => Config::from_file(p).with_context(|| format!("reading config {}", p.display()))?,
        None => Config::default(),
    })
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).context("serializing output")?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn predictor(cfg: &Config, args: &PredictorArgs) -> Result<Box<dyn LoadPredictor>, Failure> {
    let kind = if args.no_forecast {
        PredictorKind::Oracle
    } else {
        match args.predictor {
            Some(PredictorArg::Forecast) => PredictorKind::Forecast,
            Some(PredictorArg::Oracle) => PredictorKind::Oracle,
            Some(PredictorArg::Persistence) => PredictorKind::Persistence,
            None => cfg.simulation.predictor.parse().map_err(engine_failure)?,
        }
    };
    let model = if kind == PredictorKind::Forecast {
        let path = match (&args.model, &cfg.forecaster.model_path) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => cfg.resolve(p),
            (None, None) => {
                return Err(Failure::Input(anyhow!(
                    "the forecast predictor needs a trained model: pass --model (see `vhg train`), \
                     set [forecaster] model_path, or use --no-forecast"
                )))
            }
        };
        let m = ForecastModel::load(&path).with_context(|| format!("loading model {}", path.display()))?;
        Some(Arc::new(m))
    } else {
        None
    };
    build_predictor(kind, model).map_err(engine_failure)
}

fn check_failures(runs: &[(String, usize)], allowed: usize) -> Result<(), Failure> {
    let bad: Vec<String> = runs
        .iter()
        .filter(|(_, n)| *n > allowed)
        .map(|(label, n)| format!("{label}: {n} solver failures"))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!(
            "{} (more than {allowed} allowed)",
            bad.join("; ")
        )))
    }
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    runs: &'a [YearlyMetrics],
    /// FC_B − FC_A, when both scenarios ran.
    economic_gain_eur: Option<f64>,
}

pub fn simulate(config: Option<&Path>, args: &SimulateArgs) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = args.seed {
        cfg.simulation.rng_seed_unitless = seed;
    }
    if let Some(k) = args.load_multiplier {
        cfg.simulation.load_multiplier_ratio = k;
    }
    let gamma = args.gamma.unwrap_or(cfg.tariff.sell_price_ratio);
    let predictor = predictor(&cfg, &args.predictor)?;
    let inputs = RunInputs::from_config(&cfg).map_err(engine_failure)?;
    let scenarios: &[Scenario] = match args.scenario {
        ScenarioArg::A => &[Scenario::Bidirectional],
        ScenarioArg::B => &[Scenario::Unidirectional],
        ScenarioArg::Both => &[Scenario::Bidirectional, Scenario::Unidirectional],
    };
    create_dir(&args.out)?;

    let mut runs = Vec::new();
    for &scenario in scenarios {
        let mut sim = inputs.simulation(&cfg, scenario, gamma).map_err(engine_failure)?;
        if let Some(c) = args.capacity_kwh {
            sim.battery = sim
                .battery
                .with_capacity(c)
                .map_err(|e| Failure::Input(anyhow!("--capacity-kwh {c}: {e}")))?;
        }
        let t0 = Instant::now();
        let m = run_year(&sim, predictor.as_ref()).map_err(engine_failure)?;
        log::info!("scenario {scenario}: {} h in {:.1?}", m.hours, t0.elapsed());
        let dir = if scenarios.len() > 1 {
            args.out.join(scenario.label())
        } else {
            args.out.clone()
        };
        create_dir(&dir)?;
        let path = dir.join("ledger.csv");
        write_ledger_csv(&path, &m.ledger).map_err(engine_failure)?;
        println!("{}", m.summary_row());
        runs.push(m);
    }
    let gain = match runs.as_slice() {
        [a, b] => {
            let g = b.fc - a.fc;
            println!("economic gain FC_B − FC_A: {g:.2} €");
            Some(g)
        }
        _ => None,
    };
    write_json(
        &args.out.join("metrics.json"),
        &SimulateOutput {
            runs: &runs,
            economic_gain_eur: gain,
        },
    )?;
    let failures: Vec<(String, usize)> = runs
        .iter()
        .map(|m| (format!("scenario {}", m.scenario), m.solver_failures))
        .collect();
    check_failures(&failures, cfg.simulation.max_solver_failures_count)
}

#[derive(Serialize)]
struct TrainingSummary {
    model: PathBuf,
    samples: usize,
    epochs: usize,
    first_epoch_loss: f64,
    last_epoch_loss: f64,
    holdout_horizon_h: usize,
    /// On the held-out series; absent when it is too short.
    holdout_mape_percent: Option<f64>,
}

pub fn train(config: Option<&Path>, args: &TrainArgs) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = args.seed {
        cfg.simulation.rng_seed_unitless = seed;
    }
    if let Some(e) = args.epochs {
        cfg.forecaster.epochs_count = e;
    }
    if !args.load_csv.is_empty() {
        cfg.simulation.load_csv_paths = args.load_csv.clone();
        cfg.base_dir = None;
    }
    let inputs = RunInputs::from_config(&cfg).map_err(engine_failure)?;
    let training = RunInputs::training(&cfg);
    let t0 = Instant::now();
    let (model, report) =
        train_model(inputs.dataset.train_series(), &training).map_err(|e| engine_failure(e.into()))?;
    log::info!("trained on {} samples in {:.1?}", report.samples, t0.elapsed());

    create_dir(&args.out)?;
    let model_path = args.model.clone().unwrap_or_else(|| args.out.join("model.json"));
    if let Some(parent) = model_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    model
        .save(&model_path)
        .with_context(|| format!("saving model {}", model_path.display()))?;

    let loss_path = args.out.join("training_loss.csv");
    let mut w = csv::Writer::from_path(&loss_path).with_context(|| format!("writing {}", loss_path.display()))?;
    w.write_record(["epoch", "loss"]).context("writing loss table")?;
    for (i, l) in report.epoch_losses.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()])
            .context("writing loss table")?;
    }
    w.flush().context("writing loss table")?;

    let holdout = inputs.dataset.test_series();
    let mape = match rollout_mape(&model, &holdout, EVAL_HORIZON, EVAL_HORIZON) {
        Ok(m) => Some(m),
        Err(ForecastError::InsufficientHistory { .. }) => None,
        Err(e) => return Err(engine_failure(e.into())),
    };
    let summary = TrainingSummary {
        model: model_path,
        samples: report.samples,
        epochs: report.epoch_losses.len(),
        first_epoch_loss: report.epoch_losses[0],
        last_epoch_loss: *report.epoch_losses.last().expect("at least one epoch"),
        holdout_horizon_h: EVAL_HORIZON,
        holdout_mape_percent: mape,
    };
    println!(
        "loss {:.4e} → {:.4e} over {} epochs; {}-h holdout MAPE {}",
        summary.first_epoch_loss,
        summary.last_epoch_loss,
        summary.epochs,
        EVAL_HORIZON,
        mape.map_or("n/a".into(), |m| format!("{m:.2} %"))
    );
    write_json(&args.out.join("training.json"), &summary)
}

pub fn sweep(config: Option<&Path>, args: &SweepArgs) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = args.seed {
        cfg.simulation.rng_seed_unitless = seed;
    }
    for (name, list) in [
        ("--gamma", &args.gamma),
        ("--capacity-kwh", &args.capacity_kwh),
        ("--load-multiplier", &args.load_multiplier),
    ] {
        if list.is_empty() {
            return Err(Failure::Input(anyhow!("{name} needs at least one value")));
        }
    }
    let predictor = predictor(&cfg, &args.predictor)?;
    let inputs = RunInputs::from_config(&cfg).map_err(engine_failure)?;
    let base = inputs
        .simulation(&cfg, Scenario::Bidirectional, args.gamma[0])
        .map_err(engine_failure)?;
    let grid = SweepGrid {
        gammas: args.gamma.clone(),
        capacities_kwh: args.capacity_kwh.clone(),
        load_multipliers: args.load_multiplier.clone(),
    };
    let t0 = Instant::now();
    let cells = if args.sequential {
        run_sweep_sequential(&base, predictor.as_ref(), &grid)
    } else {
        run_sweep(&base, predictor.as_ref(), &grid)
    }
    .map_err(engine_failure)?;
    log::info!("{} cells in {:.1?}", cells.len(), t0.elapsed());
    create_dir(&args.out)?;
    write_sweep_csv(&args.out.join("sweep.csv"), &cells).map_err(engine_failure)?;
    for c in &cells {
        println!(
            "E_b {:>6.1} kWh | ×{:<3} | γ {:.2} | FC_A {:>9.2} € | FC_B {:>9.2} € | gain {:>9.2} €",
            c.capacity_kwh, c.load_multiplier, c.gamma, c.fc_a, c.fc_b, c.gain
        );
    }
    let failures: Vec<(String, usize)> = cells
        .iter()
        .map(|c| {
            (
                format!("cell E_b {} ×{} γ {}", c.capacity_kwh, c.load_multiplier, c.gamma),
                c.solver_failures,
            )
        })
        .collect();
    check_failures(&failures, cfg.simulation.max_solver_failures_count)
}

pub fn verify(config: Option<&Path>, args: &VerifyArgs) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    if args.tolerance.is_nan() || args.tolerance < 0.0 {
        return Err(Failure::Input(anyhow!("--tolerance must be ≥ 0")));
    }
    let battery = RunInputs::battery(&cfg).map_err(engine_failure)?;
    let vc = VerifyConfig {
        oracle_cases: args.oracle_cases,
        gradient_points: args.gradient_points,
        tolerance_eur: args.tolerance,
        seed: args.seed,
        ..VerifyConfig::default()
    };
    let report = run_verification(&vc, &battery).map_err(|e| engine_failure(e.into()))?;
    create_dir(&args.out)?;
    write_json(&args.out.join("verify_report.json"), &report)?;
    println!(
        "oracle: {}/{} passed, continuous − oracle in [{:.2e}, {:.2e}] €, {:.1} s",
        report.oracle_cases.len() - report.oracle_failures,
        report.oracle_cases.len(),
        -report.max_undercut_eur,
        report.max_excess_eur,
        report.oracle_seconds
    );
    println!(
        "gradients: {}/{} passed, worst relative error {:.2e}, {:.1} s",
        report.gradient_cases.len() - report.gradient_failures,
        report.gradient_cases.len(),
        report.max_gradient_rel_error,
        report.gradient_seconds
    );
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!(
            "{} oracle and {} gradient cases outside tolerance",
            report.oracle_failures, report.gradient_failures
        )))
    }
}
