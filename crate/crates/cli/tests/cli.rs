use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn vhg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vhg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A two-week run config written next to the outputs.
fn short_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, "[simulation]\nhours_count = 336\npredictor = \"persistence\"\n").unwrap();
    path
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_both_reports_gain_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let mut outputs = Vec::new();
    for run in ["one", "two"] {
        let out = dir.path().join(run);
        let o = vhg(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--scenario",
            "both",
            "--seed",
            "4",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("economic gain FC_B − FC_A"));
        outputs.push(out);
    }
    for file in ["metrics.json", "A/ledger.csv", "B/ledger.csv"] {
        let a = fs::read(outputs[0].join(file)).unwrap();
        let b = fs::read(outputs[1].join(file)).unwrap();
        assert!(a == b, "{file} differs between identical runs");
    }
    let m = json(&outputs[0].join("metrics.json"));
    let runs = m["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    let (fc_a, fc_b) = (runs[0]["fc"].as_f64().unwrap(), runs[1]["fc"].as_f64().unwrap());
    assert!((m["economic_gain_eur"].as_f64().unwrap() - (fc_b - fc_a)).abs() < 1e-9);
    assert_eq!(runs[1]["e_v2g"].as_f64().unwrap(), 0.0);
}

#[test]
fn single_scenario_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out = dir.path().join("a");
    let o = vhg(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--scenario",
        "A",
        "--gamma",
        "0.5",
        "--capacity-kwh",
        "41",
        "--load-multiplier",
        "2",
        "--no-forecast",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&out.join("metrics.json"));
    let run = &m["runs"][0];
    assert_eq!(run["capacity_kwh"].as_f64(), Some(41.0));
    assert_eq!(run["price_ratio"].as_f64(), Some(0.5));
    assert!(m["economic_gain_eur"].is_null());

    let rep = dir.path().join("report");
    let o = vhg(&[
        "report",
        "--ledger",
        out.join("ledger.csv").to_str().unwrap(),
        "--out",
        rep.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let summary = json(&rep.join("report_summary.json"));
    assert_eq!(summary["hours"].as_u64(), Some(336));
    assert!((summary["fc"].as_f64().unwrap() - run["fc"].as_f64().unwrap()).abs() < 1e-6);
    let hourly = fs::read_to_string(rep.join("hour_of_day.csv")).unwrap();
    assert_eq!(hourly.lines().count(), 25);
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out = dir.path().join("s");
    let o = vhg(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--gamma",
        "0,1",
        "--capacity-kwh",
        "41,82",
        "--load-multiplier",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rows = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let headers = rows.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let records: Vec<_> = rows.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 4);
    for r in &records {
        let gain: f64 = r[col("gain")].parse().unwrap();
        assert!(gain >= 0.0, "{r:?}");
    }
    // scenario B does not depend on the price ratio
    for cap in [41.0, 82.0] {
        let fc_b: Vec<&str> = records
            .iter()
            .filter(|r| r[col("capacity_kwh")].parse::<f64>().unwrap() == cap)
            .map(|r| &r[col("fc_b")])
            .collect();
        assert_eq!(fc_b.len(), 2);
        assert_eq!(fc_b[0], fc_b[1]);
    }
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let ok = vhg(&[
        "verify",
        "--oracle-cases",
        "3",
        "--gradient-points",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let report = json(&out.join("verify_report.json"));
    assert_eq!(report["oracle_cases"].as_array().unwrap().len(), 3);

    let strict = vhg(&[
        "verify",
        "--oracle-cases",
        "3",
        "--gradient-points",
        "0",
        "--tolerance",
        "-1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(strict.status.code(), Some(1));
    let strict = vhg(&[
        "verify",
        "--oracle-cases",
        "3",
        "--gradient-points",
        "0",
        "--tolerance",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(strict.status.code(), Some(2));
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();
    let missing = dir.path().join("missing.toml");
    let cases: Vec<Vec<&str>> = vec![
        vec!["simulate", "--bogus"],
        vec!["simulate", "--config", missing.to_str().unwrap(), "--out", out],
        vec!["simulate", "--capacity-kwh", "-5", "--out", out],
        vec!["simulate", "--gamma", "1.5", "--out", out],
        vec!["simulate", "--scenario", "C", "--out", out],
        vec!["simulate", "--predictor", "forecast", "--out", out],
        vec!["report", "--ledger", missing.to_str().unwrap(), "--out", out],
    ];
    for args in cases {
        let o = vhg(&args);
        assert_eq!(
            o.status.code(),
            Some(1),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(!o.stderr.is_empty());
    }
    assert_eq!(vhg(&["--help"]).status.code(), Some(0));
}
