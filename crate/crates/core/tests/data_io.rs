use std::fs;

use chrono::Duration;
use proptest::prelude::*;
use vhg_core::data_io::*;

#[test]
fn price_fixture_in_mwh_is_converted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prices.csv");
    fs::write(
        &path,
        "timestamp,price_eur_per_mwh\n2022-01-01T00:00:00Z,120.5\n2022-01-01T01:00:00Z,-3.0\n2022-01-01T02:00:00Z,0\n",
    )
    .unwrap();
    let raw = load_price_csv(&path).unwrap();
    assert_eq!(raw.start, year_start(2022));
    assert_eq!(raw.prices, vec![0.1205, -0.003, 0.0]);
    let tariff = apply_tax_transform(&raw, &TaxTransform::default(), 0.5).unwrap();
    assert!((tariff.prices[0] - (0.1205 * 1.25 + 0.006)).abs() < 1e-15);
    assert_eq!(tariff.price_ratio, 0.5);
}

#[test]
fn load_fixture_fills_a_single_gap_only() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.csv");
    fs::write(
        &one,
        "timestamp,load_kwh\n2022-01-01 00:00:00,1.0\n2022-01-01 02:00:00,2.0\n",
    )
    .unwrap();
    let s = read_load_csv(&one).unwrap();
    assert_eq!(s.values, vec![1.0, 1.5, 2.0]);

    let two = dir.path().join("two.csv");
    fs::write(
        &two,
        "timestamp,load_kwh\n2022-01-01 00:00:00,1.0\n2022-01-01 03:00:00,2.0\n",
    )
    .unwrap();
    assert!(read_load_csv(&two).is_err());
}

#[test]
fn malformed_rows_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(
        &path,
        "timestamp,load_kwh\n2022-01-01 00:00:00,1.0\n2022-01-01 01:00:00,abc\n",
    )
    .unwrap();
    let msg = read_load_csv(&path).unwrap_err().to_string();
    assert!(msg.contains("line 3"), "{msg}");
}

#[test]
fn config_toml_round_trip() {
    let mut cfg = Config::default();
    cfg.simulation.rng_seed_unitless = 99;
    cfg.tariff.sell_price_ratio = 0.25;
    let back = Config::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(back.simulation.rng_seed_unitless, 99);
    assert_eq!(back.tariff.sell_price_ratio, 0.25);
    assert!(Config::from_toml_str("[tariff]\nsell_price_ratio = 2.0\n").is_err());
}

fn finite_value() -> impl Strategy<Value = f64> {
    -1e3..1e3_f64
}

proptest! {
    #[test]
    fn tax_transform_is_affine(a in finite_value(), k in finite_value(), m in 0.5..2.0_f64, add in -0.1..0.1_f64) {
        let tax = TaxTransform { multiplier: m, adder: add };
        let lhs = tax.apply(a) + k * m;
        let rhs = tax.apply(a + k);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn price_csv_round_trip(prices in prop::collection::vec(-0.5..2.0_f64, 1..200), offset in 0i64..8000) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let raw = RawPriceSeries { start: year_start(2022) + Duration::hours(offset), prices };
        write_price_csv(&path, &raw).unwrap();
        let back = load_price_csv(&path).unwrap();
        prop_assert_eq!(back.start, raw.start);
        prop_assert_eq!(back.prices.len(), raw.prices.len());
        for (a, b) in back.prices.iter().zip(&raw.prices) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn load_csv_round_trip(values in prop::collection::vec(0.0..10.0_f64, 1..200)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        let series = HourlySeries::new("l", year_start(2021), values);
        write_load_csv(&path, &series).unwrap();
        let back = read_load_csv(&path).unwrap();
        prop_assert_eq!(back.start, series.start);
        for (a, b) in back.values.iter().zip(&series.values) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn train_and_test_hours_disjoint(lens in prop::collection::vec(1usize..100, 2..6), mult in 0.5..8.0_f64) {
        let series: Vec<_> = lens
            .iter()
            .enumerate()
            .map(|(i, n)| HourlySeries::new(format!("s{i}"), year_start(2020 + i as i32), vec![1.0; *n]))
            .collect();
        let d = LoadDataset::new(series, mult).unwrap();
        let (train, test) = d.split_ranges();
        prop_assert_eq!(train.end, test.start);
        prop_assert_eq!(d.train().len(), train.len());
        prop_assert_eq!(d.test_series().len(), test.len());
        prop_assert!(d.test_series().values.iter().all(|v| (*v - mult).abs() < 1e-15));
        prop_assert!(d.train().iter().all(|v| *v == 1.0));
    }
}
