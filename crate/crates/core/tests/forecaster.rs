use proptest::prelude::*;
use vhg_core::data_io::{generate_synthetic_load, year_start, SyntheticLoad};
use vhg_core::forecaster::*;

fn sinusoid(days: usize, seed: u64) -> vhg_core::data_io::HourlySeries {
    let kind = SyntheticLoad::Sinusoid {
        mean: 1.0,
        amplitude: 0.5,
        period_h: 24.0,
        phase_h: 0.0,
    };
    generate_synthetic_load(kind, year_start(2021), 24 * days, seed)
}

fn quick_model() -> ForecastModel {
    let cfg = TrainingConfig {
        epochs: 3,
        ..TrainingConfig::default()
    };
    train(&[sinusoid(6, 1)], &cfg).unwrap().0
}

#[test]
fn rollout_prefixes_agree() {
    let model = quick_model();
    let series = sinusoid(4, 2);
    let long = model.predict_horizon(&series, 60, 12).unwrap();
    for j in 1..12 {
        assert_eq!(model.predict_horizon(&series, 60, j).unwrap(), long[..j]);
    }
}

#[test]
fn normalization_comes_from_training_data_only() {
    let train_series = sinusoid(6, 1);
    let cfg = TrainingConfig {
        epochs: 1,
        ..TrainingConfig::default()
    };
    let model = train(std::slice::from_ref(&train_series), &cfg).unwrap().0;
    assert_eq!(model.normalization, Normalization::fit(&[train_series]));
}

#[test]
fn saved_model_reloads() {
    let model = quick_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let back = ForecastModel::load(&path).unwrap();
    let series = sinusoid(3, 3);
    assert_eq!(
        back.predict_horizon(&series, 40, 12).unwrap(),
        model.predict_horizon(&series, 40, 12).unwrap()
    );
}

#[test]
fn mape_rejects_degenerate_arguments() {
    let model = quick_model();
    let series = sinusoid(3, 3);
    assert!(rollout_mape(&model, &series, 0, 1).is_err());
    assert!(rollout_mape(&model, &series, 12, 0).is_err());
    assert!(rollout_mape(&model, &sinusoid(1, 3), 24, 1).is_err());
    assert!(rollout_mape(&model, &series, 12, 6).unwrap().is_finite());
}

proptest! {
    #[test]
    fn min_max_round_trip(values in prop::collection::vec(0.0..50.0_f64, 2..100), pick in any::<prop::sample::Index>()) {
        let m = MinMax::fit(values.iter().copied());
        let v = values[pick.index(values.len())];
        prop_assert!((m.denormalize(m.normalize(v)) - v).abs() <= 1e-9);
        let n = m.normalize(v);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&n));
    }
}
