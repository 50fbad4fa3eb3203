//! Short-horizon household load forecaster: a recurrent network over the
//! last day of loads plus calendar context, rolled out recursively.

mod features;
mod network;

pub use features::{extract_features, CalendarFeatures, FeatureVector, MinMax, Normalization};
pub use network::Architecture;

use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_io::HourlySeries;
use network::{Adam, Batch, Params, PARAM_NAMES};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("need {needed} hours of history ending at hour {hour}, series has {available}")]
    InsufficientHistory {
        needed: usize,
        hour: usize,
        available: usize,
    },
    #[error("invalid training setup: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    MeanSquaredError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub architecture: Architecture,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer_kind: OptimizerKind,
    pub learning_rate: f64,
    pub loss: LossKind,
    pub rng_seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::default(),
            batch_size: 8,
            epochs: 75,
            optimizer_kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            loss: LossKind::MeanSquaredError,
            rng_seed: 42,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let a = &self.architecture;
        if a.lags == 0 || a.hidden == 0 || a.dense1 == 0 || a.dense2 == 0 {
            return Err(ForecastError::InvalidConfig("layer sizes must be positive".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(ForecastError::InvalidConfig(
                "batch size and epochs must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ForecastError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Mean training loss (normalized units) per epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epoch_losses: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastModel {
    pub architecture: Architecture,
    pub normalization: Normalization,
    params: Params,
    pub report: TrainingReport,
}

const FORMAT: &str = "household-load-forecaster";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorFile {
    name: String,
    rows: usize,
    cols: usize,
    /// Column-major.
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    architecture: Architecture,
    normalization: Normalization,
    tensors: Vec<TensorFile>,
    #[serde(default)]
    report: TrainingReport,
}

/// Normalized inputs of every hour, shared by all samples of a series.
struct Prepared {
    load: Vec<f64>,
    context: Vec<[f64; 3]>,
}

impl Prepared {
    fn new(norm: &Normalization, loads: &[f64], start: DateTime<Utc>) -> Self {
        Self {
            load: loads.iter().map(|v| norm.load.normalize(*v)).collect(),
            context: (0..loads.len())
                .map(|h| {
                    let c = CalendarFeatures::at(start + Duration::hours(h as i64));
                    [
                        norm.day_of_year.normalize(c.day_of_year),
                        norm.day_of_week.normalize(c.day_of_week),
                        norm.hour_of_day.normalize(c.hour_of_day),
                    ]
                })
                .collect(),
        }
    }
}

/// Builds a batch from samples `(series, last lag hour)`.
fn gather(prepared: &[Prepared], samples: &[(usize, usize)], lags: usize) -> Batch {
    let b = samples.len();
    let seq = (0..lags)
        .map(|k| DMatrix::from_iterator(1, b, samples.iter().map(|(s, t)| prepared[*s].load[t + 1 - lags + k])))
        .collect();
    let mut context = DMatrix::zeros(3 * lags, b);
    for (j, (s, t)) in samples.iter().enumerate() {
        for k in 0..lags {
            let c = prepared[*s].context[t + 1 - lags + k];
            for f in 0..3 {
                context[(3 * k + f, j)] = c[f];
            }
        }
    }
    Batch { seq, context }
}

/// Trains on every window of every series: lags t−(L−1)…t predict hour
/// t+1. Deterministic for a given seed.
pub fn train(series: &[HourlySeries], cfg: &TrainingConfig) -> Result<(ForecastModel, TrainingReport), ForecastError> {
    cfg.validate()?;
    let lags = cfg.architecture.lags;
    if series
        .iter()
        .any(|s| s.values.iter().any(|v| !(*v >= 0.0 && v.is_finite())))
    {
        return Err(ForecastError::InvalidConfig(
            "training loads must be finite and ≥ 0".into(),
        ));
    }
    let samples: Vec<(usize, usize)> = series
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (lags.saturating_sub(1)..s.len().saturating_sub(1)).map(move |t| (i, t)))
        .collect();
    if samples.is_empty() {
        return Err(ForecastError::InsufficientHistory {
            needed: lags + 1,
            hour: 0,
            available: series.iter().map(HourlySeries::len).max().unwrap_or(0),
        });
    }
    let total_hours: usize = series.iter().map(HourlySeries::len).sum();
    if total_hours < crate::data_io::HOURS_PER_YEAR {
        log::warn!("training on {total_hours} h, less than one year of data");
    }
    let normalization = Normalization::fit(series);
    let prepared: Vec<Prepared> = series
        .iter()
        .map(|s| Prepared::new(&normalization, &s.values, s.start))
        .collect();

    let mut rng = StdRng::seed_from_u64(cfg.rng_seed);
    let mut params = Params::init(&cfg.architecture, &mut rng);
    let mut adam = Adam::new(&cfg.architecture, cfg.learning_rate);
    let mut order = samples.clone();
    let mut report = TrainingReport {
        epoch_losses: Vec::with_capacity(cfg.epochs),
        samples: samples.len(),
    };
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = gather(&prepared, chunk, lags);
            let target = DMatrix::from_iterator(1, chunk.len(), chunk.iter().map(|(s, t)| prepared[*s].load[t + 1]));
            let (loss, grad) = network::loss_and_gradient(&params, &batch, &target);
            if !loss.is_finite() {
                return Err(ForecastError::Diverged { epoch: epoch + 1 });
            }
            adam.update(&mut params, &grad);
            sum += loss * chunk.len() as f64;
        }
        let mean = sum / samples.len() as f64;
        log::debug!("epoch {} loss {mean:.6}", epoch + 1);
        report.epoch_losses.push(mean);
    }
    if !params.is_finite() {
        return Err(ForecastError::Diverged { epoch: cfg.epochs });
    }
    let model = ForecastModel {
        architecture: cfg.architecture,
        normalization,
        params,
        report: report.clone(),
    };
    Ok((model, report))
}

impl ForecastModel {
    pub fn lags(&self) -> usize {
        self.architecture.lags
    }

    /// Next-hour load in kWh, clamped at zero.
    pub fn predict_one(&self, features: &FeatureVector) -> Result<f64, ForecastError> {
        features.validate(self.lags())?;
        let n = &self.normalization;
        let batch = Batch {
            seq: features
                .lags
                .iter()
                .map(|v| DMatrix::from_element(1, 1, n.load.normalize(*v)))
                .collect(),
            context: DMatrix::from_vec(3 * self.lags(), 1, n.context(&features.context)),
        };
        let y = network::forward(&self.params, &batch)[(0, 0)];
        Ok(n.load.denormalize(y).max(0.0))
    }

    /// Recursive rollout of `horizon` hours after the last value of
    /// `recent` (which is observed at `last_time`); each prediction is fed
    /// back as the newest lag.
    pub fn predict_from(
        &self,
        recent: &[f64],
        last_time: DateTime<Utc>,
        horizon: usize,
    ) -> Result<Vec<f64>, ForecastError> {
        let lags = self.lags();
        if recent.len() < lags {
            return Err(ForecastError::InsufficientHistory {
                needed: lags,
                hour: recent.len().saturating_sub(1),
                available: recent.len(),
            });
        }
        let mut window: Vec<f64> = recent[recent.len() - lags..].to_vec();
        let mut out = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let newest = last_time + Duration::hours(k as i64);
            let context = (0..lags)
                .map(|j| CalendarFeatures::at(newest - Duration::hours((lags - 1 - j) as i64)))
                .collect();
            let y = self.predict_one(&FeatureVector {
                lags: window.clone(),
                context,
            })?;
            out.push(y);
            window.remove(0);
            window.push(y);
        }
        Ok(out)
    }

    /// Rollout for hours t+1…t+horizon of `series` using its values up to
    /// and including hour `t`.
    pub fn predict_horizon(&self, series: &HourlySeries, t: usize, horizon: usize) -> Result<Vec<f64>, ForecastError> {
        if t + 1 < self.lags() || t >= series.len() {
            return Err(ForecastError::InsufficientHistory {
                needed: self.lags(),
                hour: t,
                available: series.len(),
            });
        }
        self.predict_from(&series.values[..=t], series.timestamp(t), horizon)
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: FORMAT.into(),
            version: VERSION,
            architecture: self.architecture,
            normalization: self.normalization,
            tensors: self
                .params
                .tensors()
                .iter()
                .zip(PARAM_NAMES)
                .map(|(m, name)| TensorFile {
                    name: name.into(),
                    rows: m.nrows(),
                    cols: m.ncols(),
                    data: m.as_slice().to_vec(),
                })
                .collect(),
            report: self.report.clone(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ForecastError> {
        let file: ModelFile =
            serde_json::from_str(s).map_err(|e| ForecastError::Shape(format!("unreadable model file: {e}")))?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(ForecastError::Shape(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        if !file.normalization.is_finite() {
            return Err(ForecastError::Shape("non-finite normalization bounds".into()));
        }
        let arch = file.architecture;
        let shapes = arch.shapes();
        if file.tensors.len() != shapes.len() {
            return Err(ForecastError::Shape(format!(
                "expected {} tensors, found {}",
                shapes.len(),
                file.tensors.len()
            )));
        }
        let mut tensors = Vec::with_capacity(shapes.len());
        for ((t, shape), name) in file.tensors.into_iter().zip(shapes).zip(PARAM_NAMES) {
            if t.name != name || (t.rows, t.cols) != shape || t.data.len() != t.rows * t.cols {
                return Err(ForecastError::Shape(format!(
                    "tensor {} is {}×{} with {} values, expected {name} {}×{}",
                    t.name,
                    t.rows,
                    t.cols,
                    t.data.len(),
                    shape.0,
                    shape.1
                )));
            }
            tensors.push(DMatrix::from_vec(t.rows, t.cols, t.data));
        }
        let params =
            Params::from_tensors(&arch, tensors).ok_or_else(|| ForecastError::Shape("tensor shapes".into()))?;
        if !params.is_finite() {
            return Err(ForecastError::Shape("non-finite weights".into()));
        }
        Ok(Self {
            architecture: arch,
            normalization: file.normalization,
            params,
            report: file.report,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ForecastError> {
        std::fs::write(path, self.to_json()).map_err(|source| ForecastError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ForecastError> {
        let s = std::fs::read_to_string(path).map_err(|source| ForecastError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&s).map_err(|e| match e {
            ForecastError::Shape(m) => ForecastError::Shape(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Mean absolute percentage error, %, of `horizon`-hour rollouts started
/// every `stride` hours of `series`. Hours with zero actual load are skipped.
pub fn rollout_mape(
    model: &ForecastModel,
    series: &HourlySeries,
    horizon: usize,
    stride: usize,
) -> Result<f64, ForecastError> {
    if horizon == 0 || stride == 0 {
        return Err(ForecastError::InvalidConfig("horizon and stride must be ≥ 1".into()));
    }
    let first = model.lags() - 1;
    if series.len() < first + 1 + horizon {
        return Err(ForecastError::InsufficientHistory {
            needed: model.lags() + horizon,
            hour: first,
            available: series.len(),
        });
    }
    let (mut total, mut n) = (0.0, 0usize);
    for t in (first..series.len() - horizon).step_by(stride) {
        let pred = model.predict_horizon(series, t, horizon)?;
        for (p, a) in pred.iter().zip(&series.values[t + 1..=t + horizon]) {
            if *a > 0.0 {
                total += (p - a).abs() / a;
                n += 1;
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { 100.0 * total / n as f64 })
}
