use std::borrow::Cow;
use std::sync::Arc;

use super::EngineError;
use crate::data_io::HourlySeries;
use crate::forecaster::ForecastModel;

/// What a predictor may see at hour `t`: the simulated load series (scaled
/// by `scale` relative to the data the predictor was fitted on) and the
/// hours preceding it.
#[derive(Debug, Clone, Copy)]
pub struct LoadView<'a> {
    pub series: &'a HourlySeries,
    pub t: usize,
    pub scale: f64,
    /// Loads before hour 0, same scale as `series`.
    pub prelude: &'a [f64],
}

impl LoadView<'_> {
    /// The `n` observations ending at hour `t`, reaching into the prelude
    /// and, failing that, repeating the oldest value.
    pub fn history(&self, n: usize) -> Cow<'_, [f64]> {
        let seen = &self.series.values[..=self.t];
        if seen.len() >= n {
            return Cow::Borrowed(&seen[seen.len() - n..]);
        }
        let missing = n - seen.len();
        let from_prelude = &self.prelude[self.prelude.len().saturating_sub(missing)..];
        let pad = missing - from_prelude.len();
        let first = from_prelude.first().or(seen.first()).copied().unwrap_or(0.0);
        let mut v = vec![first; pad];
        v.extend_from_slice(from_prelude);
        v.extend_from_slice(seen);
        Cow::Owned(v)
    }
}

/// Household load prediction for the hours after the current one.
pub trait LoadPredictor: Send + Sync {
    fn name(&self) -> &str;

    /// Loads for hours t+1…t+horizon, kWh.
    fn predict(&self, view: &LoadView<'_>, horizon: usize) -> Result<Vec<f64>, EngineError>;
}

/// Reads the actual future load.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePredictor;

impl LoadPredictor for OraclePredictor {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict(&self, view: &LoadView<'_>, horizon: usize) -> Result<Vec<f64>, EngineError> {
        let end = view.t + 1 + horizon;
        if end > view.series.len() {
            return Err(EngineError::DataLength {
                what: "load",
                needed: end,
                got: view.series.len(),
            });
        }
        Ok(view.series.values[view.t + 1..end].to_vec())
    }
}

/// Same hour yesterday; the current hour before a full day is observed.
#[derive(Debug, Clone, Copy, Default)]
pub struct PersistencePredictor;

impl LoadPredictor for PersistencePredictor {
    fn name(&self) -> &str {
        "persistence"
    }

    fn predict(&self, view: &LoadView<'_>, horizon: usize) -> Result<Vec<f64>, EngineError> {
        let t = view.t;
        let now = view.series.values[t];
        let mut out: Vec<f64> = Vec::with_capacity(horizon);
        for k in 1..=horizon {
            let v = match (t + k).checked_sub(24) {
                Some(j) if j <= t => view.series.values[j],
                Some(j) => out[j - t - 1],
                None => now,
            };
            out.push(v);
        }
        Ok(out)
    }
}

/// Recursive rollout of a trained forecaster. Inputs are divided by the
/// view's scale and outputs multiplied by it.
#[derive(Debug, Clone)]
pub struct ForecastPredictor {
    model: Arc<ForecastModel>,
}

impl ForecastPredictor {
    pub fn new(model: Arc<ForecastModel>) -> Self {
        Self { model }
    }
}

impl LoadPredictor for ForecastPredictor {
    fn name(&self) -> &str {
        "forecast"
    }

    fn predict(&self, view: &LoadView<'_>, horizon: usize) -> Result<Vec<f64>, EngineError> {
        let recent: Vec<f64> = view.history(self.model.lags()).iter().map(|v| v / view.scale).collect();
        let out = self
            .model
            .predict_from(&recent, view.series.timestamp(view.t), horizon)?;
        Ok(out.into_iter().map(|v| v * view.scale).collect())
    }
}
