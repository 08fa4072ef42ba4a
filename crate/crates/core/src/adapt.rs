//! Fine-tuning an initialization on a few days of target-station data and
//! producing predictions in passenger counts.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow_data::{fit_normalizer, FlowSeries, Lookback, MultiStationSample, Normalizer};
use crate::lstm::{batch_loss, batch_loss_and_grad, forward, ModelParams};
use crate::optim::{adam_step_in_place, sgd_step_in_place, AdamConfig, AdamState};
use crate::parallel::{self, Execution};
use crate::tasks::{block_samples, order_stations};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FineTuneOptimizer {
    #[default]
    Adam,
    /// Plain gradient steps, `theta - gamma * grad`.
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptationConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub train_days: usize,
    /// Share of the training samples held out for early stopping.
    pub holdout_fraction: f64,
    pub optimizer: FineTuneOptimizer,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            gamma: 0.01,
            batch_size: 16,
            max_epochs: 100,
            patience: 10,
            train_days: 1,
            holdout_fraction: 0.2,
            optimizer: FineTuneOptimizer::Adam,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma.is_nan() || self.gamma <= 0.0 || self.batch_size == 0 || self.train_days == 0 {
            return Err(Error::Config(
                "adaptation: gamma, batch_size and train_days must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("adaptation: holdout_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: ModelParams,
    pub epochs_run: usize,
    pub best_val_loss: f64,
    pub train_samples: usize,
    pub val_samples: usize,
    /// Mean training-batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch fine-tuning from `init` with early stopping on a random
/// holdout. The returned parameters are the best seen on the holdout,
/// `init` included.
pub fn fit<R: Rng + ?Sized>(
    init: &ModelParams,
    samples: &[MultiStationSample],
    config: &AdaptationConfig,
    rng: &mut R,
) -> Result<FitOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to fit".into()));
    }
    let dims = init.dims();
    if let Some(s) = samples.iter().find(|s| s.input_dim() != dims.input || s.label.len() != dims.output) {
        return Err(Error::Shape(format!(
            "samples cover {} stations but the model expects {}; the task size must equal the \
             number of target stations",
            s.label.len(),
            dims.output
        )));
    }

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    let n_val = if samples.len() >= 2 {
        ((samples.len() as f64 * config.holdout_fraction).round() as usize).min(samples.len() - 1)
    } else {
        0
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train: Vec<&MultiStationSample> = train_idx.iter().map(|&i| &samples[i]).collect();
    // without a holdout, stopping watches the training loss
    let val: Vec<&MultiStationSample> = if n_val == 0 {
        train.clone()
    } else {
        val_idx.iter().map(|&i| &samples[i]).collect()
    };

    let mut params = init.clone();
    let mut best = (init.clone(), batch_loss(init, &val)?);
    let mut adam = AdamState::new();
    let adam_cfg = AdamConfig::with_lr(config.gamma);
    let mut stale = 0;
    let mut epoch_losses = Vec::new();

    for epoch in 0..config.max_epochs {
        train.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0;
        for batch in train.chunks(config.batch_size) {
            let (loss, grads) = batch_loss_and_grad(&params, batch)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    iteration: epoch,
                    message: format!("fine-tuning loss {loss}"),
                });
            }
            match config.optimizer {
                FineTuneOptimizer::Adam => adam_step_in_place(&mut params, &grads, &mut adam, &adam_cfg)?,
                FineTuneOptimizer::Sgd => sgd_step_in_place(&mut params, &grads, config.gamma)?,
            }
            total += loss;
            batches += 1;
        }
        epoch_losses.push(total / batches as f64);

        let val_loss = batch_loss(&params, &val)?;
        if val_loss < best.1 {
            best = (params.clone(), val_loss);
            stale = 0;
        } else {
            stale += 1;
            if config.patience > 0 && stale >= config.patience {
                break;
            }
        }
    }

    Ok(FitOutcome {
        params: best.0,
        epochs_run: epoch_losses.len(),
        best_val_loss: best.1,
        train_samples: train.len(),
        val_samples: n_val,
        epoch_losses,
    })
}

/// Fine-tunes the transferred initialization `theta0` on target samples.
pub fn adapt<R: Rng + ?Sized>(
    theta0: &ModelParams,
    target_samples: &[MultiStationSample],
    config: &AdaptationConfig,
    rng: &mut R,
) -> Result<ModelParams> {
    fit(theta0, target_samples, config, rng).map(|o| o.params)
}

/// Scaled predictions clipped to `[0, 1]`, one vector per sample.
pub fn predict_normalized(
    theta: &ModelParams,
    samples: &[MultiStationSample],
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    parallel::try_map(exec, samples, |s| {
        forward(theta, &s.input).map(|t| t.prediction.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    })
}

/// Predictions in passenger counts, in sample order. `stations[u]` names
/// the `u`-th output.
pub fn predict(
    theta: &ModelParams,
    samples: &[MultiStationSample],
    stations: &[String],
    normalizers: &BTreeMap<String, Normalizer>,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    let norms: Vec<&Normalizer> = stations
        .iter()
        .map(|id| {
            normalizers
                .get(id)
                .ok_or_else(|| Error::InvalidArgument(format!("no normalizer for station {id}")))
        })
        .collect::<Result<_>>()?;
    if norms.len() != theta.dims().output {
        return Err(Error::Shape(format!(
            "{} stations for a model with {} outputs",
            norms.len(),
            theta.dims().output
        )));
    }
    Ok(predict_normalized(theta, samples, exec)?
        .into_iter()
        .map(|row| row.iter().zip(&norms).map(|(v, n)| n.denormalize(*v).max(0.0)).collect())
        .collect())
}

/// Target stations prepared for one training-day budget.
#[derive(Debug, Clone)]
pub struct TargetData {
    pub stations: Vec<String>,
    pub raw: Vec<FlowSeries>,
    pub normalizers: BTreeMap<String, Normalizer>,
    pub train: Vec<MultiStationSample>,
    pub test: Vec<MultiStationSample>,
    pub train_days: Range<usize>,
    pub test_days: Range<usize>,
}

/// Scales target series on their first `train_days` days and builds
/// training and test samples. Lookback rows that would precede the first
/// day fall back to the earliest day.
pub fn prepare_target(
    series: &[FlowSeries],
    tau: usize,
    train_days: usize,
    test_days: Range<usize>,
) -> Result<TargetData> {
    if train_days == 0 || train_days > test_days.start {
        return Err(Error::InvalidArgument(format!(
            "training days 0..{train_days} must end before test days {test_days:?}"
        )));
    }
    let ordered = order_stations(series)?;
    let mut raw = Vec::with_capacity(ordered.len());
    for id in &ordered {
        raw.push(series.iter().find(|s| &s.station_id == id).expect("ordered from input").clone());
    }
    if let Some(s) = raw.iter().find(|s| s.num_days() < test_days.end) {
        return Err(Error::InvalidArgument(format!(
            "station {} has {} days, test range needs {}",
            s.station_id,
            s.num_days(),
            test_days.end
        )));
    }
    let mut normalizers = BTreeMap::new();
    let mut scaled = Vec::with_capacity(raw.len());
    for s in &raw {
        let n = fit_normalizer(s, 0..train_days)?;
        scaled.push(n.apply(s));
        normalizers.insert(s.station_id.clone(), n);
    }
    let block: Vec<&FlowSeries> = scaled.iter().collect();
    Ok(TargetData {
        train: block_samples(&block, tau, 0..train_days, Lookback::Fallback)?,
        test: block_samples(&block, tau, test_days.clone(), Lookback::Fallback)?,
        stations: ordered,
        raw,
        normalizers,
        train_days: 0..train_days,
        test_days,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub station_id: String,
    pub day: usize,
    pub slot: usize,
    pub actual: f64,
    pub predicted: f64,
}

impl TargetData {
    /// One row per (sample, station) with the raw count at the label slot.
    pub fn prediction_rows(&self, predictions: &[Vec<f64>]) -> Result<Vec<PredictionRow>> {
        if predictions.len() != self.test.len() {
            return Err(Error::Shape(format!(
                "{} predictions for {} test samples",
                predictions.len(),
                self.test.len()
            )));
        }
        let mut rows = Vec::with_capacity(predictions.len() * self.stations.len());
        for (sample, pred) in self.test.iter().zip(predictions) {
            let (day, slot) = (sample.anchor.day, sample.anchor.slot + 1);
            for (u, series) in self.raw.iter().enumerate() {
                rows.push(PredictionRow {
                    station_id: series.station_id.clone(),
                    day,
                    slot,
                    actual: series.value(day, slot),
                    predicted: pred[u],
                });
            }
        }
        Ok(rows)
    }

    /// Adapts `theta0` on the training samples and predicts the test days.
    pub fn run<R: Rng + ?Sized>(
        &self,
        theta0: &ModelParams,
        config: &AdaptationConfig,
        rng: &mut R,
        exec: Execution,
    ) -> Result<(ModelParams, Vec<PredictionRow>)> {
        let adapted = adapt(theta0, &self.train, config, rng)?;
        let preds = predict(&adapted, &self.test, &self.stations, &self.normalizers, exec)?;
        Ok((adapted, self.prediction_rows(&preds)?))
    }
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Fresh RNG for an adaptation run, so callers can share one seed source.
pub fn adaptation_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
