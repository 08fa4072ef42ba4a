//! Historical average, LSTM trained from scratch on target data, and LSTM
//! pre-trained on one source task then fine-tuned.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::Rng;

use crate::adapt::{adapt, fit, AdaptationConfig};
use crate::error::{Error, Result};
use crate::flow_data::{FlowSeries, MultiStationSample};
use crate::lstm::{init_params, Dims, ModelParams};
use crate::tasks::TaskSet;

/// Per-station, per-slot mean of raw training counts.
#[derive(Debug, Clone, PartialEq)]
pub struct HaModel {
    means: BTreeMap<String, Vec<f64>>,
}

pub fn ha_fit(series: &[FlowSeries], train_days: Range<usize>) -> Result<HaModel> {
    if train_days.is_empty() {
        return Err(Error::InvalidArgument("empty training day range".into()));
    }
    let mut means = BTreeMap::new();
    for s in series {
        if train_days.end > s.num_days() {
            return Err(Error::InvalidArgument(format!(
                "station {} has {} days, training range is {train_days:?}",
                s.station_id,
                s.num_days()
            )));
        }
        let n = train_days.len() as f64;
        let slot_means = (0..s.slots_per_day())
            .map(|slot| train_days.clone().map(|d| s.value(d, slot)).sum::<f64>() / n)
            .collect();
        means.insert(s.station_id.clone(), slot_means);
    }
    Ok(HaModel { means })
}

impl HaModel {
    /// The slot mean; `day` does not influence the result.
    pub fn predict(&self, station_id: &str, _day: usize, slot: usize) -> Result<f64> {
        self.means
            .get(station_id)
            .and_then(|m| m.get(slot))
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("no historical mean for {station_id} slot {slot}")))
    }
}

pub fn ha_predict(model: &HaModel, station_id: &str, day: usize, slot: usize) -> Result<f64> {
    model.predict(station_id, day, slot)
}

/// Trains from a random initialization with the same loop used to adapt a
/// transferred one.
pub fn train_plain_lstm<R: Rng + ?Sized>(
    dims: Dims,
    target_samples: &[MultiStationSample],
    config: &AdaptationConfig,
    rng: &mut R,
) -> Result<ModelParams> {
    let init = init_params(dims, rng);
    adapt(&init, target_samples, config, rng)
}

#[derive(Debug, Clone)]
pub struct FineTuned {
    pub source_task_id: usize,
    pub pretrained: ModelParams,
    pub params: ModelParams,
}

/// Pre-trains on one uniformly chosen source task, then fine-tunes on the
/// target samples.
pub fn train_ft_lstm<R: Rng + ?Sized>(
    task_set: &TaskSet,
    target_samples: &[MultiStationSample],
    hidden: usize,
    source_config: &AdaptationConfig,
    target_config: &AdaptationConfig,
    rng: &mut R,
) -> Result<FineTuned> {
    let pretrained = pretrain_source_task(task_set, hidden, source_config, rng)?;
    let params = adapt(&pretrained.1, target_samples, target_config, rng)?;
    Ok(FineTuned {
        source_task_id: pretrained.0,
        pretrained: pretrained.1,
        params,
    })
}

/// Source half of [`train_ft_lstm`]: returns the chosen task id and the
/// trained network.
pub fn pretrain_source_task<R: Rng + ?Sized>(
    task_set: &TaskSet,
    hidden: usize,
    source_config: &AdaptationConfig,
    rng: &mut R,
) -> Result<(usize, ModelParams)> {
    if task_set.train_tasks.is_empty() {
        return Err(Error::InvalidArgument("task set has no training tasks".into()));
    }
    let task = &task_set.train_tasks[rng.gen_range(0..task_set.train_tasks.len())];
    let dims = Dims::new(hidden, 3 * task_set.task_size, task_set.task_size)?;
    let init = init_params(dims, rng);
    let trained = fit(&init, &task.samples, source_config, rng)?;
    Ok((task.task_id, trained.params))
}
