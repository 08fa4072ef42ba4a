//! Per-station passenger-flow series, min-max scaling and the
//! real-time/daily/weekly pattern windows fed to the network.

mod ingest;
mod windows;

pub use ingest::{ingest_csv, write_csv, CsvSchema, LoadReport};
pub use windows::{
    assemble_samples, extract_windows, Anchor, Lookback, MultiStationSample, PatternWindow,
    WEEKLY_LAG_DAYS,
};

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inflow counts of a single station, one row per workday and one column per
/// fixed-length interval.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSeries {
    pub station_id: String,
    pub line_id: String,
    pub line_order: u32,
    pub interval_minutes: u32,
    counts: Vec<Vec<f64>>,
}

impl FlowSeries {
    pub fn new(
        station_id: impl Into<String>,
        line_id: impl Into<String>,
        line_order: u32,
        interval_minutes: u32,
        counts: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let station_id = station_id.into();
        if interval_minutes == 0 {
            return Err(Error::InvalidArgument(format!(
                "station {station_id}: interval_minutes must be positive"
            )));
        }
        if let Some(first) = counts.first() {
            let slots = first.len();
            if slots == 0 {
                return Err(Error::Schema(format!("station {station_id}: days have no slots")));
            }
            for (day, row) in counts.iter().enumerate() {
                if row.len() != slots {
                    return Err(Error::Schema(format!(
                        "station {station_id}: day {day} has {} slots, expected {slots}",
                        row.len()
                    )));
                }
                if let Some(slot) = row.iter().position(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "station {station_id}: invalid count {} at day {day} slot {slot}",
                        row[slot]
                    )));
                }
            }
        }
        Ok(Self {
            station_id,
            line_id: line_id.into(),
            line_order,
            interval_minutes,
            counts,
        })
    }

    pub fn num_days(&self) -> usize {
        self.counts.len()
    }

    pub fn slots_per_day(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn value(&self, day: usize, slot: usize) -> f64 {
        self.counts[day][slot]
    }

    pub fn day(&self, day: usize) -> &[f64] {
        &self.counts[day]
    }

    pub fn days(&self) -> impl Iterator<Item = &[f64]> {
        self.counts.iter().map(Vec::as_slice)
    }

    /// Copy of this series restricted to `days`.
    pub fn slice_days(&self, days: Range<usize>) -> Result<Self> {
        if days.end > self.num_days() || days.start > days.end {
            return Err(Error::InvalidArgument(format!(
                "day range {days:?} outside series of {} days",
                self.num_days()
            )));
        }
        Ok(Self {
            counts: self.counts[days].to_vec(),
            ..self.clone()
        })
    }

    /// Applies `f` to every count. Used for scaling, so the non-negativity
    /// check of [`FlowSeries::new`] is not repeated.
    pub fn map_values(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            counts: self
                .counts
                .iter()
                .map(|row| row.iter().map(|&v| f(v)).collect())
                .collect(),
            ..self.clone()
        }
    }
}

/// Per-station min-max scaling onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: f64,
    pub max: f64,
}

impl Normalizer {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || max < min {
            return Err(Error::InvalidArgument(format!(
                "normalizer bounds must satisfy min <= max, got [{min}, {max}]"
            )));
        }
        Ok(Self { min, max })
    }

    fn is_degenerate(&self) -> bool {
        self.max == self.min
    }

    pub fn normalize(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    pub fn denormalize(&self, u: f64) -> f64 {
        if self.is_degenerate() {
            self.min
        } else {
            self.min + u * (self.max - self.min)
        }
    }

    pub fn apply(&self, series: &FlowSeries) -> FlowSeries {
        series.map_values(|v| self.normalize(v))
    }
}

/// Fits a min-max normalizer on the days in `train_days` only.
pub fn fit_normalizer(series: &FlowSeries, train_days: Range<usize>) -> Result<Normalizer> {
    if train_days.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "station {}: empty training day range",
            series.station_id
        )));
    }
    if train_days.end > series.num_days() {
        return Err(Error::InvalidArgument(format!(
            "station {}: training days {train_days:?} exceed {} available days",
            series.station_id,
            series.num_days()
        )));
    }
    let (min, max) = series.counts[train_days]
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    Normalizer::new(min, max)
}
