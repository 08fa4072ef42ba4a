use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::FlowSeries;
use crate::error::{Error, Result};

/// Workdays between an anchor day and its weekly lookback day.
pub const WEEKLY_LAG_DAYS: usize = 5;

/// Position of a window: the day and the last observed slot `t`. The label
/// sits at slot `t + 1` of the same day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Anchor {
    pub day: usize,
    pub slot: usize,
}

/// How to treat anchors whose previous-day or previous-week history is
/// missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lookback {
    /// Skip anchors without a full week of history.
    #[default]
    Strict,
    /// Substitute the earliest available day for missing lookback days and
    /// flag the window. Meant for newly opened stations.
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternWindow {
    pub realtime: Vec<f64>,
    pub daily: Vec<f64>,
    pub weekly: Vec<f64>,
    pub label: f64,
    pub station_index: usize,
    pub anchor: Anchor,
    /// Set when `daily` or `weekly` was not taken from its true lookback day.
    pub fallback: bool,
}

impl PatternWindow {
    pub fn tau(&self) -> usize {
        self.realtime.len()
    }
}

/// One training example for a task of `I` stations: `tau` time steps of
/// `3 * I` features plus the `I` next-step labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStationSample {
    /// Row-major `tau x (3 * I)`; step `k` holds `[r_k, d_k, w_k]` per station.
    pub input: Vec<f64>,
    pub label: Vec<f64>,
    pub anchor: Anchor,
    pub fallback: bool,
}

impl MultiStationSample {
    pub fn input_dim(&self) -> usize {
        3 * self.label.len()
    }

    pub fn seq_len(&self) -> usize {
        self.input.len() / self.input_dim()
    }

    pub fn step(&self, k: usize) -> &[f64] {
        let d = self.input_dim();
        &self.input[k * d..(k + 1) * d]
    }
}

/// Extracts one window per valid anchor in `days`.
///
/// Valid anchors have `tau - 1 <= slot <= slots - 2` so that the whole
/// real-time row and the label lie inside the anchor day. Under
/// [`Lookback::Strict`] the day must also have [`WEEKLY_LAG_DAYS`] earlier
/// days in the series.
pub fn extract_windows(
    series: &FlowSeries,
    station_index: usize,
    tau: usize,
    days: Range<usize>,
    lookback: Lookback,
) -> Result<Vec<PatternWindow>> {
    let slots = series.slots_per_day();
    if tau == 0 {
        return Err(Error::InvalidArgument("tau must be at least 1".into()));
    }
    if tau >= slots {
        return Err(Error::InvalidArgument(format!(
            "tau {tau} must be smaller than the {slots} slots per day"
        )));
    }
    let end = days.end.min(series.num_days());
    let mut out = Vec::new();
    for day in days.start..end {
        let (daily_day, weekly_day, fallback) = match lookback {
            Lookback::Strict if day < WEEKLY_LAG_DAYS => continue,
            Lookback::Strict => (day - 1, day - WEEKLY_LAG_DAYS, false),
            Lookback::Fallback => (
                day.saturating_sub(1),
                day.saturating_sub(WEEKLY_LAG_DAYS),
                day < WEEKLY_LAG_DAYS,
            ),
        };
        let today = series.day(day);
        let prev = series.day(daily_day);
        let week = series.day(weekly_day);
        for slot in tau - 1..slots - 1 {
            let span = slot + 1 - tau..slot + 1;
            out.push(PatternWindow {
                realtime: today[span.clone()].to_vec(),
                daily: prev[span.clone()].to_vec(),
                weekly: week[span].to_vec(),
                label: today[slot + 1],
                station_index,
                anchor: Anchor { day, slot },
                fallback,
            });
        }
    }
    Ok(out)
}

/// Stacks per-station windows into multi-station samples at every anchor
/// shared by all stations. `windows_per_station[u]` belongs to the `u`-th
/// station of the task, so the output keeps the task's station order.
pub fn assemble_samples(windows_per_station: &[Vec<PatternWindow>]) -> Result<Vec<MultiStationSample>> {
    let Some((first, rest)) = windows_per_station.split_first() else {
        return Err(Error::InvalidArgument("no stations to assemble".into()));
    };
    let tau = first.first().map_or(0, PatternWindow::tau);
    let index: Vec<BTreeMap<Anchor, &PatternWindow>> = windows_per_station
        .iter()
        .map(|ws| ws.iter().map(|w| (w.anchor, w)).collect())
        .collect();
    let common: Vec<Anchor> = first
        .iter()
        .map(|w| w.anchor)
        .filter(|a| index[1..].iter().all(|m| m.contains_key(a)))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if common.is_empty() {
        return Err(Error::Schema(format!(
            "no anchors shared by all {} stations",
            rest.len() + 1
        )));
    }

    let stations = windows_per_station.len();
    let dim = 3 * stations;
    let mut samples = Vec::with_capacity(common.len());
    for anchor in common {
        let ws: Vec<&PatternWindow> = index.iter().map(|m| m[&anchor]).collect();
        if let Some(w) = ws.iter().find(|w| w.tau() != tau) {
            return Err(Error::Shape(format!(
                "window at {anchor:?} has tau {}, expected {tau}",
                w.tau()
            )));
        }
        let mut input = vec![0.0; tau * dim];
        for k in 0..tau {
            let row = &mut input[k * dim..(k + 1) * dim];
            for (u, w) in ws.iter().enumerate() {
                row[3 * u] = w.realtime[k];
                row[3 * u + 1] = w.daily[k];
                row[3 * u + 2] = w.weekly[k];
            }
        }
        samples.push(MultiStationSample {
            input,
            label: ws.iter().map(|w| w.label).collect(),
            anchor,
            fallback: ws.iter().any(|w| w.fallback),
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// value(day, slot) = 1000 * day + slot, so every lookup is traceable.
    fn indexed(days: usize, slots: usize) -> FlowSeries {
        let counts = (0..days)
            .map(|d| (0..slots).map(|s| (1000 * d + s) as f64).collect())
            .collect();
        FlowSeries::new("s", "L", 1, 15, counts).unwrap()
    }

    /// Independent enumeration of valid anchors by explicit bounds checks.
    fn brute_force_anchors(days: usize, slots: usize, tau: usize, range: Range<usize>) -> Vec<Anchor> {
        let mut out = vec![];
        for day in 0..days {
            for slot in 0..slots {
                let in_range = range.contains(&day);
                let has_realtime = slot + 1 >= tau;
                let has_label = slot + 1 < slots;
                let has_daily = day >= 1;
                let has_weekly = day >= 5;
                if in_range && has_realtime && has_label && has_daily && has_weekly {
                    out.push(Anchor { day, slot });
                }
            }
        }
        out
    }

    #[test]
    fn ten_days_seventy_two_slots() {
        let s = indexed(10, 72);
        // days 6..10 one-based
        let ws = extract_windows(&s, 0, 5, 5..10, Lookback::Strict).unwrap();
        let anchors: Vec<Anchor> = ws.iter().map(|w| w.anchor).collect();
        assert_eq!(anchors, brute_force_anchors(10, 72, 5, 5..10));
        assert_eq!(ws.len(), 5 * 67);
        assert_eq!(ws.first().unwrap().anchor.slot, 4);
        assert_eq!(ws.last().unwrap().anchor.slot, 70);
        // first qualifying day reads day 5 (one-based) as daily and day 1 as weekly
        let w = &ws[0];
        assert_eq!(w.daily[0], 4000.0);
        assert_eq!(w.weekly[0], 0.0);
    }

    #[test]
    fn day_without_weekly_history_yields_nothing() {
        let s = indexed(10, 72);
        assert!(extract_windows(&s, 0, 5, 2..3, Lookback::Strict).unwrap().is_empty());
    }

    #[test]
    fn tau_one_boundary() {
        let s = indexed(6, 2);
        let ws = extract_windows(&s, 0, 1, 5..6, Lookback::Strict).unwrap();
        assert_eq!(ws.len(), 1);
        assert_eq!(ws[0].anchor, Anchor { day: 5, slot: 0 });
        assert_eq!(ws[0].realtime, vec![5000.0]);
        assert_eq!(ws[0].label, 5001.0);
    }

    #[test]
    fn tau_must_fit_in_day() {
        let s = indexed(6, 4);
        assert!(extract_windows(&s, 0, 4, 0..6, Lookback::Strict).is_err());
        assert!(extract_windows(&s, 0, 0, 0..6, Lookback::Strict).is_err());
    }

    #[test]
    fn rows_align_with_lookback_days() {
        let s = indexed(12, 20);
        for w in extract_windows(&s, 0, 3, 0..12, Lookback::Strict).unwrap() {
            let Anchor { day, slot } = w.anchor;
            assert_eq!(w.label, s.value(day, slot + 1));
            for k in 0..3 {
                let at = slot + 1 - 3 + k;
                assert_eq!(w.realtime[k], s.value(day, at));
                assert_eq!(w.daily[k], s.value(day - 1, at));
                assert_eq!(w.weekly[k], s.value(day - 5, at));
            }
        }
    }

    #[test]
    fn fallback_uses_earliest_day() {
        let s = indexed(3, 8);
        let ws = extract_windows(&s, 0, 2, 0..3, Lookback::Fallback).unwrap();
        assert_eq!(ws.len(), 3 * 6);
        let day0 = &ws[0];
        assert!(day0.fallback);
        assert_eq!(day0.daily, day0.realtime);
        assert_eq!(day0.weekly, day0.realtime);
        let day2 = ws.iter().find(|w| w.anchor.day == 2).unwrap();
        assert_eq!(day2.daily[0], 1000.0);
        assert_eq!(day2.weekly[0], 0.0);
        assert!(day2.fallback);
    }

    #[test]
    fn fallback_is_exact_once_history_exists() {
        let s = indexed(8, 8);
        let strict = extract_windows(&s, 0, 2, 5..8, Lookback::Strict).unwrap();
        let loose = extract_windows(&s, 0, 2, 5..8, Lookback::Fallback).unwrap();
        assert_eq!(strict, loose);
    }

    #[test]
    fn two_stations_concatenate_per_step() {
        let a = indexed(7, 60);
        let b = a.map_values(|v| -v);
        let wa = extract_windows(&a, 0, 5, 5..7, Lookback::Strict).unwrap();
        let wb = extract_windows(&b, 1, 5, 5..7, Lookback::Strict).unwrap();
        let samples = assemble_samples(&[wa.clone(), wb]).unwrap();
        assert_eq!(samples.len(), wa.len());
        let s = &samples[0];
        assert_eq!((s.seq_len(), s.input_dim()), (5, 6));
        assert_eq!(s.step(0), &[wa[0].realtime[0], wa[0].daily[0], wa[0].weekly[0],
            -wa[0].realtime[0], -wa[0].daily[0], -wa[0].weekly[0]]);
        assert_eq!(s.label, vec![wa[0].label, -wa[0].label]);
    }

    #[test]
    fn fifty_common_anchors() {
        let a = indexed(6, 55);
        let wa = extract_windows(&a, 0, 5, 5..6, Lookback::Strict).unwrap();
        assert_eq!(wa.len(), 50);
        let samples = assemble_samples(&[wa.clone(), wa]).unwrap();
        assert_eq!(samples.len(), 50);
        assert_eq!(samples[0].input.len(), 5 * 6);
    }

    #[test]
    fn single_station_is_reshaped_window() {
        let a = indexed(6, 10);
        let wa = extract_windows(&a, 0, 3, 5..6, Lookback::Strict).unwrap();
        let samples = assemble_samples(std::slice::from_ref(&wa)).unwrap();
        for (w, s) in wa.iter().zip(&samples) {
            for k in 0..3 {
                assert_eq!(s.step(k), &[w.realtime[k], w.daily[k], w.weekly[k]]);
            }
            assert_eq!(s.label, vec![w.label]);
        }
    }

    #[test]
    fn only_common_anchors_survive() {
        let a = indexed(8, 10);
        let wa = extract_windows(&a, 0, 3, 5..7, Lookback::Strict).unwrap();
        let wb = extract_windows(&a, 1, 3, 6..8, Lookback::Strict).unwrap();
        let samples = assemble_samples(&[wa, wb]).unwrap();
        assert!(samples.iter().all(|s| s.anchor.day == 6));
        assert_eq!(samples.len(), 7);
    }

    #[test]
    fn disjoint_anchor_sets_fail() {
        let a = indexed(8, 10);
        let wa = extract_windows(&a, 0, 3, 5..6, Lookback::Strict).unwrap();
        let wb = extract_windows(&a, 1, 3, 6..7, Lookback::Strict).unwrap();
        assert!(assemble_samples(&[wa, wb]).is_err());
    }
}
