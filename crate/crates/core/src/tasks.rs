//! Meta-learning tasks: blocks of consecutive source stations in line order,
//! split chronologically into train and test samples, plus episodic
//! support/query sampling.

use std::collections::{BTreeMap, HashSet};
use std::ops::Range;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow_data::{
    assemble_samples, extract_windows, fit_normalizer, FlowSeries, Lookback, MultiStationSample,
    Normalizer, WEEKLY_LAG_DAYS,
};

/// Draw attempts before [`sample_episode`] gives up on finding a task with
/// enough samples.
pub const MAX_TASK_DRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct MetaTask {
    pub task_id: usize,
    pub stations: Vec<String>,
    pub samples: Vec<MultiStationSample>,
}

#[derive(Debug, Clone)]
pub struct TaskSet {
    pub task_size: usize,
    pub tau: usize,
    pub train_tasks: Vec<MetaTask>,
    pub test_tasks: Vec<MetaTask>,
    pub train_days: Range<usize>,
    pub test_days: Range<usize>,
    pub normalizers: BTreeMap<String, Normalizer>,
    pub dropped_stations: Vec<String>,
}

/// Support and query samples drawn from one task.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode<'a> {
    pub task_id: usize,
    pub support: Vec<&'a MultiStationSample>,
    pub query: Vec<&'a MultiStationSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeBatch<'a> {
    pub episodes: Vec<Episode<'a>>,
}

/// Station ids sorted by line, then by position along the line.
pub fn order_stations(series: &[FlowSeries]) -> Result<Vec<String>> {
    let mut keyed: Vec<(&str, u32, &str)> = series
        .iter()
        .map(|s| (s.line_id.as_str(), s.line_order, s.station_id.as_str()))
        .collect();
    keyed.sort();
    for pair in keyed.windows(2) {
        if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
            return Err(Error::Schema(format!(
                "stations {} and {} share position {} on line {}",
                pair[0].2, pair[1].2, pair[0].1, pair[0].0
            )));
        }
    }
    Ok(keyed.into_iter().map(|(_, _, id)| id.to_string()).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub blocks: Vec<Vec<String>>,
    pub dropped: Vec<String>,
}

/// Consecutive blocks of `task_size` stations; a short trailing block is
/// dropped.
pub fn partition_tasks(ordered: &[String], task_size: usize) -> Result<Partition> {
    if task_size == 0 {
        return Err(Error::InvalidArgument("task size must be at least 1".into()));
    }
    if ordered.len() < task_size {
        return Err(Error::InvalidArgument(format!(
            "{} stations cannot fill a task of {task_size}",
            ordered.len()
        )));
    }
    let full = ordered.len() / task_size * task_size;
    Ok(Partition {
        blocks: ordered[..full].chunks(task_size).map(<[String]>::to_vec).collect(),
        dropped: ordered[full..].to_vec(),
    })
}

/// Samples for a block of (already scaled) series over `days`.
pub fn block_samples(
    block: &[&FlowSeries],
    tau: usize,
    days: Range<usize>,
    lookback: Lookback,
) -> Result<Vec<MultiStationSample>> {
    let windows = block
        .iter()
        .enumerate()
        .map(|(u, s)| extract_windows(s, u, tau, days.clone(), lookback))
        .collect::<Result<Vec<_>>>()?;
    assemble_samples(&windows)
}

/// Splits `eligible` days chronologically; the first `ceil(fraction * n)`
/// go to training.
pub fn chronological_split(eligible: Range<usize>, fraction: f64) -> Result<(Range<usize>, Range<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie strictly between 0 and 1, got {fraction}"
        )));
    }
    let n = eligible.len();
    // guard against 0.8 * 20 landing a hair above 16
    let n_train = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::InvalidArgument(format!(
            "{n} eligible days cannot be split {fraction} into non-empty train and test parts"
        )));
    }
    let cut = eligible.start + n_train;
    Ok((eligible.start..cut, cut..eligible.end))
}

/// Builds train/test tasks from source series.
///
/// Eligible days are those with a full week of lookback. Each station is
/// min-max scaled using every day up to the end of the training range.
pub fn build_task_set(
    series: &[FlowSeries],
    task_size: usize,
    tau: usize,
    train_fraction: f64,
) -> Result<TaskSet> {
    let num_days = series.first().map_or(0, FlowSeries::num_days);
    if series.iter().any(|s| s.num_days() != num_days) {
        return Err(Error::Schema("source stations cover different numbers of days".into()));
    }
    if num_days <= WEEKLY_LAG_DAYS {
        return Err(Error::InvalidArgument(format!(
            "{num_days} days leave no day with a full week of lookback"
        )));
    }
    let (train_days, test_days) = chronological_split(WEEKLY_LAG_DAYS..num_days, train_fraction)?;

    let ordered = order_stations(series)?;
    let partition = partition_tasks(&ordered, task_size)?;
    let by_id: BTreeMap<&str, &FlowSeries> =
        series.iter().map(|s| (s.station_id.as_str(), s)).collect();

    let mut normalizers = BTreeMap::new();
    let mut scaled: BTreeMap<&str, FlowSeries> = BTreeMap::new();
    for id in partition.blocks.iter().flatten() {
        let s = by_id[id.as_str()];
        let n = fit_normalizer(s, 0..train_days.end)?;
        scaled.insert(id.as_str(), n.apply(s));
        normalizers.insert(id.clone(), n);
    }

    let mut train_tasks = Vec::with_capacity(partition.blocks.len());
    let mut test_tasks = Vec::with_capacity(partition.blocks.len());
    for (task_id, block) in partition.blocks.iter().enumerate() {
        let members: Vec<&FlowSeries> = block.iter().map(|id| &scaled[id.as_str()]).collect();
        let build = |days: Range<usize>| {
            block_samples(&members, tau, days, Lookback::Strict).map_err(|e| {
                Error::Schema(format!("task {task_id} ({}..): {e}", block[0]))
            })
        };
        train_tasks.push(MetaTask {
            task_id,
            stations: block.clone(),
            samples: build(train_days.clone())?,
        });
        test_tasks.push(MetaTask {
            task_id,
            stations: block.clone(),
            samples: build(test_days.clone())?,
        });
    }

    Ok(TaskSet {
        task_size,
        tau,
        train_tasks,
        test_tasks,
        train_days,
        test_days,
        normalizers,
        dropped_stations: partition.dropped,
    })
}

/// Draws `n_tasks` tasks with replacement and, inside each, `k_s + k_q`
/// distinct samples split into support and query.
pub fn sample_episode<'a, R: Rng + ?Sized>(
    tasks: &'a [MetaTask],
    n_tasks: usize,
    k_s: usize,
    k_q: usize,
    rng: &mut R,
) -> Result<EpisodeBatch<'a>> {
    if tasks.is_empty() {
        return Err(Error::InvalidArgument("no tasks to sample from".into()));
    }
    let need = k_s + k_q;
    let mut episodes = Vec::with_capacity(n_tasks);
    for _ in 0..n_tasks {
        let mut drawn = None;
        for _ in 0..MAX_TASK_DRAWS {
            let t = &tasks[rng.gen_range(0..tasks.len())];
            if t.samples.len() >= need {
                drawn = Some(t);
                break;
            }
        }
        let task = drawn.ok_or_else(|| {
            Error::InvalidArgument(format!(
                "no task with {need} samples found after {MAX_TASK_DRAWS} draws"
            ))
        })?;
        let picks = index::sample(rng, task.samples.len(), need).into_vec();
        let (s, q) = picks.split_at(k_s);
        episodes.push(Episode {
            task_id: task.task_id,
            support: s.iter().map(|&i| &task.samples[i]).collect(),
            query: q.iter().map(|&i| &task.samples[i]).collect(),
        });
    }
    Ok(EpisodeBatch { episodes })
}

impl Episode<'_> {
    pub fn is_disjoint(&self) -> bool {
        let support: HashSet<*const MultiStationSample> =
            self.support.iter().map(|s| *s as *const _).collect();
        self.query.iter().all(|q| !support.contains(&(*q as *const _)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskManifest {
    pub task_size: usize,
    pub tau: usize,
    pub train_days: [usize; 2],
    pub test_days: [usize; 2],
    pub dropped_stations: Vec<String>,
    pub tasks: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub task_id: usize,
    pub stations: Vec<String>,
    pub train_samples: usize,
    pub test_samples: usize,
}

impl TaskSet {
    pub fn manifest(&self) -> TaskManifest {
        TaskManifest {
            task_size: self.task_size,
            tau: self.tau,
            train_days: [self.train_days.start, self.train_days.end],
            test_days: [self.test_days.start, self.test_days.end],
            dropped_stations: self.dropped_stations.clone(),
            tasks: self
                .train_tasks
                .iter()
                .zip(&self.test_tasks)
                .map(|(tr, te)| ManifestEntry {
                    task_id: tr.task_id,
                    stations: tr.stations.clone(),
                    train_samples: tr.samples.len(),
                    test_samples: te.samples.len(),
                })
                .collect(),
        }
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(&self.manifest())
            .map_err(|e| Error::Config(format!("manifest: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn station(id: &str, line: &str, order: u32, days: usize, slots: usize) -> FlowSeries {
        let counts = (0..days)
            .map(|d| (0..slots).map(|s| (d * slots + s + order as usize) as f64).collect())
            .collect();
        FlowSeries::new(id, line, order, 15, counts).unwrap()
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:03}")).collect()
    }

    #[test]
    fn orders_by_line_then_position() {
        let series = vec![
            station("B2", "B", 2, 1, 2),
            station("A3", "A", 3, 1, 2),
            station("A1", "A", 1, 1, 2),
            station("B1", "B", 1, 1, 2),
            station("A2", "A", 2, 1, 2),
        ];
        assert_eq!(order_stations(&series).unwrap(), ["A1", "A2", "A3", "B1", "B2"]);
    }

    #[test]
    fn reversed_single_line() {
        let series: Vec<_> = (1..=4).rev().map(|i| station(&format!("x{i}"), "L", i, 1, 2)).collect();
        assert_eq!(order_stations(&series).unwrap(), ["x1", "x2", "x3", "x4"]);
    }

    #[test]
    fn duplicate_position_rejected() {
        let series = vec![station("a", "L", 1, 1, 2), station("b", "L", 1, 1, 2)];
        assert!(order_stations(&series).is_err());
    }

    #[test]
    fn partition_sizes() {
        // floor(276 / 10) = 27 tasks, 276 - 270 = 6 left over
        let p = partition_tasks(&ids(276), 10).unwrap();
        assert_eq!((p.blocks.len(), p.dropped.len()), (27, 6));
        let p = partition_tasks(&ids(25), 10).unwrap();
        assert_eq!((p.blocks.len(), p.dropped.len()), (2, 5));
        let p = partition_tasks(&ids(10), 10).unwrap();
        assert_eq!((p.blocks.len(), p.dropped.len()), (1, 0));
        assert!(partition_tasks(&ids(9), 10).is_err());
    }

    #[test]
    fn split_twenty_days() {
        let (train, test) = chronological_split(0..20, 0.8).unwrap();
        assert_eq!((train, test), (0..16, 16..20));
        assert!(chronological_split(0..20, 1.0).is_err());
        assert!(chronological_split(0..20, 0.0).is_err());
    }

    #[test]
    fn task_set_sample_counts() {
        // 5 lookback days + 4 eligible: 3 train days, 1 test day (ceil(0.75 * 4) = 3)
        let series: Vec<_> = (1..=3).map(|i| station(&format!("s{i}"), "L", i, 9, 12)).collect();
        let ts = build_task_set(&series, 3, 5, 0.75).unwrap();
        assert_eq!((ts.train_tasks.len(), ts.test_tasks.len()), (1, 1));
        // (12 - 5) anchors per day
        assert_eq!(ts.train_tasks[0].samples.len(), 3 * 7);
        assert_eq!(ts.test_tasks[0].samples.len(), 7);
        let max_train = ts.train_tasks[0].samples.iter().map(|s| s.anchor.day).max().unwrap();
        let min_test = ts.test_tasks[0].samples.iter().map(|s| s.anchor.day).min().unwrap();
        assert!(max_train < min_test);
        assert_eq!(ts.normalizers.len(), 3);
    }

    #[test]
    fn hundred_train_twenty_five_test() {
        // 25 anchors per day (slots 30, tau 5); 5 eligible days split 4/1
        let series = vec![station("a", "L", 1, 10, 30)];
        let ts = build_task_set(&series, 1, 5, 0.8).unwrap();
        assert_eq!(ts.train_tasks[0].samples.len(), 100);
        assert_eq!(ts.test_tasks[0].samples.len(), 25);
    }

    #[test]
    fn manifest_lists_blocks() {
        let series: Vec<_> = (1..=5).map(|i| station(&format!("s{i}"), "L", i, 8, 10)).collect();
        let ts = build_task_set(&series, 2, 3, 0.5).unwrap();
        let m = ts.manifest();
        assert_eq!(m.tasks.len(), 2);
        assert_eq!(m.dropped_stations, ["s5"]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tasks.toml");
        ts.write_manifest(&path).unwrap();
        let back: TaskManifest = toml::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    fn toy_tasks(sizes: &[usize]) -> Vec<MetaTask> {
        sizes
            .iter()
            .enumerate()
            .map(|(task_id, &n)| MetaTask {
                task_id,
                stations: vec![format!("t{task_id}")],
                samples: (0..n)
                    .map(|i| MultiStationSample {
                        input: vec![i as f64; 3],
                        label: vec![i as f64],
                        anchor: crate::flow_data::Anchor { day: 0, slot: i },
                        fallback: false,
                    })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn episodes_are_seed_deterministic() {
        let tasks = toy_tasks(&[40, 50, 60]);
        let a = sample_episode(&tasks, 4, 16, 16, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = sample_episode(&tasks, 4, 16, 16, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        for e in &a.episodes {
            assert_eq!((e.support.len(), e.query.len()), (16, 16));
            assert!(e.is_disjoint());
        }
    }

    #[test]
    fn small_tasks_are_redrawn() {
        let tasks = toy_tasks(&[5, 40]);
        let batch = sample_episode(&tasks, 10, 16, 16, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(batch.episodes.iter().all(|e| e.task_id == 1));
    }

    #[test]
    fn all_tasks_too_small() {
        let tasks = toy_tasks(&[10, 20]);
        assert!(sample_episode(&tasks, 1, 16, 16, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    proptest! {
        #[test]
        fn support_and_query_never_overlap(seed in any::<u64>(), k_s in 1usize..10, k_q in 1usize..10) {
            let tasks = toy_tasks(&[20, 25, 30]);
            let batch = sample_episode(&tasks, 3, k_s, k_q, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            for e in &batch.episodes {
                prop_assert!(e.is_disjoint());
            }
        }

        #[test]
        fn blocks_rebuild_prefix(n in 1usize..300, size in 1usize..30) {
            prop_assume!(n >= size);
            let all = ids(n);
            let p = partition_tasks(&all, size).unwrap();
            let joined: Vec<String> = p.blocks.concat();
            prop_assert_eq!(&all[..joined.len()], &joined[..]);
            prop_assert!(p.dropped.len() < size);
            prop_assert_eq!(joined.len() + p.dropped.len(), n);
        }
    }
}
