//! First-order meta-training.
//!
//! Each iteration draws an episode of tasks. For every task the local
//! learner runs a few plain SGD steps on the support batch, then the query
//! loss gradient is taken at the adapted parameters. The global learner
//! applies the mean of those gradients to the shared initialization with
//! Adam. Second-order terms are dropped.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow_data::MultiStationSample;
use crate::lstm::{batch_loss, batch_loss_and_grad, init_params, Dims, ModelParams, ParamGrads};
use crate::optim::{adam_step_in_place, clip_global_norm, sgd_step_in_place, AdamConfig, AdamState};
use crate::parallel::{self, Execution};
use crate::tasks::{sample_episode, Episode, EpisodeBatch, MetaTask, TaskSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaConfig {
    /// Local (inner) learning rate.
    pub alpha: f64,
    /// Global (outer) Adam learning rate.
    pub beta: f64,
    pub inner_steps: usize,
    pub tasks_per_iteration: usize,
    pub k_s: usize,
    pub k_q: usize,
    pub max_iterations: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub hidden: usize,
    pub grad_clip: Option<f64>,
    pub execution: Execution,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            beta: 0.001,
            inner_steps: 5,
            tasks_per_iteration: 16,
            k_s: 16,
            k_q: 16,
            max_iterations: 40_000,
            eval_every: 200,
            patience: 10,
            hidden: 32,
            grad_clip: None,
            execution: Execution::default(),
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("meta: {m}")));
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return bad("alpha and beta must be positive");
        }
        if self.max_iterations == 0 || self.tasks_per_iteration == 0 {
            return bad("max_iterations and tasks_per_iteration must be at least 1");
        }
        if self.k_s == 0 || self.k_q == 0 || self.hidden == 0 || self.eval_every == 0 {
            return bad("k_s, k_q, hidden and eval_every must be at least 1");
        }
        Ok(())
    }

    /// One-line `key=value` summary written at the top of training logs.
    pub fn summary(&self) -> String {
        format!(
            "alpha={} beta={} inner_steps={} tasks_per_iteration={} k_s={} k_q={} \
             max_iterations={} eval_every={} patience={} hidden={}",
            self.alpha,
            self.beta,
            self.inner_steps,
            self.tasks_per_iteration,
            self.k_s,
            self.k_q,
            self.max_iterations,
            self.eval_every,
            self.patience,
            self.hidden
        )
    }
}

/// `inner_steps` SGD steps on the support loss, starting from `theta`.
pub fn inner_adapt(
    theta: &ModelParams,
    support: &[&MultiStationSample],
    alpha: f64,
    inner_steps: usize,
) -> Result<ModelParams> {
    if support.is_empty() {
        return Err(Error::InvalidArgument("empty support batch".into()));
    }
    let mut adapted = theta.clone();
    for step in 0..inner_steps {
        let (loss, grads) = batch_loss_and_grad(&adapted, support)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("support loss at inner step {step}")));
        }
        sgd_step_in_place(&mut adapted, &grads, alpha)?;
    }
    Ok(adapted)
}

/// Query-loss gradient at the adapted parameters of one task.
pub fn task_gradient(
    theta: &ModelParams,
    episode: &Episode<'_>,
    alpha: f64,
    inner_steps: usize,
) -> Result<(f64, ParamGrads)> {
    let adapted = inner_adapt(theta, &episode.support, alpha, inner_steps)?;
    batch_loss_and_grad(&adapted, &episode.query)
}

type ReductionKey = (usize, Vec<(usize, usize)>, Vec<(usize, usize)>);

fn reduction_key(e: &Episode<'_>) -> ReductionKey {
    let anchors = |v: &[&MultiStationSample]| v.iter().map(|s| (s.anchor.day, s.anchor.slot)).collect();
    (e.task_id, anchors(&e.support), anchors(&e.query))
}

/// First-order meta-gradient: mean over tasks of the query gradient at each
/// task's adapted parameters. Returns it with the mean query loss.
///
/// Per-task results are summed in a canonical order, so the output does not
/// depend on episode order or on how the tasks were scheduled.
pub fn meta_gradient(
    theta: &ModelParams,
    batch: &EpisodeBatch<'_>,
    alpha: f64,
    inner_steps: usize,
    exec: Execution,
) -> Result<(f64, ParamGrads)> {
    if batch.episodes.is_empty() {
        return Err(Error::InvalidArgument("episode batch has no tasks".into()));
    }
    let mut order: Vec<&Episode<'_>> = batch.episodes.iter().collect();
    order.sort_by_cached_key(|e| reduction_key(e));
    let per_task = parallel::try_map(exec, &order, |e| task_gradient(theta, e, alpha, inner_steps))?;

    let mut grads = ParamGrads::zeros(theta.dims());
    let mut loss = 0.0;
    for (l, g) in &per_task {
        loss += l;
        grads.add_assign(g);
    }
    let n = per_task.len() as f64;
    grads.scale(1.0 / n);
    Ok((loss / n, grads))
}

/// Mean post-adaptation loss: per task, adapt on `k_s` seeded support
/// samples and score every remaining sample.
pub fn evaluate_meta<R: Rng + ?Sized>(
    theta: &ModelParams,
    tasks: &[MetaTask],
    alpha: f64,
    inner_steps: usize,
    k_s: usize,
    rng: &mut R,
    exec: Execution,
) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::InvalidArgument("no tasks to evaluate".into()));
    }
    let seeds: Vec<(usize, u64)> = (0..tasks.len()).map(|i| (i, rng.gen())).collect();
    let losses = parallel::try_map(exec, &seeds, |&(i, seed)| -> Result<Option<f64>> {
        let task = &tasks[i];
        if task.samples.len() < k_s + 1 {
            log::warn!(
                "skipping task {} in evaluation: {} samples, need {}",
                task.task_id,
                task.samples.len(),
                k_s + 1
            );
            return Ok(None);
        }
        let mut task_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = vec![false; task.samples.len()];
        let support: Vec<&MultiStationSample> = index::sample(&mut task_rng, task.samples.len(), k_s)
            .into_iter()
            .map(|j| {
                picked[j] = true;
                &task.samples[j]
            })
            .collect();
        let rest: Vec<&MultiStationSample> = task
            .samples
            .iter()
            .zip(&picked)
            .filter(|(_, p)| !**p)
            .map(|(s, _)| s)
            .collect();
        let adapted = inner_adapt(theta, &support, alpha, inner_steps)?;
        batch_loss(&adapted, &rest).map(Some)
    })?;
    let used: Vec<f64> = losses.into_iter().flatten().collect();
    if used.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "every task has fewer than {} samples",
            k_s + 1
        )));
    }
    Ok(used.iter().sum::<f64>() / used.len() as f64)
}

/// Meta-parameters and optimizer state carried between iterations.
#[derive(Debug, Clone)]
pub struct MetaState {
    pub theta: ModelParams,
    pub adam: AdamState,
    pub iteration: usize,
    pub best: Option<(ModelParams, f64)>,
}

impl MetaState {
    pub fn new(theta: ModelParams) -> Self {
        Self {
            theta,
            adam: AdamState::new(),
            iteration: 0,
            best: None,
        }
    }
}

/// One global-learner update from a drawn episode batch. Returns the mean
/// query loss that produced the gradient.
pub fn meta_step(state: &mut MetaState, batch: &EpisodeBatch<'_>, config: &MetaConfig) -> Result<f64> {
    let (loss, mut grads) =
        meta_gradient(&state.theta, batch, config.alpha, config.inner_steps, config.execution)?;
    if !loss.is_finite() || grads.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            iteration: state.iteration + 1,
            message: format!("meta loss {loss}"),
        });
    }
    if let Some(max) = config.grad_clip {
        clip_global_norm(&mut grads, max);
    }
    adam_step_in_place(&mut state.theta, &grads, &mut state.adam, &AdamConfig::with_lr(config.beta))?;
    state.iteration += 1;
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub meta_loss: Option<f64>,
    pub eval_loss: Option<f64>,
    pub wall_ms: u128,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub header: Vec<String>,
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    /// CSV text; header lines are `#` comments. With `include_wall = false`
    /// the timing column is blanked so logs compare byte-for-byte.
    pub fn to_csv(&self, include_wall: bool) -> String {
        let mut out = String::new();
        for h in &self.header {
            let _ = writeln!(out, "# {h}");
        }
        out.push_str("iter,meta_loss,eval_loss,wall_ms\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let wall = if include_wall { r.wall_ms.to_string() } else { String::new() };
            let _ = writeln!(out, "{},{},{},{}", r.iter, opt(r.meta_loss), opt(r.eval_loss), wall);
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv(true).as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn evaluations(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows.iter().filter_map(|r| r.eval_loss.map(|l| (r.iter, l)))
    }
}

#[derive(Debug, Clone)]
pub struct MetaOutcome {
    /// Best parameters by evaluation loss; the transferable initialization.
    pub theta0: ModelParams,
    pub best_eval_loss: f64,
    /// Parameters after the last completed update.
    pub final_theta: ModelParams,
    pub iterations: usize,
    pub stopped_early: bool,
    /// Set when training aborted on a non-finite loss; `theta0` is then the
    /// last good checkpoint.
    pub divergence: Option<String>,
    pub log: TrainingLog,
}

/// Meta-trains from a fresh initialization.
pub fn meta_train<R: Rng + ?Sized>(task_set: &TaskSet, config: &MetaConfig, rng: &mut R) -> Result<MetaOutcome> {
    let i = task_set.task_size;
    let dims = Dims::new(config.hidden, 3 * i, i)?;
    let theta = init_params(dims, rng);
    meta_train_from(theta, task_set, config, rng)
}

/// Meta-trains starting from `theta` (for example a reloaded checkpoint).
pub fn meta_train_from<R: Rng + ?Sized>(
    theta: ModelParams,
    task_set: &TaskSet,
    config: &MetaConfig,
    rng: &mut R,
) -> Result<MetaOutcome> {
    config.validate()?;
    if task_set.train_tasks.is_empty() {
        return Err(Error::InvalidArgument("task set has no training tasks".into()));
    }
    let expected = Dims::new(config.hidden, 3 * task_set.task_size, task_set.task_size)?;
    if theta.dims() != expected {
        return Err(Error::Shape(format!(
            "initial parameters {:?} do not fit tasks of {} stations with hidden {}",
            theta.dims(),
            task_set.task_size,
            config.hidden
        )));
    }
    let eval_seed: u64 = rng.gen();
    let evaluate = |theta: &ModelParams| {
        evaluate_meta(
            theta,
            &task_set.test_tasks,
            config.alpha,
            config.inner_steps,
            config.k_s,
            &mut ChaCha8Rng::seed_from_u64(eval_seed),
            config.execution,
        )
    };

    let start = Instant::now();
    let mut log = TrainingLog {
        header: vec![
            config.summary(),
            format!(
                "tasks={} task_size={} tau={}",
                task_set.train_tasks.len(),
                task_set.task_size,
                task_set.tau
            ),
        ],
        rows: Vec::new(),
    };
    let mut state = MetaState::new(theta);
    let initial = evaluate(&state.theta)?;
    state.best = Some((state.theta.clone(), initial));
    log.rows.push(LogRow {
        iter: 0,
        meta_loss: None,
        eval_loss: Some(initial),
        wall_ms: start.elapsed().as_millis(),
    });

    let mut stale = 0;
    let mut stopped_early = false;
    let mut divergence = None;
    while state.iteration < config.max_iterations {
        let batch = sample_episode(
            &task_set.train_tasks,
            config.tasks_per_iteration,
            config.k_s,
            config.k_q,
            rng,
        )?;
        let meta_loss = match meta_step(&mut state, &batch, config) {
            Ok(l) => l,
            Err(e @ (Error::Divergence { .. } | Error::NonFinite(_))) => {
                divergence = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };

        let it = state.iteration;
        let eval_loss = if it.is_multiple_of(config.eval_every) || it == config.max_iterations {
            let l = evaluate(&state.theta)?;
            if !l.is_finite() {
                divergence = Some(format!("evaluation loss {l} at iteration {it}"));
                break;
            }
            let best = state.best.as_ref().map_or(f64::INFINITY, |b| b.1);
            if l < best {
                state.best = Some((state.theta.clone(), l));
                stale = 0;
            } else {
                stale += 1;
            }
            Some(l)
        } else {
            None
        };
        log.rows.push(LogRow {
            iter: it,
            meta_loss: Some(meta_loss),
            eval_loss,
            wall_ms: start.elapsed().as_millis(),
        });
        if eval_loss.is_some() && config.patience > 0 && stale >= config.patience {
            stopped_early = true;
            break;
        }
    }

    let (theta0, best_eval_loss) = state.best.clone().expect("initial evaluation recorded");
    Ok(MetaOutcome {
        theta0,
        best_eval_loss,
        final_theta: state.theta,
        iterations: state.iteration,
        stopped_early,
        divergence,
        log,
    })
}
