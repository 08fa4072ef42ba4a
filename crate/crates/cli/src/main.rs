//! `metaflow` command-line tool.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 training
//! diverged, 3 file or checkpoint I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use metaflow::checkpoint::Checkpoint;
use metaflow::experiment::{
    adapt_target, dump_name, evaluate_dumps, load_series, run_bench, run_synth, run_train_source, write_bench,
    write_reports, ExperimentConfig, ModelKind,
};
use metaflow::Error;

#[derive(Parser)]
#[command(name = "metaflow", version, about = "Meta-learned LSTM for few-shot station inflow forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed. Overrides the config; one of the two must provide it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory. Overrides `paths.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic source and target CSVs plus a scenario manifest.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Meta-train the shared initialization on source stations.
    TrainSource {
        #[command(flatten)]
        common: Common,
        /// Source CSV. Overrides `paths.source_data`.
        #[arg(long)]
        source: Option<PathBuf>,
        /// Continue meta-training from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Fine-tune a checkpoint on target stations and predict their test days.
    Adapt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Target CSV. Overrides `paths.target_data`.
        #[arg(long)]
        target: Option<PathBuf>,
        /// Number of leading target days used for fine-tuning.
        #[arg(long, default_value_t = 1)]
        train_days: usize,
    },
    /// Score prediction dumps named `pred__<model>__d<days>[__s<seed>].csv`.
    Evaluate {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(required = true)]
        predictions: Vec<PathBuf>,
    },
    /// Run every model at every day budget for each bench seed.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Use the full-size reference budgets instead of the desk preset
        /// when no config file is given.
        #[arg(long)]
        full: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        e if e.is_validation() => 1,
        Error::Divergence { .. } | Error::NonFinite(_) => 2,
        _ => 3,
    }
}

fn load_config(common: &Common, fallback: ExperimentConfig) -> metaflow::Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => fallback,
    };
    if let Some(s) = common.seed {
        config.seed = Some(s);
    }
    if let Some(o) = &common.out {
        config.paths.out_dir = Some(o.clone());
    }
    config.validate()?;
    log::info!("config digest {}", config.digest()?);
    Ok(config)
}

fn out_dir(config: &ExperimentConfig) -> PathBuf {
    config.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn input_path(flag: &Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> metaflow::Result<PathBuf> {
    let p = flag
        .clone()
        .or_else(|| configured.clone())
        .ok_or_else(|| Error::Config(format!("no {what} given")))?;
    if !p.exists() {
        return Err(Error::Config(format!("{what} {} does not exist", p.display())));
    }
    Ok(p)
}

fn print_written(paths: &[&Path]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> metaflow::Result<()> {
    match cli.command {
        Command::Synth { common } => {
            let config = load_config(&common, ExperimentConfig::default())?;
            let out = run_synth(&config, &out_dir(&config))?;
            print_written(&[&out.source_csv, &out.target_csv, &out.manifest]);
        }
        Command::TrainSource { common, source, resume } => {
            let config = load_config(&common, ExperimentConfig::default())?;
            println!("{}", config.meta.summary());
            let source = load_series(&config, &input_path(&source, &config.paths.source_data, "source data")?)?;
            let resume = resume.map(|p| Checkpoint::load(&p)).transpose()?.map(|c| c.params);
            let out = run_train_source(&config, &source, resume, &out_dir(&config))?;
            print_written(&[&out.checkpoint, &out.log, &out.manifest]);
            println!(
                "iterations {}, best evaluation loss {:.6}{}",
                out.outcome.iterations,
                out.outcome.best_eval_loss,
                if out.outcome.stopped_early { " (stopped early)" } else { "" }
            );
            if let Some(message) = out.outcome.divergence {
                return Err(Error::Divergence {
                    iteration: out.outcome.iterations,
                    message: format!("{message}; last good parameters kept in {}", out.checkpoint.display()),
                });
            }
        }
        Command::Adapt { common, checkpoint, target, train_days } => {
            let config = load_config(&common, ExperimentConfig::default())?;
            let ck = Checkpoint::load(&checkpoint)?;
            let target = load_series(&config, &input_path(&target, &config.paths.target_data, "target data")?)?;
            let out = adapt_target(&config, &ck.params, &target, train_days)?;
            let dir = out_dir(&config);
            std::fs::create_dir_all(&dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
            let model = ModelKind::from_slug(&ck.model).unwrap_or(ModelKind::MetaLstm);
            let ckpt_path = dir.join(format!("{}_d{train_days}.ckpt", model.slug()));
            Checkpoint::new("adapted", model.slug(), &config.digest()?, out.adapted)
                .with_normalizers(out.normalizers)
                .save(&ckpt_path)?;
            let dump = dir.join(dump_name(model, train_days, config.seed));
            metaflow::adapt::write_predictions(&dump, &out.rows)?;
            print_written(&[&ckpt_path, &dump]);
        }
        Command::Evaluate { out, predictions } => {
            let reports = evaluate_dumps(&predictions)?;
            let dir = out.unwrap_or_else(|| PathBuf::from("out"));
            let (files, summary) = write_reports(&dir, &reports)?;
            print!("{}", metaflow::metrics::summary_table(&summary));
            print_written(&[&files.reports_csv, &files.summary_csv, &files.summary_txt]);
        }
        Command::Bench { common, full } => {
            let fallback = if full { ExperimentConfig::default() } else { ExperimentConfig::desk() };
            let config = load_config(&common, fallback)?;
            let start = std::time::Instant::now();
            let result = run_bench(&config)?;
            let files = write_bench(&config, &result, &out_dir(&config))?;
            print!("{}", metaflow::metrics::summary_table(&result.summary));
            println!("{} reports in {:.1}s", result.reports.len(), start.elapsed().as_secs_f64());
            print_written(&[&files.reports_csv, &files.summary_csv, &files.summary_txt]);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
