//! `optlist` command-line tool.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// An input config failed validation.
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] optlist::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Core(optlist::Error::IncompleteStore { .. }) => 4,
            CliError::Core(_) => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "optlist",
    version,
    about = "Learn ordered hyperparameter lists from a suite of synthetic tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample task configs for one family (or all) as JSONL.
    SampleTasks(SampleTasksArgs),
    /// Sample optimizer configs from a family's search space as JSONL.
    SampleOptimizers(SampleOptimizersArgs),
    /// Sample a whole benchmark: tasks from every family plus optimizer pools.
    SampleSuite(SampleSuiteArgs),
    /// Train every (task, optimizer, seed) triple into a store.
    Evaluate(EvaluateArgs),
    /// Learn a hyperparameter list from a store.
    LearnList(LearnListArgs),
    /// Score a learned list on tasks from a store.
    EvalList(EvalListArgs),
    /// Run one experiment protocol and write its report.
    Experiment(ExperimentArgs),
    /// Write the task × optimizer validation cost matrix as CSV.
    ExportFeatures(ExportFeaturesArgs),
}

/// Fill every `None` field of `args` from the same field of `cfg`.
macro_rules! overlay {
    ($args:ident, $cfg:ident; $($field:ident),* $(,)?) => {
        $( if $args.$field.is_none() { $args.$field = $cfg.$field.take(); } )*
    };
}

fn load_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn pick_flag(on: bool, off: bool) -> Option<bool> {
    match (on, off) {
        (true, _) => Some(true),
        (_, true) => Some(false),
        _ => None,
    }
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleTasksArgs {
    /// Task family name, or `all` to spread the count over every sampled family.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Re-sample past rejected configs (default).
    #[arg(long = "reject", conflicts_with = "no_reject")]
    #[serde(skip)]
    pub reject_flag: bool,
    /// Keep every sampled config.
    #[arg(long = "no-reject")]
    #[serde(skip)]
    pub no_reject: bool,
    #[arg(skip)]
    pub reject: Option<bool>,
    /// Per-run time budget used by rejection, in estimated seconds.
    #[arg(long)]
    pub max_run_seconds: Option<f64>,
    /// JSON file with defaults for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleOptimizersArgs {
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSuiteArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sampled tasks, spread evenly over the families.
    #[arg(long)]
    pub sampled_tasks: Option<usize>,
    #[arg(long)]
    pub max_run_seconds: Option<f64>,
    /// Draws per family before giving up on filling its share.
    #[arg(long)]
    pub max_attempts: Option<usize>,
    #[arg(long)]
    pub out_tasks: Option<PathBuf>,
    #[arg(long)]
    pub out_optimizers: Option<PathBuf>,
    /// Optimizer pools as `family=count`, comma separated.
    #[arg(long)]
    pub pools: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateArgs {
    /// JSONL of task configs.
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// JSONL of optimizer configs.
    #[arg(long)]
    pub opts: Option<PathBuf>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub eval_batches: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Store directory; defaults to $OPTLIST_STORE.
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnListArgs {
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Training tasks: JSONL configs or one task id per line. All stored tasks when absent.
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub normalizer: Option<String>,
    #[arg(long)]
    pub aggregator: Option<String>,
    /// Learn only from optimizers of this family.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalListArgs {
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// List JSON written by learn-list.
    #[arg(long)]
    pub list: Option<PathBuf>,
    /// Evaluation tasks; all stored tasks when absent.
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Optional CSV output: k,j_valid,j_test.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentArgs {
    /// Experiment spec JSON.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Experiment name; overrides the spec file.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub resamples: Option<usize>,
    #[arg(long)]
    pub master_seed: Option<u64>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportFeaturesArgs {
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub normalizer: Option<String>,
    #[arg(long)]
    pub aggregator: Option<String>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::SampleTasks(mut a) => {
            let mut c: SampleTasksArgs = load_config(&a.config)?;
            a.reject = pick_flag(a.reject_flag, a.no_reject);
            overlay!(a, c; family, count, seed, out, reject, max_run_seconds);
            commands::sample_tasks(a)
        }
        Command::SampleOptimizers(mut a) => {
            let mut c: SampleOptimizersArgs = load_config(&a.config)?;
            overlay!(a, c; family, count, seed, out);
            commands::sample_optimizers(a)
        }
        Command::SampleSuite(mut a) => {
            let mut c: SampleSuiteArgs = load_config(&a.config)?;
            overlay!(a, c; seed, sampled_tasks, max_run_seconds, max_attempts, out_tasks, out_optimizers, pools);
            commands::sample_suite(a)
        }
        Command::Evaluate(mut a) => {
            let mut c: EvaluateArgs = load_config(&a.config)?;
            overlay!(a, c; tasks, opts, seeds, steps, eval_every, eval_batches, workers, store);
            commands::evaluate(a)
        }
        Command::LearnList(mut a) => {
            let mut c: LearnListArgs = load_config(&a.config)?;
            overlay!(a, c; store, tasks, k, normalizer, aggregator, family, seeds, out);
            commands::learn_list(a)
        }
        Command::EvalList(mut a) => {
            let mut c: EvalListArgs = load_config(&a.config)?;
            overlay!(a, c; store, list, tasks, seeds, out);
            commands::eval_list(a)
        }
        Command::Experiment(mut a) => {
            let mut c: ExperimentArgs = load_config(&a.config)?;
            overlay!(a, c; spec, name, resamples, master_seed, store, out_dir);
            commands::experiment(a)
        }
        Command::ExportFeatures(mut a) => {
            let mut c: ExportFeaturesArgs = load_config(&a.config)?;
            overlay!(a, c; store, out, normalizer, aggregator, seeds);
            commands::export_features(a)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Core(optlist::Error::IncompleteStore { gaps }) = &e {
                for g in gaps.iter().take(20) {
                    eprintln!("  missing {g}");
                }
                if gaps.len() > 20 {
                    eprintln!("  ... and {} more", gaps.len() - 20);
                }
            }
            ExitCode::from(e.exit_code())
        }
    }
}
