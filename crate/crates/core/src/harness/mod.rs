//! Sweeps, task splits and experiment protocols.

mod experiment;
mod split;
mod stats;
mod suite;
mod sweep;

pub use experiment::{run_experiment, ConditionResult, ExperimentKind, ExperimentReport, ExperimentSpec};
pub use split::{bucket_by_param_count, family_of, holdout_by_family, param_bucket, split_tasks_iid};
pub use stats::{average_ranks, pearson, spearman};
pub use suite::{even_shares, sample_optimizer_pool, sample_suite, Suite, SuiteConfig};
pub use sweep::{run_evaluation_sweep, SweepSummary};
