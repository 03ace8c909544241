//! Sampling of a whole benchmark: tasks from every family plus optimizer
//! pools.

use serde::{Deserialize, Serialize};

use crate::optim::{sample_optimizer, OptimizerConfig, OptimizerFamily};
use crate::rng::RngKey;
use crate::task::{fixed_twod, sample_accepted, Family, RejectReason, RejectionPolicy, TaskConfig, TwodTask};

fn default_pools() -> Vec<(OptimizerFamily, usize)> {
    vec![
        (OptimizerFamily::Adam8p, 256),
        (OptimizerFamily::Nadamw, 256),
        (OptimizerFamily::Adam1p, 32),
        (OptimizerFamily::Adam4p, 32),
    ]
}

/// What to sample. Defaults give 128 sampled tasks spread evenly over the
/// sampled families, the fixed 2D functions, and the optimizer pools used by
/// the experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub seed: u64,
    pub sampled_tasks: usize,
    pub families: Vec<Family>,
    pub include_twod: bool,
    pub optimizer_pools: Vec<(OptimizerFamily, usize)>,
    pub policy: RejectionPolicy,
    /// Draws per family before giving up on reaching its share.
    pub max_attempts: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 0,
            sampled_tasks: 128,
            families: Family::SAMPLED.to_vec(),
            include_twod: true,
            optimizer_pools: default_pools(),
            policy: RejectionPolicy::default(),
            max_attempts: 200_000,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Suite {
    pub tasks: Vec<TaskConfig>,
    pub optimizers: Vec<OptimizerConfig>,
    pub rejected: Vec<(String, RejectReason)>,
}

/// Split `total` over `n` slots as evenly as possible, earlier slots first.
pub fn even_shares(total: usize, n: usize) -> Vec<usize> {
    (0..n).map(|i| total / n + usize::from(i < total % n)).collect()
}

pub fn sample_optimizer_pool(family: OptimizerFamily, count: usize, key: &RngKey) -> Vec<OptimizerConfig> {
    let key = key.child_named(family.name());
    (0..count as u64)
        .map(|i| sample_optimizer(family, &key.child(i)))
        .collect()
}

pub fn sample_suite(config: &SuiteConfig) -> Suite {
    let root = RngKey::from_seed(config.seed);
    let task_key = root.child_named("tasks");
    let mut suite = Suite::default();
    for (family, share) in config
        .families
        .iter()
        .zip(even_shares(config.sampled_tasks, config.families.len()))
    {
        if share == 0 {
            continue;
        }
        let report = sample_accepted(
            *family,
            share,
            &task_key.child_named(family.name()),
            Some(&config.policy),
            config.max_attempts,
        );
        if report.accepted.len() < share {
            log::warn!("{family}: only {} of {share} tasks accepted", report.accepted.len());
        }
        suite.tasks.extend(report.accepted);
        suite.rejected.extend(report.rejected);
    }
    if config.include_twod {
        suite.tasks.extend(TwodTask::ALL.iter().map(|t| fixed_twod(*t)));
    }
    let opt_key = root.child_named("optimizers");
    for (family, count) in &config.optimizer_pools {
        suite
            .optimizers
            .extend(sample_optimizer_pool(*family, *count, &opt_key));
    }
    suite
}
