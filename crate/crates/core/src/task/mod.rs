//! Task families: configs, sampling, instantiation and rejection.

mod config;
mod instance;
mod nn;
mod objectives;
mod reject;
mod sampler;

pub use config::*;
pub use instance::{Batch, BatchTargets, Split, TaskInstance};
pub use nn::{Head, Mlp};
pub use objectives::{CHAIN_TAU, LOG_EPS};
pub use reject::{
    cost_estimate, estimated_run_seconds, reject_instance, reject_task, sample_accepted, CostEstimate, RejectReason,
    RejectionPolicy, SampleReport, Verdict, FLOPS_PER_SECOND, PROBE_LRS,
};
pub use sampler::{fixed_twod, sample_params, sample_task_config, JUST_TRAIN_PROB, TRANSFORM_PROB};

/// Instantiate a validated config.
pub fn instantiate(config: TaskConfig) -> crate::Result<TaskInstance> {
    TaskInstance::new(config)
}
