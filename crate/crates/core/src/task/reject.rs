//! Rejection of tasks that are too slow, broken at init, or unoptimizable.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::optim::{step, AdamHparams, OptimizerConfig, OptimizerFamily, OptimizerState, ScheduleContext};
use crate::rng::RngKey;
use crate::scoring::RunProfile;

use super::config::*;
use super::instance::{Split, TaskInstance};
use super::objectives::LOG_EPS;

/// Floating-point operations per second assumed when turning operation counts
/// into seconds; set so estimates roughly match measured single-core runs.
pub const FLOPS_PER_SECOND: f64 = 3.0e9;

/// Learning rates of the optimizability probe.
pub const PROBE_LRS: [f64; 3] = [1e-4, 1e-3, 1e-2];

/// Relative loss change below which a probe counts as "did not move".
pub const PROBE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RejectionPolicy {
    /// Steps per probe run.
    pub probe_budget: usize,
    /// Upper bound on the estimated seconds of one full training run.
    pub max_run_seconds: f64,
    pub profile: RunProfile,
}

impl Default for RejectionPolicy {
    fn default() -> Self {
        RejectionPolicy {
            probe_budget: 100,
            max_run_seconds: 0.02,
            profile: RunProfile::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    InvalidConfig(String),
    NonFiniteInit,
    Unoptimizable,
    TooSlow { estimated_s: f64, budget_s: f64 },
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::InvalidConfig(m) => write!(f, "invalid config: {m}"),
            RejectReason::NonFiniteInit => f.write_str("non-finite-init"),
            RejectReason::Unoptimizable => f.write_str("unoptimizable"),
            RejectReason::TooSlow { estimated_s, budget_s } => {
                write!(f, "too-slow (estimated {estimated_s:.3}s > budget {budget_s:.3}s)")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

/// Operation counts for one task, derived from its config alone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostEstimate {
    pub params: usize,
    pub grad_flops: f64,
    pub loss_flops: f64,
    /// Cost of drawing one batch; zero for data-free tasks.
    pub batch_flops: f64,
    pub stochastic: bool,
}

fn mlp_costs(sizes: &[usize], bs: usize) -> (usize, f64, f64) {
    let params: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let macs: usize = sizes.windows(2).map(|w| w[0] * w[1]).sum();
    let units: usize = sizes[1..].iter().sum();
    let (b, m, u) = (bs as f64, macs as f64, units as f64);
    (params, 6.0 * b * m + 40.0 * b * u, 2.0 * b * m + 20.0 * b * u)
}

const KEY_FLOPS: f64 = 300.0;

pub fn cost_estimate(config: &TaskConfig) -> CostEstimate {
    let sq = |d: usize| (d * d) as f64;
    let mut stochastic = false;
    let (params, grad, loss, batch) = match config.params() {
        TaskParams::TwodFixed(_) => (2, 60.0, 40.0, 0.0),
        TaskParams::LosgBowl(p) => {
            stochastic = p.noise.is_some();
            (2, 20.0, 10.0, 0.0)
        }
        TaskParams::LosgQuadratic(p) => {
            stochastic = p.noise.is_some();
            (p.dim, 4.0 * sq(p.dim), 2.0 * sq(p.dim), 0.0)
        }
        TaskParams::LosgNorm(p) => (
            p.dim,
            4.0 * sq(p.dim) + 80.0 * p.dim as f64,
            2.0 * sq(p.dim) + 40.0 * p.dim as f64,
            0.0,
        ),
        TaskParams::LosgDependencyChain(p) => (p.dim, 60.0 * p.dim as f64, 30.0 * p.dim as f64, 0.0),
        TaskParams::LosgMinMaxWell(p) => {
            stochastic = p.noise.is_some();
            (p.dim, 10.0 * p.dim as f64, 6.0 * p.dim as f64, 0.0)
        }
        TaskParams::LosgOutwardSnake(p) => {
            let f = (p.bs * p.dim) as f64 + 80.0 * p.dim as f64;
            (p.dim, f, f, (p.bs * p.dim) as f64 + 20.0 * p.bs as f64)
        }
        TaskParams::LosgSumOfQuadratics(p) => {
            let f = (p.bs * p.dim) as f64;
            (p.dim, 4.0 * f, 2.0 * f, f + 20.0 * p.bs as f64)
        }
        TaskParams::QuadraticLike(p) => {
            stochastic = p.noise.is_some();
            (p.dims, 4.0 * sq(p.dims) + 4.0 * p.dims as f64, 2.0 * sq(p.dims), 0.0)
        }
        TaskParams::LosgFullyConnected(p) => {
            let mut sizes = vec![p.n_features];
            sizes.extend(&p.hidden_sizes);
            sizes.push(p.n_classes);
            let (n, g, l) = mlp_costs(&sizes, p.bs);
            (n, g, l, (p.bs * p.n_features) as f64 + 20.0 * p.bs as f64)
        }
        TaskParams::MlpClassificationSynthetic(p) => {
            let d = &p.dataset;
            let mut sizes = vec![d.n_features];
            sizes.extend(&p.layer_sizes);
            sizes.push(d.n_classes);
            let (n, g, l) = mlp_costs(&sizes, d.bs);
            (n, g, l, (d.bs * d.n_features) as f64 + 20.0 * d.bs as f64)
        }
        TaskParams::MlpAeSynthetic(p) => {
            let d = &p.dataset;
            let mut sizes = vec![d.n_features];
            sizes.extend(&p.hidden_units);
            sizes.push(d.n_features);
            let (n, g, l) = mlp_costs(&sizes, d.bs);
            (n, g, l, (d.bs * d.n_features) as f64 + 20.0 * d.bs as f64)
        }
    };
    let mut grad = grad;
    if stochastic {
        grad += 30.0 * params as f64;
    }
    if let Some(Transform::SparseProblems { .. }) = config.transform() {
        stochastic = true;
        grad += 40.0 * params as f64;
    }
    CostEstimate {
        params,
        grad_flops: grad,
        loss_flops: loss,
        batch_flops: batch,
        stochastic,
    }
}

/// Estimated seconds for one training run under `profile`.
pub fn estimated_run_seconds(config: &TaskConfig, profile: &RunProfile) -> f64 {
    let c = cost_estimate(config);
    let uses_data = c.batch_flops > 0.0;
    let per_step_batch = if uses_data || c.stochastic {
        c.batch_flops + KEY_FLOPS
    } else {
        0.0
    };
    let update = 30.0 * c.params as f64;
    let train = profile.total_steps as f64 * (c.grad_flops + update + per_step_batch);
    let per_eval = if uses_data {
        3.0 * profile.eval_batches as f64 * (c.loss_flops + c.batch_flops + KEY_FLOPS)
    } else {
        c.loss_flops
    };
    let eval = profile.eval_points() as f64 * per_eval;
    (train + eval) / FLOPS_PER_SECOND
}

/// Whether any canonical Adam learning rate moves the loss within
/// `steps` steps.
fn probe_moves(task: &TaskInstance, steps: usize) -> bool {
    let key = RngKey::from_seed(task.config().config_seed()).child_named("probe");
    let eval_batch = task.batch(Split::Train, &key.child_named("eval"));
    let init = task.initial_params(0);
    let Ok(l0) = task.loss(&init, &eval_batch) else {
        return false;
    };
    let n = task.param_count();
    for lr in PROBE_LRS {
        let opt = OptimizerConfig::adam(OptimizerFamily::Adam1p, AdamHparams::with_lr(lr)).expect("valid lr");
        let mut params = init.clone();
        let mut state = OptimizerState::new(n);
        let mut grad = vec![0.0; n];
        let train = key.child_named("train");
        for t in 0..steps {
            let b = task.batch(Split::Train, &train.child(t as u64));
            if task.gradient_into(&params, &b, &mut grad).is_err() {
                break;
            }
            if step(
                &opt,
                &mut state,
                &mut params,
                &mut grad,
                ScheduleContext { t, total: steps },
            )
            .is_err()
            {
                break;
            }
        }
        if let Ok(l1) = task.loss(&params, &eval_batch) {
            let moved = if l0 == 0.0 {
                l1 != 0.0 && l1.is_finite()
            } else {
                ((l1 - l0) / l0).abs() > PROBE_TOLERANCE
            };
            if moved && l1.is_finite() {
                return true;
            }
        }
    }
    false
}

/// Accept or reject a config. Checks run cheapest first: the time estimate
/// (from the config alone), instantiation, the loss at init, then the probe.
pub fn reject_task(config: &TaskConfig, policy: &RejectionPolicy) -> Verdict {
    let est = estimated_run_seconds(config, &policy.profile);
    if est > policy.max_run_seconds {
        return Verdict::Reject(RejectReason::TooSlow {
            estimated_s: est,
            budget_s: policy.max_run_seconds,
        });
    }
    let task = match TaskInstance::new(config.clone()) {
        Ok(t) => t,
        Err(e) => return Verdict::Reject(RejectReason::InvalidConfig(e.to_string())),
    };
    reject_instance(&task, policy.probe_budget.max(1))
}

/// Rules that need an instance: non-finite init, then the probe.
pub fn reject_instance(task: &TaskInstance, probe_budget: usize) -> Verdict {
    let key = RngKey::from_seed(task.config().config_seed()).child_named("init-check");
    let batch = task.batch(Split::Train, &key);
    let params = task.initial_params(0);
    let init_ok = match task.loss(&params, &batch) {
        Ok(l) => l.is_finite() && params.iter().all(|p| p.is_finite()),
        Err(_) => false,
    };
    if !init_ok {
        return Verdict::Reject(RejectReason::NonFiniteInit);
    }
    if let Some(Transform::LogObjective) = task.config().transform() {
        // the log floor hides an objective already at (or below) zero
        if !matches!(task.untransformed_loss(&params, &batch), Ok(v) if v > LOG_EPS) {
            return Verdict::Reject(RejectReason::NonFiniteInit);
        }
    }
    if !probe_moves(task, probe_budget) {
        return Verdict::Reject(RejectReason::Unoptimizable);
    }
    Verdict::Accept
}

/// Outcome of sampling with rejection.
#[derive(Clone, Debug, Default)]
pub struct SampleReport {
    pub accepted: Vec<TaskConfig>,
    pub rejected: Vec<(String, RejectReason)>,
}

/// Sample `count` accepted configs for `family`, re-sampling past rejections.
/// Gives up after `max_attempts` draws.
pub fn sample_accepted(
    family: Family,
    count: usize,
    key: &RngKey,
    policy: Option<&RejectionPolicy>,
    max_attempts: usize,
) -> SampleReport {
    let mut report = SampleReport::default();
    let mut i = 0u64;
    while report.accepted.len() < count && (i as usize) < max_attempts {
        let config = super::sampler::sample_task_config(family, &key.child(i));
        i += 1;
        match policy.map(|p| reject_task(&config, p)) {
            None | Some(Verdict::Accept) => report.accepted.push(config),
            Some(Verdict::Reject(r)) => report.rejected.push((config.task_id().to_string(), r)),
        }
    }
    report
}
