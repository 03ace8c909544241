//! Training runs, recorded curves, and their normalization into costs.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{step, OptimizerConfig, OptimizerState, ScheduleContext};
use crate::rng::RngKey;
use crate::store::Store;
use crate::task::{Batch, Split, TaskInstance};

/// Length and evaluation cadence of one training run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunProfile {
    pub total_steps: usize,
    pub eval_every: usize,
    pub eval_batches: usize,
    pub seeds: usize,
}

impl Default for RunProfile {
    fn default() -> Self {
        RunProfile {
            total_steps: 2000,
            eval_every: 50,
            eval_batches: 10,
            seeds: 3,
        }
    }
}

/// The part of a profile that determines a curve's shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFingerprint {
    pub total_steps: usize,
    pub eval_every: usize,
    pub eval_batches: usize,
}

impl std::fmt::Display for ProfileFingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "total_steps={} eval_every={} eval_batches={}",
            self.total_steps, self.eval_every, self.eval_batches
        )
    }
}

impl RunProfile {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 || self.eval_every == 0 || self.eval_batches == 0 || self.seeds == 0 {
            return Err(Error::config("profile", "all counts must be >= 1"));
        }
        if self.total_steps % self.eval_every != 0 {
            return Err(Error::config(
                "profile.eval_every",
                format!("{} does not divide total_steps {}", self.eval_every, self.total_steps),
            ));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> ProfileFingerprint {
        ProfileFingerprint {
            total_steps: self.total_steps,
            eval_every: self.eval_every,
            eval_batches: self.eval_batches,
        }
    }

    pub fn eval_points(&self) -> usize {
        self.total_steps / self.eval_every + 1
    }
}

mod loss_serde {
    //! Loss sequences with non-finite entries written as the string "NaN".
    use serde::de::{self, SeqAccess, Visitor};
    use serde::ser::SerializeSeq;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            if x.is_finite() {
                seq.serialize_element(x)?;
            } else {
                seq.serialize_element("NaN")?;
            }
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Entry {
            Num(f64),
            Marker(String),
        }
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Vec<f64>;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a sequence of numbers or \"NaN\"")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Vec<f64>, A::Error> {
                let mut out = Vec::with_capacity(seq.size_hint().unwrap_or(0));
                while let Some(e) = seq.next_element::<Entry>()? {
                    out.push(match e {
                        Entry::Num(x) => x,
                        Entry::Marker(m) if m == "NaN" => f64::NAN,
                        Entry::Marker(m) => return Err(de::Error::custom(format!("unexpected loss marker {m:?}"))),
                    });
                }
                Ok(out)
            }
        }
        d.deserialize_seq(V)
    }
}

/// Per-split losses at each evaluation step of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub task_id: String,
    pub optimizer_id: String,
    pub seed: u64,
    pub steps: Vec<usize>,
    #[serde(with = "loss_serde")]
    pub train_loss: Vec<f64>,
    #[serde(with = "loss_serde")]
    pub valid_loss: Vec<f64>,
    #[serde(with = "loss_serde")]
    pub test_loss: Vec<f64>,
    pub diverged_at: Option<usize>,
    pub n_params: usize,
    pub wall_time_s: f64,
}

impl TrainingCurve {
    pub fn split(&self, split: Split) -> &[f64] {
        match split {
            Split::Train => &self.train_loss,
            Split::Valid => &self.valid_loss,
            Split::Test => &self.test_loss,
        }
    }

    /// Number of eval points at or before `horizon` (all points when `None`).
    pub fn points_within(&self, horizon: Option<usize>) -> usize {
        match horizon {
            Some(h) => self.steps.iter().take_while(|&&s| s <= h).count(),
            None => self.steps.len(),
        }
    }

    /// Bitwise equality, treating NaN markers as equal to each other.
    pub fn same_values(&self, other: &TrainingCurve) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.task_id == other.task_id
            && self.optimizer_id == other.optimizer_id
            && self.seed == other.seed
            && self.steps == other.steps
            && bits(&self.train_loss) == bits(&other.train_loss)
            && bits(&self.valid_loss) == bits(&other.valid_loss)
            && bits(&self.test_loss) == bits(&other.test_loss)
            && self.diverged_at == other.diverged_at
            && self.n_params == other.n_params
    }
}

/// Key tree for one run. Shared across optimizers so every optimizer sees the
/// same initialization and batches for a given (task, seed).
fn run_key(task: &TaskInstance, seed: u64) -> RngKey {
    RngKey::from_seed(task.config().config_seed())
        .child_named(task.task_id())
        .child_named("run")
        .child(seed)
}

fn mean_loss(task: &TaskInstance, params: &[f64], split: Split, key: &RngKey, n: usize) -> f64 {
    let mut total = 0.0;
    for j in 0..n {
        let b = task.batch(split, &key.child(j as u64));
        total += task.loss(params, &b).unwrap_or(f64::NAN);
    }
    total / n as f64
}

/// Train `opt` on `task` and record the curve. Divergence is recorded, not
/// raised.
pub fn train_and_record(task: &TaskInstance, opt: &OptimizerConfig, seed: u64, profile: &RunProfile) -> TrainingCurve {
    let start = Instant::now();
    let n = task.param_count();
    let key = run_key(task, seed);
    let train_root = key.child_named("train");
    let eval_root = key.child_named("eval");
    let per_step_batches = task.uses_data() || task.is_stochastic();
    let fixed_batch = Batch::empty(0);

    let mut params = task.initial_params(seed);
    let mut state = OptimizerState::new(n);
    let mut grad = vec![0.0; n];
    let points = profile.eval_points();
    let mut steps = Vec::with_capacity(points);
    let mut losses: [Vec<f64>; 3] = Default::default();
    let mut diverged_at = None;

    let evaluate = |params: &[f64], step: usize, losses: &mut [Vec<f64>; 3]| -> bool {
        let e = eval_root.child((step / profile.eval_every) as u64);
        let vals: [f64; 3] = if task.uses_data() {
            Split::ALL.map(|s| mean_loss(task, params, s, &e.child_named(s.name()), profile.eval_batches))
        } else {
            // data-free losses do not depend on the batch
            let v = task.loss(params, &fixed_batch).unwrap_or(f64::NAN);
            [v; 3]
        };
        for (l, v) in losses.iter_mut().zip(vals) {
            l.push(v);
        }
        vals.iter().all(|v| v.is_finite())
    };

    let mut t = 0;
    loop {
        if t % profile.eval_every == 0 {
            steps.push(t);
            if !evaluate(&params, t, &mut losses) {
                diverged_at = Some(t);
                break;
            }
        }
        if t == profile.total_steps {
            break;
        }
        let batch = if per_step_batches {
            task.batch(Split::Train, &train_root.child(t as u64))
        } else {
            Batch::empty(0)
        };
        let ok = task.gradient_into(&params, &batch, &mut grad).is_ok()
            && step(
                opt,
                &mut state,
                &mut params,
                &mut grad,
                ScheduleContext {
                    t,
                    total: profile.total_steps,
                },
            )
            .is_ok();
        t += 1;
        if !ok || params.iter().any(|p| !p.is_finite()) {
            diverged_at = Some(t);
            break;
        }
    }
    if let Some(d) = diverged_at {
        // mark every eval point at or after the divergence step
        for (i, &s) in steps.iter().enumerate() {
            if s >= d {
                for l in losses.iter_mut() {
                    l[i] = f64::NAN;
                }
            }
        }
        let mut s = steps.last().map_or(0, |&s| s + profile.eval_every);
        while steps.len() < points {
            steps.push(s);
            for l in losses.iter_mut() {
                l.push(f64::NAN);
            }
            s += profile.eval_every;
        }
    }
    let [train_loss, valid_loss, test_loss] = losses;
    TrainingCurve {
        task_id: task.task_id().to_string(),
        optimizer_id: opt.optimizer_id().to_string(),
        seed,
        steps,
        train_loss,
        valid_loss,
        test_loss,
        diverged_at,
        n_params: n,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalizer {
    #[default]
    Default,
    Percentile95,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    #[default]
    Mean,
    Min,
}

impl std::fmt::Display for Normalizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Normalizer::Default => "default",
            Normalizer::Percentile95 => "percentile95",
        })
    }
}

impl std::fmt::Display for Aggregator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Aggregator::Mean => "mean",
            Aggregator::Min => "min",
        })
    }
}

impl std::str::FromStr for Normalizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Normalizer::Default),
            "percentile95" => Ok(Normalizer::Percentile95),
            _ => Err(Error::config(
                "normalizer",
                format!("`{s}`; valid: default, percentile95"),
            )),
        }
    }
}

impl std::str::FromStr for Aggregator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregator::Mean),
            "min" => Ok(Aggregator::Min),
            _ => Err(Error::config("aggregator", format!("`{s}`; valid: mean, min"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationConstants {
    pub task_id: String,
    pub init_valid_loss: f64,
    pub best_valid_loss: f64,
}

/// Linear map sending `init` to 1 and `best` to 0, clipped to [0, 1];
/// non-finite values map to 1.
pub fn normalize_values(values: &[f64], init: f64, best: f64) -> Vec<f64> {
    let span = init - best;
    values
        .iter()
        .map(|&v| {
            if v.is_finite() {
                ((v - best) / span).clamp(0.0, 1.0)
            } else {
                1.0
            }
        })
        .collect()
}

pub fn normalize_curve(curve: &TrainingCurve, c: &NormalizationConstants, split: Split) -> Result<Vec<f64>> {
    if curve.task_id != c.task_id {
        return Err(Error::InvalidInput(format!(
            "constants for {} applied to a curve of {}",
            c.task_id, curve.task_id
        )));
    }
    check_constants(c)?;
    Ok(normalize_values(
        curve.split(split),
        c.init_valid_loss,
        c.best_valid_loss,
    ))
}

fn check_constants(c: &NormalizationConstants) -> Result<()> {
    if !(c.init_valid_loss.is_finite() && c.best_valid_loss.is_finite() && c.init_valid_loss > c.best_valid_loss) {
        return Err(Error::DegenerateTask {
            task_id: c.task_id.clone(),
            init: c.init_valid_loss,
            best: c.best_valid_loss,
        });
    }
    Ok(())
}

pub fn aggregate(values: &[f64], aggregator: Aggregator) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("cannot aggregate an empty curve".into()));
    }
    Ok(match aggregator {
        Aggregator::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Aggregator::Min => values.iter().cloned().fold(f64::INFINITY, f64::min),
    })
}

/// Constants from a set of curves, looking only at eval points up to `horizon`.
pub fn default_constants<'a>(
    task_id: &str,
    curves: impl IntoIterator<Item = &'a TrainingCurve>,
    horizon: Option<usize>,
) -> Result<NormalizationConstants> {
    let mut init_sum = 0.0;
    let mut init_n = 0usize;
    let mut best = f64::INFINITY;
    for c in curves {
        let k = c.points_within(horizon);
        let v = &c.valid_loss[..k];
        if let Some(&first) = v.first() {
            if first.is_finite() {
                init_sum += first;
                init_n += 1;
            }
        }
        for &x in v {
            if x.is_finite() && x < best {
                best = x;
            }
        }
    }
    if init_n == 0 {
        return Err(Error::MissingData(format!("no finite curves for task {task_id}")));
    }
    let c = NormalizationConstants {
        task_id: task_id.to_string(),
        init_valid_loss: init_sum / init_n as f64,
        best_valid_loss: best,
    };
    check_constants(&c)?;
    Ok(c)
}

/// Nearest-rank percentile (`q` in (0, 1]) of an unsorted multiset.
pub fn nearest_rank(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

/// 95th percentile of all validation losses as "init", lowest final
/// validation loss as "best".
pub fn percentile_constants<'a>(
    task_id: &str,
    curves: impl IntoIterator<Item = &'a TrainingCurve>,
    horizon: Option<usize>,
) -> Result<NormalizationConstants> {
    let mut pooled = Vec::new();
    let mut best = f64::INFINITY;
    for c in curves {
        let k = c.points_within(horizon);
        let v = &c.valid_loss[..k];
        pooled.extend(v.iter().copied().filter(|x| x.is_finite()));
        if let Some(&last) = v.last() {
            if last.is_finite() && last < best {
                best = last;
            }
        }
    }
    if pooled.is_empty() {
        return Err(Error::MissingData(format!("no finite curves for task {task_id}")));
    }
    let c = NormalizationConstants {
        task_id: task_id.to_string(),
        init_valid_loss: nearest_rank(&mut pooled, 0.95),
        best_valid_loss: best,
    };
    check_constants(&c)?;
    Ok(c)
}

/// Normalized, seed-averaged costs over a task × optimizer grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    pub tasks: Vec<String>,
    pub optimizers: Vec<String>,
    /// Row-major `tasks × optimizers`.
    pub costs_valid: Vec<f64>,
    pub costs_test: Vec<f64>,
    pub normalizer: Normalizer,
    pub aggregator: Aggregator,
    pub store_hash: String,
}

impl CostMatrix {
    /// Matrix from raw grids, mainly for tests and simulations.
    pub fn from_grids(
        tasks: Vec<String>,
        optimizers: Vec<String>,
        costs_valid: Vec<f64>,
        costs_test: Vec<f64>,
    ) -> Result<Self> {
        let n = tasks.len() * optimizers.len();
        for grid in [&costs_valid, &costs_test] {
            if grid.len() != n {
                return Err(Error::Shape {
                    expected: n,
                    got: grid.len(),
                });
            }
            if let Some(v) = grid.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidInput(format!("cost {v} outside [0, 1]")));
            }
        }
        Ok(CostMatrix {
            tasks,
            optimizers,
            costs_valid,
            costs_test,
            normalizer: Normalizer::Default,
            aggregator: Aggregator::Mean,
            store_hash: String::new(),
        })
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn n_optimizers(&self) -> usize {
        self.optimizers.len()
    }

    #[inline]
    pub fn valid(&self, t: usize, o: usize) -> f64 {
        self.costs_valid[t * self.optimizers.len() + o]
    }

    #[inline]
    pub fn test(&self, t: usize, o: usize) -> f64 {
        self.costs_test[t * self.optimizers.len() + o]
    }

    pub fn optimizer_index(&self, id: &str) -> Option<usize> {
        self.optimizers.iter().position(|o| o == id)
    }

    /// Sub-matrix over the given task and optimizer indices (in that order).
    pub fn select(&self, tasks: &[usize], optimizers: &[usize]) -> CostMatrix {
        let mut v = Vec::with_capacity(tasks.len() * optimizers.len());
        let mut te = Vec::with_capacity(tasks.len() * optimizers.len());
        for &t in tasks {
            for &o in optimizers {
                v.push(self.valid(t, o));
                te.push(self.test(t, o));
            }
        }
        CostMatrix {
            tasks: tasks.iter().map(|&t| self.tasks[t].clone()).collect(),
            optimizers: optimizers.iter().map(|&o| self.optimizers[o].clone()).collect(),
            costs_valid: v,
            costs_test: te,
            normalizer: self.normalizer,
            aggregator: self.aggregator,
            store_hash: self.store_hash.clone(),
        }
    }

    pub fn select_tasks(&self, tasks: &[usize]) -> CostMatrix {
        let all: Vec<usize> = (0..self.n_optimizers()).collect();
        self.select(tasks, &all)
    }

    pub fn select_optimizers(&self, optimizers: &[usize]) -> CostMatrix {
        let all: Vec<usize> = (0..self.n_tasks()).collect();
        self.select(&all, optimizers)
    }
}

/// Options for [`build_cost_matrix`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatrixOptions {
    pub normalizer: Normalizer,
    pub aggregator: Aggregator,
    /// Use only eval points with step ≤ horizon (constants included).
    pub horizon: Option<usize>,
}

impl Default for MatrixOptions {
    fn default() -> Self {
        MatrixOptions {
            normalizer: Normalizer::Default,
            aggregator: Aggregator::Mean,
            horizon: None,
        }
    }
}

/// Normalization constants for one task from every curve the store holds.
pub fn store_constants(store: &Store, task_id: &str, opts: &MatrixOptions) -> Result<NormalizationConstants> {
    let curves = store.curves_for_task(task_id);
    if curves.is_empty() {
        return Err(Error::MissingData(format!("no curves for task {task_id}")));
    }
    match opts.normalizer {
        Normalizer::Default => default_constants(task_id, curves, opts.horizon),
        Normalizer::Percentile95 => percentile_constants(task_id, curves, opts.horizon),
    }
}

/// Seed-averaged normalized costs for every (task, optimizer) pair. Test costs
/// use the validation-derived constants.
pub fn build_cost_matrix(
    store: &Store,
    tasks: &[String],
    optimizers: &[String],
    seeds: usize,
    opts: &MatrixOptions,
) -> Result<CostMatrix> {
    let gaps = store.gaps(tasks, optimizers, seeds);
    if !gaps.is_empty() {
        return Err(Error::IncompleteStore { gaps });
    }
    let mut valid = Vec::with_capacity(tasks.len() * optimizers.len());
    let mut test = Vec::with_capacity(tasks.len() * optimizers.len());
    for t in tasks {
        let c = store_constants(store, t, opts)?;
        for o in optimizers {
            let (mut sv, mut st) = (0.0, 0.0);
            for seed in 0..seeds as u64 {
                let curve = &store.get(t, o, seed).expect("gaps checked").curve;
                let k = curve.points_within(opts.horizon);
                let nv = normalize_values(&curve.valid_loss[..k], c.init_valid_loss, c.best_valid_loss);
                let nt = normalize_values(&curve.test_loss[..k], c.init_valid_loss, c.best_valid_loss);
                sv += aggregate(&nv, opts.aggregator)?;
                st += aggregate(&nt, opts.aggregator)?;
            }
            valid.push(sv / seeds as f64);
            test.push(st / seeds as f64);
        }
    }
    Ok(CostMatrix {
        tasks: tasks.to_vec(),
        optimizers: optimizers.to_vec(),
        costs_valid: valid,
        costs_test: test,
        normalizer: opts.normalizer,
        aggregator: opts.aggregator,
        store_hash: store.content_hash(),
    })
}
