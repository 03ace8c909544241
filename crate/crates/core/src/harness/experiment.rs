//! Experiment protocols over a completed store.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::split::{bucket_by_param_count, family_of, holdout_by_family, split_tasks_iid};
use super::stats::{pearson, spearman};
use crate::error::{Error, Result};
use crate::learner::{evaluate_indices, greedy_learn, posthoc_bounds, BandCurve, BestOfKCurve, BoundsMode};
use crate::optim::{OptimizerConfig, OptimizerFamily};
use crate::rng::RngKey;
use crate::scoring::{build_cost_matrix, Aggregator, CostMatrix, MatrixOptions, Normalizer, RunProfile};
use crate::store::Store;
use crate::task::Family;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    IidGeneralization,
    NumTasksSweep,
    FamilyHoldout,
    ParamCountBuckets,
    ShortHorizon,
    ThetaSizeSweep,
    CrossFamilyMatrix,
    NormalizationAblation,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::IidGeneralization,
        ExperimentKind::NumTasksSweep,
        ExperimentKind::FamilyHoldout,
        ExperimentKind::ParamCountBuckets,
        ExperimentKind::ShortHorizon,
        ExperimentKind::ThetaSizeSweep,
        ExperimentKind::CrossFamilyMatrix,
        ExperimentKind::NormalizationAblation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::IidGeneralization => "iid_generalization",
            ExperimentKind::NumTasksSweep => "num_tasks_sweep",
            ExperimentKind::FamilyHoldout => "family_holdout",
            ExperimentKind::ParamCountBuckets => "param_count_buckets",
            ExperimentKind::ShortHorizon => "short_horizon",
            ExperimentKind::ThetaSizeSweep => "theta_size_sweep",
            ExperimentKind::CrossFamilyMatrix => "cross_family_matrix",
            ExperimentKind::NormalizationAblation => "normalization_ablation",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
            Error::config(
                "name",
                format!("unknown experiment `{s}`; expected one of {}", names.join(", ")),
            )
        })
    }
}

mod defaults {
    use super::*;

    pub fn resamples() -> usize {
        20
    }
    pub fn train_fraction() -> f64 {
        0.5
    }
    pub fn k_max() -> usize {
        100
    }
    pub fn k_focus() -> usize {
        10
    }
    pub fn list_family() -> OptimizerFamily {
        OptimizerFamily::Adam8p
    }
    pub fn task_counts() -> Vec<usize> {
        vec![8, 16, 32, 64, 128]
    }
    pub fn horizons() -> Vec<usize> {
        vec![400]
    }
    pub fn theta_sizes() -> Vec<usize> {
        vec![16, 32, 64, 128, 256]
    }
}

/// One experiment run. Everything except `name` has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: ExperimentKind,
    #[serde(default)]
    pub profile: RunProfile,
    #[serde(default = "defaults::resamples")]
    pub resamples: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Fraction of tasks used for training in iid splits.
    #[serde(default = "defaults::train_fraction")]
    pub train_fraction: f64,
    /// Longest list (and random-search trial count) evaluated.
    #[serde(default = "defaults::k_max")]
    pub k_max: usize,
    /// List length at which per-resample summaries are reported.
    #[serde(default = "defaults::k_focus")]
    pub k_focus: usize,
    /// Optimizer family the learned lists choose from.
    #[serde(default = "defaults::list_family")]
    pub list_family: OptimizerFamily,
    /// Normalizer and aggregator of the training matrices.
    #[serde(default)]
    pub normalizer: Normalizer,
    #[serde(default)]
    pub aggregator: Aggregator,
    #[serde(default = "defaults::task_counts")]
    pub task_counts: Vec<usize>,
    #[serde(default)]
    pub holdout_families: Vec<Family>,
    /// Step horizons for short-horizon training matrices.
    #[serde(default = "defaults::horizons")]
    pub horizons: Vec<usize>,
    #[serde(default = "defaults::theta_sizes")]
    pub theta_sizes: Vec<usize>,
    /// Restrict to these task ids; all stored tasks when absent.
    #[serde(default)]
    pub tasks: Option<Vec<String>>,
}

impl ExperimentSpec {
    pub fn new(name: ExperimentKind) -> Self {
        ExperimentSpec {
            name,
            profile: RunProfile::default(),
            resamples: defaults::resamples(),
            master_seed: 0,
            train_fraction: defaults::train_fraction(),
            k_max: defaults::k_max(),
            k_focus: defaults::k_focus(),
            list_family: defaults::list_family(),
            normalizer: Normalizer::Default,
            aggregator: Aggregator::Mean,
            task_counts: defaults::task_counts(),
            holdout_families: Vec::new(),
            horizons: defaults::horizons(),
            theta_sizes: defaults::theta_sizes(),
            tasks: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(s).map_err(|e| Error::config("experiment", e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        if self.resamples == 0 {
            return Err(Error::config("resamples", "must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config(
                "train_fraction",
                format!("{} must be in (0, 1)", self.train_fraction),
            ));
        }
        if self.k_focus == 0 || self.k_max < self.k_focus {
            return Err(Error::config(
                "k_focus",
                format!("need 1 <= k_focus <= k_max, got {} and {}", self.k_focus, self.k_max),
            ));
        }
        match self.name {
            ExperimentKind::NumTasksSweep if self.task_counts.is_empty() || self.task_counts.contains(&0) => {
                Err(Error::config("task_counts", "need at least one positive count"))
            }
            ExperimentKind::FamilyHoldout if self.holdout_families.is_empty() => Err(Error::config(
                "holdout_families",
                "no families held out, test set would be empty",
            )),
            ExperimentKind::ShortHorizon if self.horizons.is_empty() => {
                Err(Error::config("horizons", "need at least one horizon"))
            }
            ExperimentKind::ShortHorizon => match self.horizons.iter().find(|&&h| h > self.profile.total_steps) {
                Some(h) => Err(Error::config(
                    "horizons",
                    format!("horizon {h} exceeds total_steps {}", self.profile.total_steps),
                )),
                None => Ok(()),
            },
            ExperimentKind::ThetaSizeSweep if self.theta_sizes.is_empty() || self.theta_sizes.contains(&0) => {
                Err(Error::config("theta_sizes", "need at least one positive size"))
            }
            _ => Ok(()),
        }
    }
}

/// Statistics of one condition across resamples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub name: String,
    pub band: BandCurve,
    /// Test J at `k_focus` (or the last available length) for each resample.
    pub test_at_focus: Vec<f64>,
}

impl ConditionResult {
    pub fn median_test_at(&self, k: usize) -> f64 {
        self.band.test.median_at(k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub store_hash: String,
    pub conditions: Vec<ConditionResult>,
    pub metadata: BTreeMap<String, Value>,
}

impl ExperimentReport {
    pub fn condition(&self, name: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.name == name)
    }

    /// Curves as CSV: `condition,k,j_median,j_p25,j_p75,split`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("condition,k,j_median,j_p25,j_p75,split\n");
        for c in &self.conditions {
            for (split, band) in [("valid", &c.band.valid), ("test", &c.band.test)] {
                for i in 0..band.median.len() {
                    s.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        c.name,
                        i + 1,
                        band.median[i],
                        band.p25[i],
                        band.p75[i],
                        split
                    ));
                }
            }
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Write `<name>.csv` and `<name>.json` into `dir`.
    pub fn write(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let name = self.spec.name.name();
        for (ext, body) in [("csv", self.to_csv()), ("json", self.to_json())] {
            let path = dir.join(format!("{name}.{ext}"));
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Immutable view of the store shared by every protocol.
struct Ctx<'a> {
    store: &'a Store,
    spec: &'a ExperimentSpec,
    tasks: Vec<String>,
    configs: Vec<&'a OptimizerConfig>,
    optimizers: Vec<String>,
    /// Default / mean costs: what every list is scored on.
    eval: CostMatrix,
    /// Costs under the spec's normalizer and aggregator.
    train: CostMatrix,
    theta: Vec<usize>,
    root: RngKey,
}

struct Accum {
    names: Vec<String>,
    curves: BTreeMap<String, Vec<BestOfKCurve>>,
}

impl Accum {
    fn new() -> Self {
        Accum {
            names: Vec::new(),
            curves: BTreeMap::new(),
        }
    }

    fn push(&mut self, name: impl Into<String>, curve: BestOfKCurve) {
        let name = name.into();
        if !self.curves.contains_key(&name) {
            self.names.push(name.clone());
        }
        self.curves.entry(name).or_default().push(curve);
    }

    fn finish(self, k_focus: usize) -> Vec<ConditionResult> {
        let mut curves = self.curves;
        self.names
            .into_iter()
            .map(|name| {
                let cs = curves.remove(&name).unwrap_or_default();
                ConditionResult {
                    band: BandCurve::from_curves(&cs),
                    test_at_focus: cs.iter().map(|c| c.at(k_focus, true)).collect(),
                    name,
                }
            })
            .collect()
    }
}

impl<'a> Ctx<'a> {
    fn new(store: &'a Store, spec: &'a ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        if store.profile() != spec.profile.fingerprint() {
            return Err(Error::IncompatibleProfile {
                store: store.profile().to_string(),
                record: spec.profile.fingerprint().to_string(),
            });
        }
        let tasks: Vec<String> = match &spec.tasks {
            Some(t) => t.clone(),
            None => store.tasks().keys().cloned().collect(),
        };
        if tasks.len() < 2 {
            return Err(Error::TooFewTasks(format!(
                "experiment needs at least 2 tasks, store has {}",
                tasks.len()
            )));
        }
        let optimizers: Vec<String> = store.optimizers().keys().cloned().collect();
        let configs: Vec<&OptimizerConfig> = store.optimizers().values().collect();
        let gaps = store.gaps(&tasks, &optimizers, spec.profile.seeds);
        if !gaps.is_empty() {
            return Err(Error::IncompleteStore { gaps });
        }
        let eval = build_cost_matrix(
            store,
            &tasks,
            &optimizers,
            spec.profile.seeds,
            &MatrixOptions::default(),
        )?;
        let train_opts = MatrixOptions {
            normalizer: spec.normalizer,
            aggregator: spec.aggregator,
            horizon: None,
        };
        let train = if train_opts == MatrixOptions::default() {
            eval.clone()
        } else {
            build_cost_matrix(store, &tasks, &optimizers, spec.profile.seeds, &train_opts)?
        };
        let theta: Vec<usize> = (0..configs.len())
            .filter(|&o| configs[o].family() == spec.list_family)
            .collect();
        if theta.is_empty() {
            return Err(Error::MissingData(format!(
                "store has no {} optimizers to learn from",
                spec.list_family
            )));
        }
        Ok(Ctx {
            store,
            spec,
            tasks,
            configs,
            optimizers,
            eval,
            train,
            theta,
            root: RngKey::from_seed(spec.master_seed).child_named(spec.name.name()),
        })
    }

    fn matrix(&self, opts: MatrixOptions) -> Result<CostMatrix> {
        if opts == MatrixOptions::default() {
            return Ok(self.eval.clone());
        }
        build_cost_matrix(
            self.store,
            &self.tasks,
            &self.optimizers,
            self.spec.profile.seeds,
            &opts,
        )
    }

    fn indices(&self, ids: &[String]) -> Vec<usize> {
        let pos: HashMap<&str, usize> = self.tasks.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        ids.iter().map(|t| pos[t.as_str()]).collect()
    }

    fn iid_split(&self, key: &RngKey) -> Result<(Vec<usize>, Vec<usize>)> {
        let (tr, te) = split_tasks_iid(&self.tasks, self.spec.train_fraction, key)?;
        Ok((self.indices(&tr), self.indices(&te)))
    }

    /// Greedy list over `theta` from `train` rows `tr`, scored on eval rows `te`.
    fn learned(&self, train: &CostMatrix, tr: &[usize], te: &[usize], theta: &[usize]) -> Result<BestOfKCurve> {
        let k = self.spec.k_max.min(theta.len());
        let g = greedy_learn(&train.select(tr, theta), k)?;
        let order: Vec<usize> = g.indices.iter().map(|&i| theta[i]).collect();
        Ok(evaluate_indices(&self.eval.select_tasks(te), &order))
    }

    fn random(&self, te: &[usize], eligible: &[usize], key: &RngKey) -> BestOfKCurve {
        let mut perm = eligible.to_vec();
        perm.shuffle(&mut key.stream());
        perm.truncate(self.spec.k_max);
        evaluate_indices(&self.eval.select_tasks(te), &perm)
    }

    /// Random-search pools, one per optimizer family present. The adam1p
    /// pool takes every Adam config whose non-lr fields sit at defaults.
    fn baselines(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for fam in OptimizerFamily::ALL {
            let pool: Vec<usize> = (0..self.configs.len())
                .filter(|&o| match fam {
                    OptimizerFamily::Adam1p => self.configs[o].is_lr_only(),
                    _ => self.configs[o].family() == fam,
                })
                .collect();
            if pool.is_empty() {
                continue;
            }
            if pool.len() < self.spec.k_max {
                log::warn!(
                    "rand_{fam}: {} configs, curves stop short of k = {}",
                    pool.len(),
                    self.spec.k_max
                );
            }
            out.push((format!("rand_{fam}"), pool));
        }
        out
    }

    fn report(&self, conditions: Vec<ConditionResult>, mut metadata: BTreeMap<String, Value>) -> ExperimentReport {
        metadata.insert("n_tasks".into(), json!(self.tasks.len()));
        metadata.insert("n_optimizers".into(), json!(self.optimizers.len()));
        metadata.insert("theta_size".into(), json!(self.theta.len()));
        ExperimentReport {
            spec: self.spec.clone(),
            store_hash: self.store.content_hash(),
            conditions,
            metadata,
        }
    }
}

fn push_baselines(ctx: &Ctx, acc: &mut Accum, pools: &[(String, Vec<usize>)], te: &[usize], key: &RngKey) {
    for (name, pool) in pools {
        acc.push(name.clone(), ctx.random(te, pool, &key.child_named(name)));
    }
}

fn iid_generalization(ctx: &Ctx) -> Result<ExperimentReport> {
    let pools = ctx.baselines();
    let adam8p: Vec<usize> = (0..ctx.configs.len())
        .filter(|&o| ctx.configs[o].family() == OptimizerFamily::Adam8p)
        .collect();
    let adam8p_configs: Vec<OptimizerConfig> = adam8p.iter().map(|&o| ctx.configs[o].clone()).collect();
    let mut acc = Accum::new();
    let mut posthoc_sizes: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for r in 0..ctx.spec.resamples {
        let key = ctx.root.child(r as u64);
        let (tr, te) = ctx.iid_split(&key.child_named("split"))?;
        acc.push("learned", ctx.learned(&ctx.train, &tr, &te, &ctx.theta)?);
        push_baselines(ctx, &mut acc, &pools, &te, &key);
        if adam8p.is_empty() {
            continue;
        }
        for (name, mode) in [
            ("posthoc_minmax", BoundsMode::Minmax),
            ("posthoc_percentile", BoundsMode::Percentile5_95),
        ] {
            let b = posthoc_bounds(&ctx.train.select(&tr, &adam8p), &adam8p_configs, mode)?;
            let eligible: Vec<usize> = b.eligible.iter().map(|&i| adam8p[i]).collect();
            posthoc_sizes.entry(name.to_string()).or_default().push(eligible.len());
            acc.push(name, ctx.random(&te, &eligible, &key.child_named(name)));
        }
    }
    let mut meta = BTreeMap::new();
    meta.insert("posthoc_eligible_sizes".into(), json!(posthoc_sizes));
    Ok(ctx.report(acc.finish(ctx.spec.k_focus), meta))
}

fn num_tasks_sweep(ctx: &Ctx) -> Result<ExperimentReport> {
    let n = ctx.tasks.len();
    let mut counts: Vec<usize> = ctx.spec.task_counts.iter().copied().filter(|&c| c < n).collect();
    counts.sort_unstable();
    counts.dedup();
    let Some(&largest) = counts.last() else {
        return Err(Error::TooFewTasks(format!(
            "every task count needs fewer than {n} tasks"
        )));
    };
    let mut acc = Accum::new();
    for r in 0..ctx.spec.resamples {
        let key = ctx.root.child(r as u64);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut key.child_named("perm").stream());
        // one test set per resample, shared by every training size
        let te = &perm[largest..];
        for &c in &counts {
            acc.push(
                format!("tasks_{c}"),
                ctx.learned(&ctx.train, &perm[..c], te, &ctx.theta)?,
            );
        }
    }
    let mut meta = BTreeMap::new();
    meta.insert("task_counts".into(), json!(counts));
    meta.insert("test_tasks_per_resample".into(), json!(n - largest));
    Ok(ctx.report(acc.finish(ctx.spec.k_focus), meta))
}

fn family_holdout(ctx: &Ctx) -> Result<ExperimentReport> {
    let (rest, held) = holdout_by_family(&ctx.tasks, &ctx.spec.holdout_families)?;
    let pools = ctx.baselines();
    let mut acc = Accum::new();
    for r in 0..ctx.spec.resamples {
        let key = ctx.root.child(r as u64);
        let (held_tr, held_te) = split_tasks_iid(&held, 0.5, &key.child_named("held"))?;
        let (rest_tr, _) = split_tasks_iid(&rest, ctx.spec.train_fraction, &key.child_named("rest"))
            .or_else(|_| Ok::<_, Error>((rest.clone(), Vec::new())))?;
        let te = ctx.indices(&held_te);
        acc.push(
            "learned",
            ctx.learned(&ctx.train, &ctx.indices(&rest_tr), &te, &ctx.theta)?,
        );
        acc.push(
            "best_case_same_family",
            ctx.learned(&ctx.train, &ctx.indices(&held_tr), &te, &ctx.theta)?,
        );
        push_baselines(ctx, &mut acc, &pools, &te, &key);
    }
    let mut meta = BTreeMap::new();
    meta.insert("held_out_tasks".into(), json!(held.len()));
    meta.insert("remaining_tasks".into(), json!(rest.len()));
    Ok(ctx.report(acc.finish(ctx.spec.k_focus), meta))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.retain(|x| x.is_finite());
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    crate::learner::quantile_sorted(&v, 0.5)
}

fn param_count_buckets(ctx: &Ctx) -> Result<ExperimentReport> {
    let buckets: BTreeMap<u32, Vec<String>> = bucket_by_param_count(&ctx.tasks, ctx.store)
        .into_iter()
        .filter(|(_, ts)| ts.len() >= 2)
        .collect();
    if buckets.is_empty() {
        return Err(Error::TooFewTasks(
            "no parameter-count bucket holds 2 or more tasks".into(),
        ));
    }
    let k = ctx.spec.k_focus;
    let mut acc = Accum::new();
    let mut ratios: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for r in 0..ctx.spec.resamples {
        let key = ctx.root.child(r as u64);
        let mut halves = BTreeMap::new();
        for (b, ts) in &buckets {
            let (tr, te) = split_tasks_iid(ts, 0.5, &key.child(u64::from(*b)))?;
            halves.insert(*b, (ctx.indices(&tr), ctx.indices(&te)));
        }
        let m = halves.values().map(|(tr, _)| tr.len()).min().unwrap_or(0);
        let mixture: Vec<usize> = halves.values().flat_map(|(tr, _)| tr[..m].iter().copied()).collect();
        let mut train_sets: Vec<(String, Vec<usize>)> = halves
            .iter()
            .map(|(b, (tr, _))| (format!("b{b}"), tr.clone()))
            .collect();
        train_sets.push(("mixture".into(), mixture));
        for (train_name, tr) in &train_sets {
            let j_train = ctx.learned(&ctx.train, tr, tr, &ctx.theta)?.at(k, true);
            for (c, (_, te)) in &halves {
                let curve = ctx.learned(&ctx.train, tr, te, &ctx.theta)?;
                let ratio = j_train / curve.at(k, true);
                ratios
                    .entry(format!("train_{train_name}"))
                    .or_default()
                    .entry(format!("test_b{c}"))
                    .or_default()
                    .push(ratio);
                acc.push(format!("train_{train_name}_test_b{c}"), curve);
            }
        }
    }
    let medians: BTreeMap<String, BTreeMap<String, f64>> = ratios
        .into_iter()
        .map(|(tr, row)| (tr, row.into_iter().map(|(te, v)| (te, median(v))).collect()))
        .collect();
    let mut meta = BTreeMap::new();
    meta.insert(
        "bucket_sizes".into(),
        json!(buckets
            .iter()
            .map(|(b, ts)| (format!("b{b}"), ts.len()))
            .collect::<BTreeMap<_, _>>()),
    );
    meta.insert(
        "ratio_definition".into(),
        json!(format!(
            "median over resamples of J_test(training tasks, k={k}) / J_test(test bucket, k={k})"
        )),
    );
    meta.insert("ratio_medians".into(), json!(medians));
    Ok(ctx.report(acc.finish(k), meta))
}

fn short_horizon(ctx: &Ctx) -> Result<ExperimentReport> {
    let mut horizons = ctx.spec.horizons.clone();
    horizons.sort_unstable();
    horizons.dedup();
    let matrices: Vec<(usize, CostMatrix)> = horizons
        .iter()
        .map(|&h| {
            let m = ctx.matrix(MatrixOptions {
                normalizer: ctx.spec.normalizer,
                aggregator: ctx.spec.aggregator,
                horizon: Some(h),
            })?;
            Ok((h, m))
        })
        .collect::<Result<_>>()?;
    let pools: Vec<(String, Vec<usize>)> = ctx
        .baselines()
        .into_iter()
        .filter(|(n, _)| n == "rand_adam8p" || n == "rand_adam1p")
        .collect();
    let mut acc = Accum::new();
    for r in 0..ctx.spec.resamples {
        let key = ctx.root.child(r as u64);
        let (tr, te) = ctx.iid_split(&key.child_named("split"))?;
        acc.push("learned_full", ctx.learned(&ctx.train, &tr, &te, &ctx.theta)?);
        for (h, m) in &matrices {
            acc.push(format!("learned_h{h}"), ctx.learned(m, &tr, &te, &ctx.theta)?);
        }
        push_baselines(ctx, &mut acc, &pools, &te, &key);
    }
    let mut meta = BTreeMap::new();
    meta.insert("horizons".into(), json!(horizons));
    meta.insert("total_steps".into(), json!(ctx.spec.profile.total_steps));
    Ok(ctx.report(acc.finish(ctx.spec.k_focus), meta))
}

fn theta_size_sweep(ctx: &Ctx) -> Result<ExperimentReport> {
    let mut sizes: Vec<usize> = ctx
        .spec
        .theta_sizes
        .iter()
        .copied()
        .filter(|&s| s <= ctx.theta.len())
        .collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.is_empty() {
        return Err(Error::config(
            "theta_sizes",
            format!("every size exceeds the {} available optimizers", ctx.theta.len()),
        ));
    }
    let pools: Vec<(String, Vec<usize>)> = ctx
        .baselines()
        .into_iter()
        .filter(|(n, _)| n == "rand_adam1p")
        .collect();
    let mut acc = Accum::new();
    for r in 0..ctx.spec.resamples {
        let key = ctx.root.child(r as u64);
        let (tr, te) = ctx.iid_split(&key.child_named("split"))?;
        let mut perm = ctx.theta.clone();
        perm.shuffle(&mut key.child_named("theta").stream());
        for &s in &sizes {
            let mut sub = perm[..s].to_vec();
            sub.sort_unstable();
            acc.push(format!("theta_{s}"), ctx.learned(&ctx.train, &tr, &te, &sub)?);
        }
        push_baselines(ctx, &mut acc, &pools, &te, &key);
    }
    let mut meta = BTreeMap::new();
    meta.insert("theta_sizes".into(), json!(sizes));
    Ok(ctx.report(acc.finish(ctx.spec.k_focus), meta))
}

fn cross_family_matrix(ctx: &Ctx) -> Result<ExperimentReport> {
    let mut by_family: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for t in &ctx.tasks {
        if let Some(f) = family_of(t) {
            by_family.entry(f.name().to_string()).or_default().push(t.clone());
        }
    }
    by_family.retain(|_, ts| ts.len() >= 2);
    if by_family.len() < 2 {
        return Err(Error::TooFewTasks("need two families with 2 or more tasks each".into()));
    }
    let k = ctx.spec.k_focus;
    let mut acc = Accum::new();
    for r in 0..ctx.spec.resamples {
        let key = ctx.root.child(r as u64);
        let mut halves = BTreeMap::new();
        for (f, ts) in &by_family {
            let (a, b) = split_tasks_iid(ts, 0.5, &key.child_named(f))?;
            halves.insert(f.clone(), (ctx.indices(&a), ctx.indices(&b)));
        }
        for (ftr, (a, _)) in &halves {
            for (fte, (_, b)) in &halves {
                acc.push(
                    format!("train_{ftr}_test_{fte}"),
                    ctx.learned(&ctx.train, a, b, &ctx.theta)?,
                );
            }
        }
    }
    let conditions = acc.finish(k);
    let families: Vec<&String> = by_family.keys().collect();
    // conditions come out in push order: train family major, test family minor
    let mut raw: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let pairs = families.iter().flat_map(|a| families.iter().map(move |b| (a, b)));
    for (c, (ftr, fte)) in conditions.iter().zip(pairs) {
        raw.entry(fte.to_string())
            .or_default()
            .insert(ftr.to_string(), c.median_test_at(k));
    }
    // per test family (column), rescale the training families' values to [0, 1]
    let mut normalized: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut diag_ok = 0;
    for (fte, col) in &raw {
        let lo = col.values().copied().fold(f64::INFINITY, f64::min);
        let hi = col.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let norm: BTreeMap<String, f64> = col
            .iter()
            .map(|(ftr, v)| (ftr.clone(), if hi > lo { (v - lo) / (hi - lo) } else { 0.0 }))
            .collect();
        let med = median(col.values().copied().collect());
        if col.get(fte).is_some_and(|d| *d <= med) {
            diag_ok += 1;
        }
        normalized.insert(fte.clone(), norm);
    }
    let mut meta = BTreeMap::new();
    meta.insert("families".into(), json!(families));
    meta.insert("median_test_j_by_test_then_train_family".into(), json!(raw));
    meta.insert("column_normalized".into(), json!(normalized));
    meta.insert(
        "diagonal_at_or_below_column_median".into(),
        json!(diag_ok as f64 / raw.len() as f64),
    );
    Ok(ctx.report(conditions, meta))
}

/// Per-task rank agreement between mean- and min-aggregated costs over the
/// optimizers that never diverged on that task.
fn aggregation_correlations(ctx: &Ctx, min_matrix: &CostMatrix) -> BTreeMap<String, f64> {
    let seeds = ctx.spec.profile.seeds as u64;
    let mut out = BTreeMap::new();
    for (t, task) in ctx.tasks.iter().enumerate() {
        let ok: Vec<usize> = (0..ctx.optimizers.len())
            .filter(|&o| {
                (0..seeds).all(|s| {
                    ctx.store
                        .get(task, &ctx.optimizers[o], s)
                        .is_some_and(|r| r.curve.diverged_at.is_none())
                })
            })
            .collect();
        if ok.len() < 10 {
            continue;
        }
        let a: Vec<f64> = ok.iter().map(|&o| ctx.eval.valid(t, o)).collect();
        let b: Vec<f64> = ok.iter().map(|&o| min_matrix.valid(t, o)).collect();
        out.insert(task.clone(), spearman(&a, &b).unwrap_or(f64::NAN));
    }
    out
}

fn normalization_ablation(ctx: &Ctx) -> Result<ExperimentReport> {
    let mut variants = Vec::new();
    for normalizer in [Normalizer::Default, Normalizer::Percentile95] {
        for aggregator in [Aggregator::Mean, Aggregator::Min] {
            let m = ctx.matrix(MatrixOptions {
                normalizer,
                aggregator,
                horizon: None,
            })?;
            variants.push((format!("learned_{normalizer}_{aggregator}"), m));
        }
    }
    let pools: Vec<(String, Vec<usize>)> = ctx
        .baselines()
        .into_iter()
        .filter(|(n, _)| n == "rand_adam8p")
        .collect();
    let mut acc = Accum::new();
    for r in 0..ctx.spec.resamples {
        let key = ctx.root.child(r as u64);
        let (tr, te) = ctx.iid_split(&key.child_named("split"))?;
        for (name, m) in &variants {
            acc.push(name.clone(), ctx.learned(m, &tr, &te, &ctx.theta)?);
        }
        push_baselines(ctx, &mut acc, &pools, &te, &key);
    }
    let min_matrix = &variants[1].1;
    let rho = aggregation_correlations(ctx, min_matrix);
    let finite: Vec<f64> = rho.values().copied().filter(|v| v.is_finite()).collect();
    let pct = &variants[2].1;
    let mut meta = BTreeMap::new();
    meta.insert("spearman_mean_vs_min_by_task".into(), json!(rho));
    meta.insert("spearman_tasks".into(), json!(rho.len()));
    meta.insert(
        "spearman_min".into(),
        json!(finite.iter().copied().fold(f64::INFINITY, f64::min)),
    );
    meta.insert(
        "spearman_all_positive".into(),
        json!(!rho.is_empty() && rho.values().all(|v| *v > 0.0)),
    );
    meta.insert(
        "pearson_default_vs_percentile".into(),
        json!(pearson(&ctx.eval.costs_valid, &pct.costs_valid)),
    );
    meta.insert(
        "pearson_mean_vs_min".into(),
        json!(pearson(&ctx.eval.costs_valid, &min_matrix.costs_valid)),
    );
    Ok(ctx.report(acc.finish(ctx.spec.k_focus), meta))
}

/// Run one experiment. Fails before producing anything if the store lacks a
/// needed record.
pub fn run_experiment(spec: &ExperimentSpec, store: &Store) -> Result<ExperimentReport> {
    let ctx = Ctx::new(store, spec)?;
    match spec.name {
        ExperimentKind::IidGeneralization => iid_generalization(&ctx),
        ExperimentKind::NumTasksSweep => num_tasks_sweep(&ctx),
        ExperimentKind::FamilyHoldout => family_holdout(&ctx),
        ExperimentKind::ParamCountBuckets => param_count_buckets(&ctx),
        ExperimentKind::ShortHorizon => short_horizon(&ctx),
        ExperimentKind::ThetaSizeSweep => theta_size_sweep(&ctx),
        ExperimentKind::CrossFamilyMatrix => cross_family_matrix(&ctx),
        ExperimentKind::NormalizationAblation => normalization_ablation(&ctx),
    }
}
