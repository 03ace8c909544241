//! Greedy list learning, exact subset search, list evaluation and
//! random-search baselines over a [`CostMatrix`].

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{Hparams, OptimizerConfig};
use crate::rng::RngKey;
use crate::scoring::{nearest_rank, Aggregator, CostMatrix, Normalizer};
use crate::store::Gap;

/// Largest number of subsets [`brute_force_learn`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u64 = 1_000_000;

/// Objective differences at or below this count as ties, so that costs which
/// tie in decimal (0.2 + 0.4 against 0.5 + 0.1) still break by index.
pub const TIE_TOLERANCE: f64 = 1e-12;

fn improves(j: f64, incumbent: Option<f64>) -> bool {
    incumbent.is_none_or(|b| j < b - TIE_TOLERANCE)
}

/// Where a list came from; enough to regenerate it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub training_tasks: Vec<String>,
    pub store_hash: String,
    pub normalizer: Normalizer,
    pub aggregator: Aggregator,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterList {
    pub k: usize,
    pub provenance: Provenance,
    pub entries: Vec<OptimizerConfig>,
}

impl HyperparameterList {
    pub fn optimizer_ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.optimizer_id().to_string()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("list serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let list: HyperparameterList = serde_json::from_str(s).map_err(|e| Error::config("list", e.to_string()))?;
        if list.entries.len() != list.k {
            return Err(Error::config(
                "list.entries",
                format!("expected {} entries, got {}", list.k, list.entries.len()),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &list.entries {
            if !seen.insert(e.optimizer_id()) {
                return Err(Error::config(
                    "list.entries",
                    format!("duplicate entry {}", e.optimizer_id()),
                ));
            }
        }
        Ok(list)
    }

    /// Plain-text table, one row per entry. NAdamW lists use the column order
    /// lr, warmup, constant, min_lr_mult, beta1, beta2, epsilon, nesterov,
    /// l2_reg, l2_weight_decay.
    pub fn table(&self) -> String {
        let mut rows: Vec<Vec<String>> = Vec::new();
        let header: Vec<String> = match self.entries.first().map(|e| e.hparams()) {
            Some(Hparams::Nadamw(_)) => [
                "idx",
                "lr",
                "warmup",
                "constant",
                "min_lr_mult",
                "beta1",
                "beta2",
                "epsilon",
                "nesterov",
                "l2_reg",
                "l2_weight_decay",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            Some(_) => std::iter::once("idx".to_string())
                .chain(
                    [
                        "family",
                        "lr",
                        "beta1",
                        "beta2",
                        "epsilon",
                        "linear_decay",
                        "exp_decay",
                        "l1",
                        "l2",
                    ]
                    .map(String::from),
                )
                .collect(),
            None => vec!["idx".to_string()],
        };
        rows.push(header);
        for (i, e) in self.entries.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(table_cells(e));
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r.get(c).map_or(0, |s| s.len())).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in rows {
            let line: Vec<String> = r.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// Scientific notation with `digits` decimals; non-negative exponents are
/// signed and padded to two digits (`1.079e+02`, `8.114e-8`).
pub fn sci(v: f64, digits: usize) -> String {
    let s = format!("{v:.digits$e}");
    match s.split_once('e') {
        Some((m, e)) if !e.starts_with('-') => format!("{m}e+{:0>2}", e),
        _ => s,
    }
}

/// Formatted cells of one list entry, without the index column.
pub fn table_cells(cfg: &OptimizerConfig) -> Vec<String> {
    match cfg.hparams() {
        Hparams::Nadamw(h) => vec![
            sci(h.lr, 2),
            format!("{:.3}", h.warmup),
            format!("{:.3}", h.constant),
            if h.min_lr_mult == 0.0 {
                "0.0".into()
            } else {
                sci(h.min_lr_mult, 2)
            },
            format!("{:.5}", h.beta1),
            format!("{:.5}", h.beta2),
            sci(h.epsilon, 3),
            if h.use_nesterov { "True".into() } else { "False".into() },
            sci(h.l2_wd, 3),
            sci(h.l2_adamw, 3),
        ],
        Hparams::Adam(h) => vec![
            cfg.family().name().to_string(),
            sci(h.lr, 2),
            format!("{:.5}", h.beta1),
            format!("{:.5}", h.beta2),
            sci(h.epsilon, 3),
            sci(h.linear_decay, 3),
            sci(h.exp_decay, 3),
            sci(h.l1, 3),
            sci(h.l2, 3),
        ],
    }
}

/// Greedy selection over matrix columns plus the validation objective after
/// each pick.
#[derive(Clone, Debug, PartialEq)]
pub struct GreedyResult {
    pub indices: Vec<usize>,
    pub j_valid: Vec<f64>,
}

fn mean_of_min(costs: &CostMatrix, best: &[f64], o: usize) -> f64 {
    let mut s = 0.0;
    for (t, b) in best.iter().enumerate() {
        s += b.min(costs.valid(t, o));
    }
    s / best.len() as f64
}

/// Pick `k` optimizers one at a time, each minimizing the mean over tasks of
/// the running per-task best validation cost. Ties (within [`TIE_TOLERANCE`]) go to the lowest index; an
/// optimizer id is never picked twice.
pub fn greedy_learn(costs: &CostMatrix, k: usize) -> Result<GreedyResult> {
    let n = costs.n_optimizers();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, max: n });
    }
    if costs.n_tasks() == 0 {
        return Err(Error::TooFewTasks("cost matrix has no tasks".into()));
    }
    let mut best = vec![f64::INFINITY; costs.n_tasks()];
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut trace = Vec::with_capacity(k);
    for _ in 0..k {
        let mut pick: Option<(usize, f64)> = None;
        for o in 0..n {
            if chosen.iter().any(|&c| costs.optimizers[c] == costs.optimizers[o]) {
                continue;
            }
            let j = mean_of_min(costs, &best, o);
            if improves(j, pick.map(|p| p.1)) {
                pick = Some((o, j));
            }
        }
        let Some((o, j)) = pick else {
            // only duplicate ids remain
            return Err(Error::InvalidK { k, max: chosen.len() });
        };
        for (t, b) in best.iter_mut().enumerate() {
            *b = b.min(costs.valid(t, o));
        }
        chosen.push(o);
        trace.push(j);
    }
    Ok(GreedyResult {
        indices: chosen,
        j_valid: trace,
    })
}

/// Greedy list with provenance, entries resolved through `configs`.
pub fn learn_list(
    costs: &CostMatrix,
    k: usize,
    configs: &std::collections::BTreeMap<String, OptimizerConfig>,
) -> Result<HyperparameterList> {
    let g = greedy_learn(costs, k)?;
    let entries = g
        .indices
        .iter()
        .map(|&o| {
            let id = &costs.optimizers[o];
            configs
                .get(id)
                .cloned()
                .ok_or_else(|| Error::MissingData(format!("no config for optimizer {id}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HyperparameterList {
        k,
        provenance: Provenance {
            training_tasks: costs.tasks.clone(),
            store_hash: costs.store_hash.clone(),
            normalizer: costs.normalizer,
            aggregator: costs.aggregator,
            k,
        },
        entries,
    })
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > u64::MAX as u128 {
            return c;
        }
    }
    c
}

/// Exact minimizer of the mean per-task minimum over all `k`-subsets.
/// Returns the lexicographically first optimal subset and its objective.
pub fn brute_force_learn(costs: &CostMatrix, k: usize) -> Result<(Vec<usize>, f64)> {
    let n = costs.n_optimizers();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, max: n });
    }
    if costs.n_tasks() == 0 {
        return Err(Error::TooFewTasks("cost matrix has no tasks".into()));
    }
    let count = binomial(n, k);
    if count > u128::from(BRUTE_FORCE_LIMIT) {
        return Err(Error::TooLarge {
            n,
            k,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let mut s = 0.0;
        for t in 0..costs.n_tasks() {
            s += idx.iter().map(|&o| costs.valid(t, o)).fold(f64::INFINITY, f64::min);
        }
        let j = s / costs.n_tasks() as f64;
        if improves(j, best.as_ref().map(|b| b.1)) {
            best = Some((idx.clone(), j));
        }
        // next combination in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(best.expect("at least one subset"));
            }
            i -= 1;
            if idx[i] < n - k + i {
                break;
            }
            if i == 0 {
                return Ok(best.expect("at least one subset"));
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Objective values for list prefixes of length 1..=k.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestOfKCurve {
    pub j_valid: Vec<f64>,
    pub j_test: Vec<f64>,
}

impl BestOfKCurve {
    pub fn len(&self) -> usize {
        self.j_valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.j_valid.is_empty()
    }

    /// Value at list length `k` (1-based), clamped to the last entry.
    pub fn at(&self, k: usize, test: bool) -> f64 {
        let v = if test { &self.j_test } else { &self.j_valid };
        v[k.clamp(1, v.len()) - 1]
    }
}

/// Evaluate matrix columns in the given order. For each prefix, every task
/// uses the entry with the lowest validation cost (earliest on ties) and is
/// scored by that entry's test cost.
pub fn evaluate_indices(costs: &CostMatrix, order: &[usize]) -> BestOfKCurve {
    let nt = costs.n_tasks();
    let mut best_v = vec![f64::INFINITY; nt];
    let mut best_t = vec![f64::NAN; nt];
    let mut curve = BestOfKCurve {
        j_valid: Vec::with_capacity(order.len()),
        j_test: Vec::with_capacity(order.len()),
    };
    for &o in order {
        let (mut sv, mut st) = (0.0, 0.0);
        for t in 0..nt {
            let v = costs.valid(t, o);
            let m = best_v[t].min(v);
            if v < best_v[t] {
                best_t[t] = costs.test(t, o);
            }
            best_v[t] = m;
            sv += m;
            st += best_t[t];
        }
        curve.j_valid.push(sv / nt as f64);
        curve.j_test.push(st / nt as f64);
    }
    curve
}

/// Evaluate a list by optimizer id. Every entry must be a matrix column.
pub fn evaluate_list(ids: &[String], costs: &CostMatrix) -> Result<BestOfKCurve> {
    let mut order = Vec::with_capacity(ids.len());
    let mut gaps = Vec::new();
    for id in ids {
        match costs.optimizer_index(id) {
            Some(o) => order.push(o),
            None => gaps.extend(costs.tasks.iter().map(|t| Gap {
                task_id: t.clone(),
                optimizer_id: id.clone(),
                seed: 0,
            })),
        }
    }
    if !gaps.is_empty() {
        return Err(Error::IncompleteStore { gaps });
    }
    if costs.n_tasks() == 0 {
        return Err(Error::TooFewTasks("cost matrix has no tasks".into()));
    }
    Ok(evaluate_indices(costs, &order))
}

/// Median and quartiles across resamples, per list length.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub median: Vec<f64>,
    pub p25: Vec<f64>,
    pub p75: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Band {
    /// Band over equal-length samples (one sample per resample).
    pub fn from_samples(samples: &[Vec<f64>]) -> Band {
        let len = samples.iter().map(Vec::len).min().unwrap_or(0);
        let mut band = Band::default();
        for k in 0..len {
            let mut col: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            col.sort_by(f64::total_cmp);
            band.median.push(quantile_sorted(&col, 0.5));
            band.p25.push(quantile_sorted(&col, 0.25));
            band.p75.push(quantile_sorted(&col, 0.75));
        }
        band
    }

    pub fn median_at(&self, k: usize) -> f64 {
        self.median[k.clamp(1, self.median.len()) - 1]
    }
}

/// Validation and test bands of a resampled best-of-k statistic.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BandCurve {
    pub valid: Band,
    pub test: Band,
}

impl BandCurve {
    pub fn from_curves(curves: &[BestOfKCurve]) -> BandCurve {
        let v: Vec<Vec<f64>> = curves.iter().map(|c| c.j_valid.clone()).collect();
        let t: Vec<Vec<f64>> = curves.iter().map(|c| c.j_test.clone()).collect();
        BandCurve {
            valid: Band::from_samples(&v),
            test: Band::from_samples(&t),
        }
    }
}

/// Simulated random search: each resample tries the eligible optimizers in a
/// random order, replaying stored costs.
pub fn random_search_curve(
    costs: &CostMatrix,
    eligible: &[usize],
    max_trials: usize,
    resamples: usize,
    key: &RngKey,
) -> Result<BandCurve> {
    if eligible.is_empty() {
        return Err(Error::InvalidInput("no eligible optimizers for random search".into()));
    }
    if resamples == 0 {
        return Err(Error::InvalidInput("resamples must be at least 1".into()));
    }
    let trials = if eligible.len() < max_trials {
        log::warn!(
            "random search: only {} eligible optimizers, curve truncated from {max_trials}",
            eligible.len()
        );
        eligible.len()
    } else {
        max_trials
    };
    let curves: Vec<BestOfKCurve> = (0..resamples)
        .map(|r| {
            let mut perm = eligible.to_vec();
            perm.shuffle(&mut key.child(r as u64).stream());
            evaluate_indices(costs, &perm[..trials])
        })
        .collect();
    Ok(BandCurve::from_curves(&curves))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsMode {
    Minmax,
    #[serde(rename = "percentile_5_95")]
    Percentile5_95,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosthocBounds {
    /// `(hyperparameter, low, high)` in the config's field order.
    pub bounds: Vec<(String, f64, f64)>,
    /// Matrix columns whose configs lie inside every bound.
    pub eligible: Vec<usize>,
}

/// Box around the per-task best configurations. `configs[o]` describes
/// column `o`; all must share a family.
pub fn posthoc_bounds(costs: &CostMatrix, configs: &[OptimizerConfig], mode: BoundsMode) -> Result<PosthocBounds> {
    if configs.len() != costs.n_optimizers() {
        return Err(Error::Shape {
            expected: costs.n_optimizers(),
            got: configs.len(),
        });
    }
    let Some(first) = configs.first() else {
        return Err(Error::InvalidInput("no optimizers".into()));
    };
    if costs.n_tasks() == 0 {
        return Err(Error::TooFewTasks("cost matrix has no tasks".into()));
    }
    let family = first.family();
    if configs.iter().any(|c| c.family() != family) {
        return Err(Error::InvalidInput(
            "posthoc bounds need a single optimizer family".into(),
        ));
    }
    let fields: Vec<Vec<(&'static str, f64)>> = configs.iter().map(|c| c.numeric_fields()).collect();
    let mut winners = Vec::with_capacity(costs.n_tasks());
    for t in 0..costs.n_tasks() {
        let mut best = 0;
        for o in 1..costs.n_optimizers() {
            if costs.valid(t, o) < costs.valid(t, best) {
                best = o;
            }
        }
        winners.push(best);
    }
    let mut bounds = Vec::new();
    for (d, (name, _)) in fields[0].iter().enumerate() {
        let mut vals: Vec<f64> = winners.iter().map(|&o| fields[o][d].1).collect();
        let (lo, hi) = match mode {
            BoundsMode::Minmax => (
                vals.iter().copied().fold(f64::INFINITY, f64::min),
                vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
            BoundsMode::Percentile5_95 => (nearest_rank(&mut vals, 0.05), nearest_rank(&mut vals, 0.95)),
        };
        bounds.push((name.to_string(), lo, hi));
    }
    let eligible = (0..configs.len())
        .filter(|&o| {
            fields[o]
                .iter()
                .zip(&bounds)
                .all(|((_, v), (_, lo, hi))| *lo <= *v && *v <= *hi)
        })
        .collect();
    Ok(PosthocBounds { bounds, eligible })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> CostMatrix {
        CostMatrix::from_grids(
            vec!["A".into(), "B".into()],
            vec!["o0".into(), "o1".into(), "o2".into()],
            vec![0.5, 0.2, 0.9, 0.4, 0.9, 0.1],
            vec![0.5, 0.2, 0.9, 0.4, 0.9, 0.1],
        )
        .unwrap()
    }

    #[test]
    fn toy_matrix_picks() {
        let m = toy();
        let g1 = greedy_learn(&m, 1).unwrap();
        assert_eq!(g1.indices, vec![0]);
        assert!((g1.j_valid[0] - 0.45).abs() < 1e-15);
        let g2 = greedy_learn(&m, 2).unwrap();
        assert_eq!(g2.indices, vec![0, 1]);
        assert!((g2.j_valid[1] - 0.30).abs() < 1e-15);
        let (set, j) = brute_force_learn(&m, 2).unwrap();
        assert_eq!(set, vec![1, 2]);
        assert!((j - 0.15).abs() < 1e-15);
        assert!(matches!(greedy_learn(&m, 4), Err(Error::InvalidK { k: 4, max: 3 })));
    }

    #[test]
    fn validation_choice_scored_on_test() {
        // entry 2 looks better on validation but worse on test
        let m = CostMatrix::from_grids(
            vec!["t".into()],
            vec!["a".into(), "b".into()],
            vec![0.5, 0.3],
            vec![0.2, 0.6],
        )
        .unwrap();
        let c = evaluate_list(&["a".into(), "b".into()], &m).unwrap();
        assert_eq!(c.j_test, vec![0.2, 0.6]);
        assert_eq!(c.j_valid, vec![0.5, 0.3]);
        assert!(evaluate_list(&["zz".into()], &m).is_err());
    }

    #[test]
    fn brute_force_guard() {
        let n = 40;
        let m = CostMatrix::from_grids(
            vec!["t".into()],
            (0..n).map(|i| format!("o{i}")).collect(),
            vec![0.5; n],
            vec![0.5; n],
        )
        .unwrap();
        assert!(matches!(brute_force_learn(&m, 10), Err(Error::TooLarge { .. })));
        assert!(brute_force_learn(&m, 3).is_ok());
    }

    #[test]
    fn sci_format() {
        assert_eq!(sci(1.24e-3, 2), "1.24e-3");
        assert_eq!(sci(107.9, 3), "1.079e+02");
        assert_eq!(sci(0.0, 3), "0.000e+00");
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(quantile_sorted(&s, 0.25), 1.75);
        assert_eq!(quantile_sorted(&[7.0], 0.75), 7.0);
    }
}
