//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criteria 5-10 share one desk-scale sweep (run twice for the determinism
//! check), which takes most of the runtime. Pass criterion numbers as
//! arguments to run a subset: `cargo test --test acceptance -- 1 3`.

use std::time::Instant;

use optlist::fd::{finite_diff_gradient_scaled, max_relative_error};
use optlist::harness::{
    run_evaluation_sweep, run_experiment, sample_suite, ExperimentKind, ExperimentReport, ExperimentSpec, Suite,
    SuiteConfig,
};
use optlist::learner::{brute_force_learn, greedy_learn};
use optlist::optim::{sample_optimizer, step, AdamHparams, Hparams, NadamwHparams, ScheduleContext};
use optlist::scoring::{aggregate, build_cost_matrix, normalize_values, MatrixOptions};
use optlist::task::{fixed_twod, instantiate, sample_accepted, RejectionPolicy, TaskParams, Transform, TwodTask};
use optlist::{
    CostMatrix, CurveRecord, Family, OptimizerConfig, OptimizerFamily, OptimizerState, RngKey, RunProfile, Split,
    Store, TaskConfig, TrainingCurve,
};
use rand::Rng;

type Outcome = Result<String, String>;

/// Sampled tasks in the desk suite (the fixed 2D tasks come on top).
const SAMPLED_TASKS: usize = 152;
const ADAM8P_POOL: usize = 512;
const SUBSPACE_POOL: usize = 32;
const MAX_RUN_SECONDS: f64 = 0.01;
const SUITE_SEED: u64 = 7;
const RESAMPLES: usize = 20;

fn main() {
    // cargo passes libtest flags through; only bare numbers select criteria
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| selected.is_empty() || selected.contains(&n);
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |n: usize, name: &'static str, outcome: Outcome| {
        match &outcome {
            Ok(detail) => println!("PASS [{n}] {name}: {detail}"),
            Err(detail) => println!("FAIL [{n}] {name}: {detail}"),
        }
        results.push((n, name, outcome));
    };

    if wanted(1) {
        record(1, "gradient oracle", timed(gradient_oracle, 60.0));
    }
    if wanted(2) {
        record(2, "optimizer nesting", optimizer_nesting());
    }
    if wanted(3) {
        record(3, "greedy correctness", timed(greedy_correctness, 60.0));
    }
    if wanted(4) {
        record(4, "normalization contract", normalization_contract());
    }

    let desk_criteria: [(usize, &'static str, fn(&DeskRun) -> Outcome); 6] = [
        (5, "learned list vs random search", DeskRun::learned_vs_random),
        (6, "more training tasks help", DeskRun::more_tasks),
        (7, "short horizon", DeskRun::short_horizon),
        (8, "theta size", DeskRun::theta_size),
        (9, "determinism", DeskRun::determinism),
        (10, "normalization ablation", DeskRun::normalization_ablation),
    ];
    if desk_criteria.iter().any(|c| wanted(c.0)) {
        let desk = DeskRun::execute();
        for (n, name, check) in desk_criteria {
            if wanted(n) {
                let outcome = match &desk {
                    Ok(d) => check(d),
                    Err(e) => Err(format!("desk run failed: {e}")),
                };
                record(n, name, outcome);
            }
        }
    }

    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

/// Run `f` and also fail it when it exceeds `limit_s`.
fn timed(f: fn() -> Outcome, limit_s: f64) -> Outcome {
    let start = Instant::now();
    let out = f();
    let dt = start.elapsed().as_secs_f64();
    match out {
        Ok(d) if dt < limit_s => Ok(format!("{d} ({dt:.1}s)")),
        Ok(d) => Err(format!("{d}, but took {dt:.1}s (limit {limit_s}s)")),
        Err(d) => Err(format!("{d} ({dt:.1}s)")),
    }
}

fn policy() -> RejectionPolicy {
    RejectionPolicy {
        max_run_seconds: MAX_RUN_SECONDS,
        ..Default::default()
    }
}

/// The config with gradient noise and sparsity removed.
fn without_gradient_noise(config: &TaskConfig) -> TaskConfig {
    let mut params = config.params().clone();
    match &mut params {
        TaskParams::QuadraticLike(p) => p.noise = None,
        TaskParams::LosgQuadratic(p) | TaskParams::LosgMinMaxWell(p) => p.noise = None,
        TaskParams::LosgBowl(p) => p.noise = None,
        _ => {}
    }
    let transform = match config.transform() {
        Some(Transform::SparseProblems { .. }) => None,
        t => t.cloned(),
    };
    TaskConfig::new(params, transform, config.config_seed()).expect("stripped config stays valid")
}

fn probe_configs(family: Family, n: usize, key: &RngKey) -> Vec<TaskConfig> {
    if family == Family::TwodFixed {
        return (0..n)
            .map(|i| fixed_twod(TwodTask::ALL[i % TwodTask::ALL.len()]))
            .collect();
    }
    let report = sample_accepted(family, n, key, Some(&policy()), 100_000);
    report.accepted.iter().map(without_gradient_noise).collect()
}

fn gradient_oracle() -> Outcome {
    const PROBES: usize = 20;
    let root = RngKey::from_seed(11).child_named("gradient-oracle");
    let mut worst_overall = 0.0f64;
    for family in Family::ALL {
        let key = root.child_named(family.name());
        let configs = probe_configs(family, PROBES, &key);
        if configs.len() < PROBES {
            return Err(format!("{family}: only {} accepted configs", configs.len()));
        }
        let mut worst = 0.0f64;
        for (i, config) in configs.into_iter().enumerate() {
            let id = config.task_id().to_string();
            let task = instantiate(config).map_err(|e| format!("{id}: {e}"))?;
            let probe = key.child(i as u64);
            // initial parameters plus jitter: zero-initialized biases would
            // otherwise put relu units exactly on their kink
            let mut rng = probe.child_named("params").stream();
            let x: Vec<f64> = task
                .initial_params(i as u64)
                .into_iter()
                .map(|v| v + 0.1 * rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let batch = task.batch(Split::Train, &probe.child_named("batch"));
            let analytic = task.gradient(&x, &batch).map_err(|e| format!("{id}: {e}"))?;
            let reference = finite_diff_gradient_scaled(|p| task.loss(p, &batch).unwrap_or(f64::NAN), &x, 1e-5)
                .map_err(|e| format!("{id}: {e}"))?;
            let err = max_relative_error(&analytic, &reference);
            if !(err <= 1e-4) {
                return Err(format!("{id} probe {i}: max relative error {err:.3e}"));
            }
            worst = worst.max(err);
        }
        worst_overall = worst_overall.max(worst);
    }
    Ok(format!(
        "{} families x {PROBES} probes, worst relative error {worst_overall:.2e}",
        Family::ALL.len()
    ))
}

/// Per-coordinate relative deviation, treating exact agreement as zero.
fn rel_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            if x == y {
                0.0
            } else {
                (x - y).abs() / x.abs().max(y.abs())
            }
        })
        .fold(0.0, f64::max)
}

fn optimizer_nesting() -> Outcome {
    const STEPS: usize = 500;
    let root = RngKey::from_seed(12).child_named("nesting");
    let tasks = [
        sample_accepted(Family::QuadraticLike, 1, &root.child(0), Some(&policy()), 10_000).accepted,
        sample_accepted(Family::LosgFullyConnected, 1, &root.child(1), Some(&policy()), 10_000).accepted,
        vec![fixed_twod(TwodTask::Rosenbrock)],
    ];
    let mut worst_nadamw = 0.0f64;
    for (ti, configs) in tasks.into_iter().enumerate() {
        let config = configs.into_iter().next().ok_or("no accepted task")?;
        let id = config.task_id().to_string();
        let task = instantiate(config).map_err(|e| e.to_string())?;
        let base = sample_optimizer(OptimizerFamily::Adam4p, &root.child_named("opt").child(ti as u64));
        let Hparams::Adam(h) = base.hparams().clone() else {
            unreachable!("adam4p has adam hyperparameters")
        };
        // keep the run finite on every task
        let h = AdamHparams {
            lr: h.lr.min(1e-2),
            ..h
        };
        let adam4p = OptimizerConfig::adam(OptimizerFamily::Adam4p, h.clone()).map_err(|e| e.to_string())?;
        let adam8p = OptimizerConfig::adam(OptimizerFamily::Adam8p, h.clone()).map_err(|e| e.to_string())?;
        let nadamw = OptimizerConfig::nadamw(NadamwHparams {
            lr: h.lr,
            beta1: h.beta1,
            beta2: h.beta2,
            epsilon: h.epsilon,
            use_nesterov: false,
            l2_wd: 0.0,
            l2_adamw: 0.0,
            warmup: 0.0,
            constant: 1.0,
            min_lr_mult: 0.0,
        })
        .map_err(|e| e.to_string())?;
        let opts = [adam4p, adam8p, nadamw];
        let x0 = task.initial_params(0);
        let mut params: Vec<Vec<f64>> = vec![x0.clone(); 3];
        let mut states: Vec<OptimizerState> = (0..3).map(|_| OptimizerState::new(x0.len())).collect();
        for t in 0..STEPS {
            let batch = task.batch(Split::Train, &root.child_named("batch").child(t as u64));
            for o in 0..3 {
                let mut g = task.gradient(&params[o], &batch).map_err(|e| e.to_string())?;
                step(
                    &opts[o],
                    &mut states[o],
                    &mut params[o],
                    &mut g,
                    ScheduleContext { t, total: STEPS },
                )
                .map_err(|e| e.to_string())?;
            }
            if params[1] != params[0] {
                return Err(format!("{id}: adam8p left adam4p at step {t}"));
            }
            let dev = rel_dev(&params[2], &params[0]);
            if !(dev <= 1e-12) {
                return Err(format!("{id}: nadamw deviates from adam4p by {dev:.3e} at step {t}"));
            }
            worst_nadamw = worst_nadamw.max(dev);
        }
        if params[0].iter().any(|p| !p.is_finite()) {
            return Err(format!("{id}: trajectory diverged"));
        }
    }
    Ok(format!(
        "3 tasks x {STEPS} steps: adam8p bit-identical, nadamw max relative deviation {worst_nadamw:.1e}"
    ))
}

fn random_matrix(key: &RngKey) -> CostMatrix {
    let mut rng = key.stream();
    let n_tasks = rng.random_range(1..=8);
    let n_opts = rng.random_range(1..=12);
    let n = n_tasks * n_opts;
    let valid: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let test: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    CostMatrix::from_grids(
        (0..n_tasks).map(|t| format!("t{t}")).collect(),
        (0..n_opts).map(|o| format!("o{o}")).collect(),
        valid,
        test,
    )
    .expect("valid grid")
}

fn greedy_correctness() -> Outcome {
    let root = RngKey::from_seed(13).child_named("greedy");
    let mut gaps = 0usize;
    for m in 0..100u64 {
        let costs = random_matrix(&root.child(m));
        let n = costs.n_optimizers();
        let greedy = greedy_learn(&costs, n).map_err(|e| e.to_string())?;
        if greedy.j_valid.windows(2).any(|w| w[1] > w[0]) {
            return Err(format!("matrix {m}: greedy J_valid increases: {:?}", greedy.j_valid));
        }
        for k in 1..=n {
            let (set, j_bf) = brute_force_learn(&costs, k).map_err(|e| e.to_string())?;
            let j_greedy = greedy.j_valid[k - 1];
            if k == 1 && (set[0] != greedy.indices[0] || j_bf != j_greedy) {
                return Err(format!(
                    "matrix {m}: k=1 greedy picks {} (J {j_greedy}), brute force {} (J {j_bf})",
                    greedy.indices[0], set[0]
                ));
            }
            if k == n && j_bf != j_greedy {
                return Err(format!("matrix {m}: k=|Θ| greedy J {j_greedy} != brute force J {j_bf}"));
            }
            if j_greedy < j_bf {
                return Err(format!(
                    "matrix {m}, k={k}: greedy J {j_greedy} below brute-force optimum {j_bf}"
                ));
            }
            if j_greedy > j_bf {
                gaps += 1;
            }
        }
    }
    Ok(format!(
        "100 matrices, greedy strictly above optimum at {gaps} (matrix, k) pairs"
    ))
}

fn curve(task: &str, opt: &str, seed: u64, valid: Vec<f64>) -> TrainingCurve {
    let steps = (0..valid.len()).map(|i| i * 10).collect();
    let diverged_at = valid.iter().position(|v| !v.is_finite());
    TrainingCurve {
        task_id: task.into(),
        optimizer_id: opt.into(),
        seed,
        steps,
        train_loss: valid.clone(),
        test_loss: valid.clone(),
        valid_loss: valid,
        diverged_at,
        n_params: 1,
        wall_time_s: 0.0,
    }
}

fn normalization_contract() -> Outcome {
    // hand arithmetic: [10, 6, 2] with init 10 and best 2
    let normalized = normalize_values(&[10.0, 6.0, 2.0], 10.0, 2.0);
    let mean = aggregate(&normalized, optlist::Aggregator::Mean).map_err(|e| e.to_string())?;
    if normalized != [1.0, 0.5, 0.0] || mean != 0.5 {
        return Err(format!("[10,6,2] normalized to {normalized:?}, mean {mean}"));
    }

    // a diverged optimizer next to two healthy ones
    let profile = RunProfile {
        total_steps: 20,
        eval_every: 10,
        eval_batches: 1,
        seeds: 1,
    };
    let mut store = Store::in_memory(profile.fingerprint());
    let rows = [
        ("good", vec![10.0, 6.0, 2.0]),
        ("slow", vec![10.0, 9.0, 8.0]),
        ("nan", vec![10.0, f64::NAN, f64::NAN]),
    ];
    for (opt, valid) in &rows {
        store
            .append(CurveRecord::new(
                curve("t", opt, 0, valid.clone()),
                profile.fingerprint(),
            ))
            .map_err(|e| e.to_string())?;
    }
    let opts: Vec<String> = rows.iter().map(|r| r.0.to_string()).collect();
    let m = build_cost_matrix(&store, &["t".to_string()], &opts, 1, &MatrixOptions::default())
        .map_err(|e| e.to_string())?;
    let nan_cost = m.valid(0, 2);
    if nan_cost != 1.0 || m.test(0, 2) != 1.0 {
        return Err(format!("diverged curve scored {nan_cost}"));
    }
    if m.valid(0, 0) != 0.5 {
        return Err(format!("hand example scored {} in the matrix", m.valid(0, 0)));
    }

    // every entry of a real store lands in [0, 1]
    let real = tiny_real_store()?;
    let tasks: Vec<String> = real.tasks().keys().cloned().collect();
    let optimizers: Vec<String> = real.optimizers().keys().cloned().collect();
    let mut checked = 0;
    for normalizer in [optlist::Normalizer::Default, optlist::Normalizer::Percentile95] {
        for aggregator in [optlist::Aggregator::Mean, optlist::Aggregator::Min] {
            let opts = MatrixOptions {
                normalizer,
                aggregator,
                horizon: None,
            };
            let m = build_cost_matrix(&real, &tasks, &optimizers, 2, &opts).map_err(|e| e.to_string())?;
            for t in 0..m.n_tasks() {
                for o in 0..m.n_optimizers() {
                    for v in [m.valid(t, o), m.test(t, o)] {
                        if !(0.0..=1.0).contains(&v) {
                            return Err(format!("entry ({t}, {o}) = {v} under {normalizer}/{aggregator}"));
                        }
                        checked += 1;
                    }
                }
            }
        }
    }
    Ok(format!(
        "hand example 0.5, diverged curve 1.0, {checked} real entries in [0, 1]"
    ))
}

fn tiny_real_store() -> Result<Store, String> {
    let key = RngKey::from_seed(14);
    let mut tasks = Vec::new();
    for family in Family::SAMPLED {
        tasks.extend(sample_accepted(family, 1, &key.child_named(family.name()), Some(&policy()), 10_000).accepted);
    }
    let opts: Vec<OptimizerConfig> = (0..8)
        .map(|i| sample_optimizer(OptimizerFamily::Adam8p, &key.child_named("opt").child(i)))
        .collect();
    let profile = RunProfile {
        total_steps: 200,
        eval_every: 50,
        eval_batches: 2,
        seeds: 2,
    };
    let mut store = Store::in_memory(profile.fingerprint());
    run_evaluation_sweep(&mut store, &tasks, &opts, &profile, 1).map_err(|e| e.to_string())?;
    Ok(store)
}

/// The shared desk-scale sweep and the reports computed from it.
struct DeskRun {
    suite: Suite,
    sweep_seconds: [f64; 2],
    hashes: [String; 2],
    reports: Vec<[ExperimentReport; 2]>,
    analysis_seconds: Vec<f64>,
}

impl DeskRun {
    const KINDS: [ExperimentKind; 5] = [
        ExperimentKind::IidGeneralization,
        ExperimentKind::NumTasksSweep,
        ExperimentKind::ShortHorizon,
        ExperimentKind::ThetaSizeSweep,
        ExperimentKind::NormalizationAblation,
    ];

    fn spec(kind: ExperimentKind) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(kind);
        spec.resamples = RESAMPLES;
        spec.task_counts = vec![8, 16, 32, 64, 128];
        spec.theta_sizes = vec![16, 32, 64, 128, 256];
        spec.horizons = vec![spec.profile.total_steps / 5];
        spec
    }

    fn execute() -> Result<DeskRun, String> {
        let config = SuiteConfig {
            seed: SUITE_SEED,
            sampled_tasks: SAMPLED_TASKS,
            include_twod: true,
            optimizer_pools: vec![
                (OptimizerFamily::Adam8p, ADAM8P_POOL),
                (OptimizerFamily::Adam1p, SUBSPACE_POOL),
                (OptimizerFamily::Adam4p, SUBSPACE_POOL),
            ],
            policy: policy(),
            max_attempts: 200_000,
            ..Default::default()
        };
        let suite = sample_suite(&config);
        let profile = RunProfile::default();
        println!(
            "desk suite: {} tasks, {} optimizers, {} seeds, {} steps",
            suite.tasks.len(),
            suite.optimizers.len(),
            profile.seeds,
            profile.total_steps
        );
        let mut stores = Vec::new();
        let mut sweep_seconds = [0.0; 2];
        let mut hashes = [String::new(), String::new()];
        for (i, workers) in [1usize, 3].into_iter().enumerate() {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let mut store = Store::open_or_create(dir.path(), profile.fingerprint()).map_err(|e| e.to_string())?;
            let start = Instant::now();
            let summary = run_evaluation_sweep(&mut store, &suite.tasks, &suite.optimizers, &profile, workers)
                .map_err(|e| e.to_string())?;
            sweep_seconds[i] = start.elapsed().as_secs_f64();
            println!(
                "sweep {} (workers {workers}): {} runs, {} failed, {:.0}s, hash {}",
                i + 1,
                summary.written,
                summary.failed,
                sweep_seconds[i],
                summary.content_hash
            );
            hashes[i] = summary.content_hash;
            // reopen from disk so the reports come from the persisted records
            drop(store);
            stores.push((Store::open(dir.path()).map_err(|e| e.to_string())?, dir));
        }
        let mut reports = Vec::new();
        let mut analysis_seconds = Vec::new();
        for kind in Self::KINDS {
            let spec = Self::spec(kind);
            let start = Instant::now();
            let a = run_experiment(&spec, &stores[0].0).map_err(|e| format!("{kind}: {e}"))?;
            analysis_seconds.push(start.elapsed().as_secs_f64());
            let b = run_experiment(&spec, &stores[1].0).map_err(|e| format!("{kind}: {e}"))?;
            reports.push([a, b]);
        }
        Ok(DeskRun {
            suite,
            sweep_seconds,
            hashes,
            reports,
            analysis_seconds,
        })
    }

    fn report(&self, kind: ExperimentKind) -> &ExperimentReport {
        let i = Self::KINDS.iter().position(|&k| k == kind).expect("kind was run");
        &self.reports[i][0]
    }

    fn median(&self, kind: ExperimentKind, condition: &str, k: usize) -> Result<f64, String> {
        self.report(kind)
            .condition(condition)
            .map(|c| c.median_test_at(k))
            .ok_or_else(|| format!("{kind} has no condition {condition}"))
    }

    fn learned_vs_random(&self) -> Outcome {
        let kind = ExperimentKind::IidGeneralization;
        let i = Self::KINDS.iter().position(|&k| k == kind).unwrap();
        let learned = self.median(kind, "learned", 10)?;
        let random = self.median(kind, "rand_adam8p", 100)?;
        let sampled = self
            .suite
            .tasks
            .iter()
            .filter(|t| t.family() != Family::TwodFixed)
            .count();
        let detail = format!(
            "learned k=10 {learned:.4} vs Rand:Adam8p k=100 {random:.4} ({} tasks, {sampled} sampled; sweep {:.0}s; analysis {:.1}s)",
            self.suite.tasks.len(),
            self.sweep_seconds[0],
            self.analysis_seconds[i]
        );
        if self.suite.tasks.len() < 128 {
            return Err(format!("only {} tasks; {detail}", self.suite.tasks.len()));
        }
        if self.sweep_seconds[0] > 7200.0 || self.analysis_seconds[i] > 60.0 {
            return Err(format!("over time budget; {detail}"));
        }
        if learned <= random {
            Ok(detail)
        } else {
            Err(detail)
        }
    }

    fn more_tasks(&self) -> Outcome {
        let report = self.report(ExperimentKind::NumTasksSweep);
        let few = report.condition("tasks_8").ok_or("no tasks_8 condition")?;
        let many = report.condition("tasks_128").ok_or("no tasks_128 condition")?;
        let wins = few
            .test_at_focus
            .iter()
            .zip(&many.test_at_focus)
            .filter(|(f, m)| m <= f)
            .count();
        let n = few.test_at_focus.len();
        let detail = format!(
            "128 tasks at or below 8 tasks in {wins}/{n} resamples (medians {:.4} vs {:.4})",
            many.median_test_at(10),
            few.median_test_at(10)
        );
        if n == RESAMPLES && wins * 5 >= n * 4 {
            Ok(detail)
        } else {
            Err(detail)
        }
    }

    fn short_horizon(&self) -> Outcome {
        let kind = ExperimentKind::ShortHorizon;
        let h = Self::spec(kind).horizons[0];
        let short = self.median(kind, &format!("learned_h{h}"), 10)?;
        let random = self.median(kind, "rand_adam8p", 10)?;
        let detail = format!("list from first {h} steps k=10 {short:.4} vs Rand:Adam8p k=10 {random:.4}");
        if short < random {
            Ok(detail)
        } else {
            Err(detail)
        }
    }

    fn theta_size(&self) -> Outcome {
        let kind = ExperimentKind::ThetaSizeSweep;
        let big = self.median(kind, "theta_256", 10)?;
        let small = self.median(kind, "theta_32", 10)?;
        let detail = format!("|Θ|=256 k=10 {big:.4} vs |Θ|=32 k=10 {small:.4}");
        if big <= small {
            Ok(detail)
        } else {
            Err(detail)
        }
    }

    fn determinism(&self) -> Outcome {
        if self.hashes[0] != self.hashes[1] {
            return Err(format!("store hashes differ: {} vs {}", self.hashes[0], self.hashes[1]));
        }
        for (kind, [a, b]) in Self::KINDS.iter().zip(&self.reports) {
            if a.to_csv() != b.to_csv() || a.to_json() != b.to_json() {
                return Err(format!("{kind} reports differ between the two sweeps"));
            }
        }
        Ok(format!(
            "workers 1 and 3 give hash {}; {} reports byte-identical",
            &self.hashes[0][..16],
            Self::KINDS.len()
        ))
    }

    fn normalization_ablation(&self) -> Outcome {
        let kind = ExperimentKind::NormalizationAblation;
        let meta = &self.report(kind).metadata;
        let all_positive = meta
            .get("spearman_all_positive")
            .and_then(|v| v.as_bool())
            .ok_or("no spearman metadata")?;
        let min_rho = meta.get("spearman_min").and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
        let tasks = meta.get("spearman_tasks").and_then(|v| v.as_u64()).unwrap_or(0);
        let percentile = self.median(kind, "learned_percentile95_mean", 10)?;
        let random = self.median(kind, "rand_adam8p", 10)?;
        let detail = format!(
            "Spearman(mean, min) > 0 on all {tasks} eligible tasks: {all_positive} (min {min_rho:.3}); percentile list k=10 {percentile:.4} vs Rand:Adam8p {random:.4}"
        );
        if all_positive && tasks > 0 && percentile < random {
            Ok(detail)
        } else {
            Err(detail)
        }
    }
}
