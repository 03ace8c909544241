//! Subcommand bodies.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use optlist::harness::{
    even_shares, run_evaluation_sweep, run_experiment, sample_optimizer_pool, ExperimentKind, ExperimentSpec,
    SuiteConfig,
};
use optlist::learner::{evaluate_list, learn_list as learn, HyperparameterList};
use optlist::optim::OptimizerFamily;
use optlist::scoring::{build_cost_matrix, Aggregator, MatrixOptions, Normalizer, RunProfile};
use optlist::store::{export_feature_matrix, Store};
use optlist::task::{sample_accepted, Family, RejectionPolicy};
use optlist::{OptimizerConfig, RngKey, TaskConfig};

use crate::io::{read_jsonl, read_task_ids, read_text, required, store_dir, write_lines, write_text};
use crate::{
    CliError, CliResult, EvalListArgs, EvaluateArgs, ExperimentArgs, ExportFeaturesArgs, LearnListArgs,
    SampleOptimizersArgs, SampleSuiteArgs, SampleTasksArgs,
};

fn parse<T: std::str::FromStr<Err = optlist::Error>>(s: &str) -> CliResult<T> {
    s.parse().map_err(|e: optlist::Error| CliError::Usage(e.to_string()))
}

fn policy(max_run_seconds: Option<f64>) -> RejectionPolicy {
    let mut p = RejectionPolicy::default();
    if let Some(s) = max_run_seconds {
        p.max_run_seconds = s;
    }
    p
}

pub fn sample_tasks(a: SampleTasksArgs) -> CliResult<()> {
    let family = required(a.family, "family")?;
    let count = required(a.count, "count")?;
    let out = required(a.out, "out")?;
    let families: Vec<Family> = if family == "all" {
        Family::SAMPLED.to_vec()
    } else {
        vec![parse(&family)?]
    };
    let policy = policy(a.max_run_seconds);
    let policy = a.reject.unwrap_or(true).then_some(&policy);
    let key = RngKey::from_seed(a.seed.unwrap_or(0)).child_named("tasks");
    let mut accepted: Vec<TaskConfig> = Vec::new();
    let mut rejected = 0;
    for (f, share) in families.iter().zip(even_shares(count, families.len())) {
        if share == 0 {
            continue;
        }
        let report = sample_accepted(*f, share, &key.child_named(f.name()), policy, 1000 * share + 1000);
        if report.accepted.len() < share {
            return Err(CliError::Usage(format!(
                "{f}: only {} of {share} configs accepted after {} rejections; raise --max-run-seconds",
                report.accepted.len(),
                report.rejected.len()
            )));
        }
        rejected += report.rejected.len();
        accepted.extend(report.accepted);
    }
    write_lines(&out, accepted.iter().map(|c| c.to_json()))?;
    println!("accepted {}, rejected {rejected}", accepted.len());
    Ok(())
}

pub fn sample_optimizers(a: SampleOptimizersArgs) -> CliResult<()> {
    let family: OptimizerFamily = parse(&required(a.family, "family")?)?;
    let count = required(a.count, "count")?;
    let out = required(a.out, "out")?;
    let key = RngKey::from_seed(a.seed.unwrap_or(0)).child_named("optimizers");
    let pool = sample_optimizer_pool(family, count, &key);
    write_lines(&out, pool.iter().map(|c| c.to_json()))?;
    println!("sampled {} {family} configs", pool.len());
    Ok(())
}

fn parse_pools(s: &str) -> CliResult<Vec<(OptimizerFamily, usize)>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (f, n) = p
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("pool `{p}` is not family=count")))?;
            let n = n
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("pool `{p}`: bad count")))?;
            Ok((parse(f.trim())?, n))
        })
        .collect()
}

pub fn sample_suite(a: SampleSuiteArgs) -> CliResult<()> {
    let mut cfg = SuiteConfig::default();
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.sampled_tasks {
        cfg.sampled_tasks = n;
    }
    cfg.policy = policy(a.max_run_seconds);
    if let Some(n) = a.max_attempts {
        cfg.max_attempts = n;
    }
    if let Some(p) = &a.pools {
        cfg.optimizer_pools = parse_pools(p)?;
    }
    let suite = optlist::harness::sample_suite(&cfg);
    let out_tasks = a.out_tasks.unwrap_or_else(|| PathBuf::from("tasks.jsonl"));
    let out_opts = a.out_optimizers.unwrap_or_else(|| PathBuf::from("optimizers.jsonl"));
    write_lines(&out_tasks, suite.tasks.iter().map(|c| c.to_json()))?;
    write_lines(&out_opts, suite.optimizers.iter().map(|c| c.to_json()))?;
    println!(
        "{} tasks ({} rejected) -> {}; {} optimizers -> {}",
        suite.tasks.len(),
        suite.rejected.len(),
        out_tasks.display(),
        suite.optimizers.len(),
        out_opts.display()
    );
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let tasks = read_jsonl(&required(a.tasks, "tasks")?, TaskConfig::from_json)?;
    let opts = read_jsonl(&required(a.opts, "opts")?, OptimizerConfig::from_json)?;
    let d = RunProfile::default();
    let profile = RunProfile {
        total_steps: a.steps.unwrap_or(d.total_steps),
        eval_every: a.eval_every.unwrap_or(d.eval_every),
        eval_batches: a.eval_batches.unwrap_or(d.eval_batches),
        seeds: a.seeds.unwrap_or(d.seeds),
    };
    profile.validate()?;
    let dir = store_dir(a.store)?;
    let mut store = Store::open_or_create(&dir, profile.fingerprint())?;
    let start = Instant::now();
    let summary = run_evaluation_sweep(&mut store, &tasks, &opts, &profile, a.workers.unwrap_or(1))?;
    if summary.skipped > 0 {
        println!("skipped {} existing", summary.skipped);
    }
    println!(
        "{} records written in {:.1}s",
        summary.written,
        start.elapsed().as_secs_f64()
    );
    if summary.failed > 0 {
        println!("{} runs failed and were recorded as diverged", summary.failed);
    }
    println!("store hash {}", summary.content_hash);
    Ok(())
}

fn open_store(flag: Option<PathBuf>) -> CliResult<Store> {
    Ok(Store::open(store_dir(flag)?)?)
}

fn task_ids(store: &Store, path: Option<PathBuf>) -> CliResult<Vec<String>> {
    match path {
        Some(p) => read_task_ids(&p),
        None => Ok(store.tasks().keys().cloned().collect()),
    }
}

fn matrix_options(normalizer: Option<String>, aggregator: Option<String>) -> CliResult<MatrixOptions> {
    Ok(MatrixOptions {
        normalizer: normalizer
            .as_deref()
            .map(parse::<Normalizer>)
            .transpose()?
            .unwrap_or_default(),
        aggregator: aggregator
            .as_deref()
            .map(parse::<Aggregator>)
            .transpose()?
            .unwrap_or_default(),
        horizon: None,
    })
}

pub fn learn_list(a: LearnListArgs) -> CliResult<()> {
    let store = open_store(a.store)?;
    let tasks = task_ids(&store, a.tasks)?;
    let k = required(a.k, "k")?;
    let family = a.family.as_deref().map(parse::<OptimizerFamily>).transpose()?;
    let optimizers: Vec<String> = store
        .optimizers()
        .iter()
        .filter(|(_, c)| family.is_none_or(|f| c.family() == f))
        .map(|(id, _)| id.clone())
        .collect();
    if k == 0 || k > optimizers.len() {
        return Err(CliError::Usage(format!(
            "--k {k} must be between 1 and the {} available optimizers",
            optimizers.len()
        )));
    }
    let opts = matrix_options(a.normalizer, a.aggregator)?;
    let seeds = a.seeds.unwrap_or_else(|| store.seed_count());
    let matrix = build_cost_matrix(&store, &tasks, &optimizers, seeds, &opts)?;
    let list = learn(&matrix, k, store.optimizers())?;
    if let Some(out) = &a.out {
        write_text(out, &list.to_json())?;
    }
    print!("{}", list.table());
    Ok(())
}

pub fn eval_list(a: EvalListArgs) -> CliResult<()> {
    let store = open_store(a.store)?;
    let list = HyperparameterList::from_json(&read_text(&required(a.list, "list")?)?)?;
    let tasks = task_ids(&store, a.tasks)?;
    let ids = list.optimizer_ids();
    let seeds = a.seeds.unwrap_or_else(|| store.seed_count());
    let matrix = build_cost_matrix(&store, &tasks, &ids, seeds, &MatrixOptions::default())?;
    let curve = evaluate_list(&ids, &matrix)?;
    let mut rows = vec!["k,j_valid,j_test".to_string()];
    println!("{:>4}  {:>10}  {:>10}", "k", "j_valid", "j_test");
    for i in 0..curve.len() {
        println!("{:>4}  {:>10.6}  {:>10.6}", i + 1, curve.j_valid[i], curve.j_test[i]);
        rows.push(format!("{},{},{}", i + 1, curve.j_valid[i], curve.j_test[i]));
    }
    if let Some(out) = &a.out {
        write_lines(out, rows)?;
    }
    Ok(())
}

pub fn experiment(a: ExperimentArgs) -> CliResult<()> {
    let store = open_store(a.store)?;
    let (mut spec, has_profile) = match &a.spec {
        Some(p) => {
            let text = read_text(p)?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            let has_profile = value.get("profile").is_some();
            let spec: ExperimentSpec =
                serde_json::from_value(value).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            (spec, has_profile)
        }
        None => (
            ExperimentSpec::new(parse::<ExperimentKind>(&required(a.name.clone(), "name")?)?),
            false,
        ),
    };
    if let Some(n) = &a.name {
        spec.name = parse(n)?;
    }
    if let Some(r) = a.resamples {
        spec.resamples = r;
    }
    if let Some(s) = a.master_seed {
        spec.master_seed = s;
    }
    if !has_profile {
        // take the run profile from the store
        let fp = store.profile();
        spec.profile = RunProfile {
            total_steps: fp.total_steps,
            eval_every: fp.eval_every,
            eval_batches: fp.eval_batches,
            seeds: store.seed_count(),
        };
    }
    spec.validate()?;
    let start = Instant::now();
    let report = run_experiment(&spec, &store)?;
    let out_dir = a.out_dir.unwrap_or_else(|| PathBuf::from("reports"));
    report.write(&out_dir)?;
    let timing = serde_json::json!({ "wall_time_s": start.elapsed().as_secs_f64() });
    write_text(
        &out_dir.join(format!("{}.timing.json", spec.name)),
        &serde_json::to_string_pretty(&timing).expect("json"),
    )?;
    let k = spec.k_focus;
    for c in &report.conditions {
        let i = k.clamp(1, c.band.test.median.len()) - 1;
        println!(
            "{:<48} k={:<3} test J median {:.4} (p25 {:.4}, p75 {:.4})",
            c.name,
            i + 1,
            c.band.test.median[i],
            c.band.test.p25[i],
            c.band.test.p75[i]
        );
    }
    let meta: BTreeMap<&String, &serde_json::Value> = report.metadata.iter().collect();
    log::info!("metadata: {}", serde_json::to_string(&meta).unwrap_or_default());
    Ok(())
}

pub fn export_features(a: ExportFeaturesArgs) -> CliResult<()> {
    let store = open_store(a.store)?;
    let out = required(a.out, "out")?;
    let tasks: Vec<String> = store.tasks().keys().cloned().collect();
    let optimizers: Vec<String> = store.optimizers().keys().cloned().collect();
    let seeds = a.seeds.unwrap_or_else(|| store.seed_count());
    let matrix = build_cost_matrix(
        &store,
        &tasks,
        &optimizers,
        seeds,
        &matrix_options(a.normalizer, a.aggregator)?,
    )?;
    let (rows, cols) = export_feature_matrix(&matrix, &out)?;
    println!("wrote {rows} rows x {cols} columns to {}", out.display());
    Ok(())
}
