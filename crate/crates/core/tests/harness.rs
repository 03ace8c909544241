use std::collections::BTreeSet;

use optlist::harness::{
    holdout_by_family, run_evaluation_sweep, run_experiment, sample_optimizer_pool, split_tasks_iid, ExperimentKind,
    ExperimentSpec,
};
use optlist::task::{fixed_twod, TwodTask};
use optlist::{Error, Family, OptimizerConfig, OptimizerFamily, RngKey, RunProfile, Store, TaskConfig};
use proptest::prelude::*;

fn profile() -> RunProfile {
    RunProfile {
        total_steps: 40,
        eval_every: 10,
        eval_batches: 1,
        seeds: 2,
    }
}

fn tasks() -> Vec<TaskConfig> {
    TwodTask::ALL.iter().map(|t| fixed_twod(*t)).collect()
}

fn optimizers(n8: usize) -> Vec<OptimizerConfig> {
    let key = RngKey::from_seed(5);
    let mut v = sample_optimizer_pool(OptimizerFamily::Adam8p, n8, &key);
    v.extend(sample_optimizer_pool(OptimizerFamily::Adam1p, 4, &key));
    v
}

fn swept(tasks: &[TaskConfig], opts: &[OptimizerConfig], workers: usize) -> Store {
    let mut store = Store::in_memory(profile().fingerprint());
    for t in tasks {
        store.add_task(t).unwrap();
    }
    for o in opts {
        store.add_optimizer(o).unwrap();
    }
    run_evaluation_sweep(&mut store, tasks, opts, &profile(), workers).unwrap();
    store
}

fn spec(kind: ExperimentKind) -> ExperimentSpec {
    ExperimentSpec {
        profile: profile(),
        resamples: 5,
        k_max: 20,
        k_focus: 4,
        ..ExperimentSpec::new(kind)
    }
}

#[test]
fn sweep_fills_grid_and_skips_on_rerun() {
    let (t, o) = (&tasks()[..4], &optimizers(6)[..8]);
    let mut store = Store::in_memory(profile().fingerprint());
    let first = run_evaluation_sweep(&mut store, t, o, &profile(), 2).unwrap();
    assert_eq!((first.written, first.skipped), (64, 0));
    assert_eq!(store.len(), 64);
    let again = run_evaluation_sweep(&mut store, t, o, &profile(), 2).unwrap();
    assert_eq!((again.written, again.skipped), (0, 64));
    assert_eq!(again.content_hash, first.content_hash);
}

#[test]
fn worker_count_does_not_change_hash() {
    let (t, o) = (tasks(), optimizers(6));
    let one = swept(&t, &o, 1);
    let three = swept(&t, &o, 3);
    assert_eq!(one.content_hash(), three.content_hash());
}

#[test]
fn resumed_sweep_matches_uninterrupted_one() {
    let (t, o) = (tasks(), optimizers(6));
    let dir = tempfile::tempdir().unwrap();
    {
        let mut store = Store::open_or_create(dir.path(), profile().fingerprint()).unwrap();
        run_evaluation_sweep(&mut store, &t[..3], &o[..5], &profile(), 2).unwrap();
        store.sync().unwrap();
    }
    let mut store = Store::open(dir.path()).unwrap();
    let s = run_evaluation_sweep(&mut store, &t, &o, &profile(), 2).unwrap();
    assert_eq!(s.skipped, 3 * 5 * 2);
    assert_eq!(s.content_hash, swept(&t, &o, 1).content_hash());
}

#[test]
fn sweep_rejects_mismatched_profile() {
    let mut store = Store::in_memory(profile().fingerprint());
    let other = RunProfile {
        total_steps: 80,
        ..profile()
    };
    let err = run_evaluation_sweep(&mut store, &tasks(), &optimizers(2), &other, 1).unwrap_err();
    assert!(matches!(err, Error::IncompatibleProfile { .. }));
}

proptest! {
    #[test]
    fn iid_split_partitions_ids(n in 2usize..60, fraction in 0.01f64..0.99, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let (tr, te) = split_tasks_iid(&ids, fraction, &RngKey::from_seed(seed)).unwrap();
        prop_assert!(!tr.is_empty() && !te.is_empty());
        let want = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
        prop_assert_eq!(tr.len(), want);
        let all: BTreeSet<&String> = tr.iter().chain(&te).collect();
        prop_assert_eq!(all.len(), n);
        let again = split_tasks_iid(&ids, fraction, &RngKey::from_seed(seed)).unwrap();
        prop_assert_eq!(again, (tr, te));
    }
}

#[test]
fn split_edge_cases() {
    let one = vec!["t0".to_string()];
    assert!(matches!(
        split_tasks_iid(&one, 0.5, &RngKey::from_seed(0)),
        Err(Error::TooFewTasks(_))
    ));
    assert!(split_tasks_iid(&one, 1.0, &RngKey::from_seed(0)).is_err());
    let ids: Vec<String> = tasks().iter().map(|t| t.task_id().to_string()).collect();
    assert!(holdout_by_family(&ids, &[Family::LosgBowl]).is_err());
    assert!(matches!(
        holdout_by_family(&ids, &[Family::TwodFixed]),
        Err(Error::TooFewTasks(_))
    ));
}

#[test]
fn reports_regenerate_byte_identical() {
    let store = swept(&tasks(), &optimizers(12), 1);
    for kind in [
        ExperimentKind::IidGeneralization,
        ExperimentKind::NumTasksSweep,
        ExperimentKind::ThetaSizeSweep,
    ] {
        let mut s = spec(kind);
        s.task_counts = vec![2, 4];
        s.theta_sizes = vec![4, 8];
        let a = run_experiment(&s, &store).unwrap();
        let b = run_experiment(&s, &store).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.store_hash, store.content_hash());
    }
}

#[test]
fn learned_curves_are_non_increasing() {
    let store = swept(&tasks(), &optimizers(12), 1);
    let report = run_experiment(&spec(ExperimentKind::IidGeneralization), &store).unwrap();
    for c in &report.conditions {
        for w in c.band.valid.median.windows(2) {
            assert!(w[1] <= w[0], "{}: {:?}", c.name, c.band.valid.median);
        }
    }
    let learned = report.condition("learned").unwrap();
    assert_eq!(learned.test_at_focus.len(), 5);
}

#[test]
fn full_theta_learned_matches_random_search() {
    // with k = |Θ| both sides hold every adam8p config
    let store = swept(&tasks(), &optimizers(12), 1);
    let report = run_experiment(&spec(ExperimentKind::IidGeneralization), &store).unwrap();
    let learned = report.condition("learned").unwrap();
    let rand = report.condition("rand_adam8p").unwrap();
    assert_eq!(learned.band.test.median.len(), 12);
    assert_eq!(learned.median_test_at(12), rand.median_test_at(12));
    assert_eq!(learned.band.valid.median_at(12), rand.band.valid.median_at(12));
}

#[test]
fn full_horizon_matches_unrestricted_training() {
    let store = swept(&tasks(), &optimizers(12), 1);
    let mut s = spec(ExperimentKind::ShortHorizon);
    s.horizons = vec![10, 40];
    let report = run_experiment(&s, &store).unwrap();
    let full = report.condition("learned_full").unwrap();
    let h = report.condition("learned_h40").unwrap();
    assert_eq!(full.band, h.band);
    assert!(report.condition("learned_h10").is_some());
    assert!(report.condition("rand_adam1p").is_some());
}

#[test]
fn experiment_on_incomplete_store_fails_up_front() {
    let (t, o) = (tasks(), optimizers(4));
    let mut store = swept(&t, &o[..3], 1);
    for c in &o {
        store.add_optimizer(c).unwrap();
    }
    let err = run_experiment(&spec(ExperimentKind::IidGeneralization), &store).unwrap_err();
    match err {
        Error::IncompleteStore { gaps } => assert_eq!(gaps.len(), t.len() * (o.len() - 3) * 2),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn num_tasks_sweep_uses_one_test_set_per_resample() {
    let store = swept(&tasks(), &optimizers(6), 1);
    let mut s = spec(ExperimentKind::NumTasksSweep);
    s.task_counts = vec![2, 4, 100];
    let report = run_experiment(&s, &store).unwrap();
    let names: Vec<&str> = report.conditions.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["tasks_2", "tasks_4"]);
    assert_eq!(report.metadata["test_tasks_per_resample"], 4);
}
