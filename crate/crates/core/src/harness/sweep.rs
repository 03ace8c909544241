//! Evaluation sweeps: train every (task, optimizer, seed) triple once.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::optim::OptimizerConfig;
use crate::scoring::{train_and_record, RunProfile, TrainingCurve};
use crate::store::{CurveRecord, Store};
use crate::task::{TaskConfig, TaskInstance};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SweepSummary {
    pub written: usize,
    pub skipped: usize,
    pub failed: usize,
    pub content_hash: String,
}

struct WorkItem {
    task: usize,
    optimizer: usize,
    seed: u64,
}

/// A curve that diverged before the first evaluation; stands in for runs
/// that could not be carried out.
fn failed_curve(task_id: &str, optimizer_id: &str, seed: u64, n_params: usize, profile: &RunProfile) -> TrainingCurve {
    let points = profile.eval_points();
    TrainingCurve {
        task_id: task_id.to_string(),
        optimizer_id: optimizer_id.to_string(),
        seed,
        steps: (0..points).map(|i| i * profile.eval_every).collect(),
        train_loss: vec![f64::NAN; points],
        valid_loss: vec![f64::NAN; points],
        test_loss: vec![f64::NAN; points],
        diverged_at: Some(0),
        n_params,
        wall_time_s: 0.0,
    }
}

/// Shared per-task state: the instance is built by the first worker that
/// needs it and dropped once the task's last item finishes.
struct TaskSlot {
    instance: Mutex<Option<Arc<std::result::Result<TaskInstance, String>>>>,
    remaining: AtomicUsize,
}

/// Complete `store` for `tasks × optimizers × 0..profile.seeds`, skipping
/// triples already present. Items are handed out task-major to `workers`
/// threads; a single writer appends results. The store's content hash does
/// not depend on `workers`.
pub fn run_evaluation_sweep(
    store: &mut Store,
    tasks: &[TaskConfig],
    optimizers: &[OptimizerConfig],
    profile: &RunProfile,
    workers: usize,
) -> Result<SweepSummary> {
    profile.validate()?;
    if store.profile() != profile.fingerprint() {
        return Err(Error::IncompatibleProfile {
            store: store.profile().to_string(),
            record: profile.fingerprint().to_string(),
        });
    }
    for t in tasks {
        store.add_task(t)?;
    }
    for o in optimizers {
        store.add_optimizer(o)?;
    }
    let mut items = Vec::new();
    let mut skipped = 0;
    for (ti, t) in tasks.iter().enumerate() {
        for (oi, o) in optimizers.iter().enumerate() {
            for seed in 0..profile.seeds as u64 {
                if store.contains(t.task_id(), o.optimizer_id(), seed) {
                    skipped += 1;
                } else {
                    items.push(WorkItem {
                        task: ti,
                        optimizer: oi,
                        seed,
                    });
                }
            }
        }
    }
    let slots: Vec<TaskSlot> = (0..tasks.len())
        .map(|ti| TaskSlot {
            instance: Mutex::new(None),
            remaining: AtomicUsize::new(items.iter().filter(|w| w.task == ti).count()),
        })
        .collect();
    let total = items.len();
    let next = AtomicUsize::new(0);
    let workers = workers.max(1).min(total.max(1));
    let fingerprint = profile.fingerprint();
    let started = Instant::now();
    let mut written = 0;
    let mut failed = 0;
    let mut write_error = None;

    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::sync_channel::<(TrainingCurve, bool)>(workers * 4);
        for _ in 0..workers {
            let tx = tx.clone();
            let (items, slots, next) = (&items, &slots, &next);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let config = &tasks[item.task];
                let opt = &optimizers[item.optimizer];
                let slot = &slots[item.task];
                let instance = {
                    let mut guard = slot.instance.lock().unwrap_or_else(|e| e.into_inner());
                    guard
                        .get_or_insert_with(|| {
                            Arc::new(
                                catch_unwind(AssertUnwindSafe(|| TaskInstance::new(config.clone())))
                                    .map_err(|_| "panic while building task".to_string())
                                    .and_then(|r| r.map_err(|e| e.to_string())),
                            )
                        })
                        .clone()
                };
                let (curve, ok) = match instance.as_ref() {
                    Ok(task) => {
                        match catch_unwind(AssertUnwindSafe(|| train_and_record(task, opt, item.seed, profile))) {
                            Ok(c) => (c, true),
                            Err(_) => {
                                log::error!(
                                    "run ({}, {}, {}) panicked",
                                    config.task_id(),
                                    opt.optimizer_id(),
                                    item.seed
                                );
                                (
                                    failed_curve(
                                        task.task_id(),
                                        opt.optimizer_id(),
                                        item.seed,
                                        task.param_count(),
                                        profile,
                                    ),
                                    false,
                                )
                            }
                        }
                    }
                    Err(e) => {
                        log::error!("task {} could not be built: {e}", config.task_id());
                        (
                            failed_curve(config.task_id(), opt.optimizer_id(), item.seed, 0, profile),
                            false,
                        )
                    }
                };
                drop(instance);
                if slot.remaining.fetch_sub(1, Ordering::AcqRel) == 1 {
                    *slot.instance.lock().unwrap_or_else(|e| e.into_inner()) = None;
                }
                if tx.send((curve, ok)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (curve, ok) in rx {
            if write_error.is_some() {
                continue;
            }
            if let Err(e) = store.append(CurveRecord::new(curve, fingerprint)) {
                write_error = Some(e);
                // stop handing out work; in-flight runs drain into the void
                next.store(usize::MAX / 2, Ordering::Relaxed);
                continue;
            }
            written += 1;
            failed += usize::from(!ok);
            if written % 1000 == 0 {
                let el = started.elapsed().as_secs_f64();
                log::info!("sweep: {written}/{total} runs, {el:.0}s elapsed");
            }
        }
    });
    store.sync()?;
    if let Some(e) = write_error {
        return Err(e);
    }
    Ok(SweepSummary {
        written,
        skipped,
        failed,
        content_hash: store.content_hash(),
    })
}
