//! Task splits: iid, by family, by parameter count.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::RngKey;
use crate::store::Store;
use crate::task::Family;

/// Shuffle `ids` with `key` and cut at `round(fraction · N)`. The training
/// side is never empty and neither is the test side.
pub fn split_tasks_iid(ids: &[String], fraction: f64, key: &RngKey) -> Result<(Vec<String>, Vec<String>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config("train_fraction", format!("{fraction} must be in (0, 1)")));
    }
    if ids.len() < 2 {
        return Err(Error::TooFewTasks(format!(
            "need at least 2 tasks to split, got {}",
            ids.len()
        )));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut key.stream());
    let cut = ((fraction * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1);
    let test = shuffled.split_off(cut);
    Ok((shuffled, test))
}

/// Family of a task id, read from its `family-hash` prefix.
pub fn family_of(task_id: &str) -> Option<Family> {
    let (name, _) = task_id.rsplit_once('-')?;
    name.parse().ok()
}

/// Train on every family except `held_out`; test on the held-out ones.
pub fn holdout_by_family(ids: &[String], held_out: &[Family]) -> Result<(Vec<String>, Vec<String>)> {
    if held_out.is_empty() {
        return Err(Error::config(
            "holdout_families",
            "no families held out, test set would be empty",
        ));
    }
    let present: BTreeSet<Family> = ids.iter().filter_map(|t| family_of(t)).collect();
    if let Some(f) = held_out.iter().find(|f| !present.contains(f)) {
        return Err(Error::config("holdout_families", format!("family {f} has no tasks")));
    }
    let (test, train): (Vec<String>, Vec<String>) = ids
        .iter()
        .cloned()
        .partition(|t| family_of(t).is_some_and(|f| held_out.contains(&f)));
    if train.is_empty() {
        return Err(Error::TooFewTasks(
            "every family is held out, no training tasks remain".into(),
        ));
    }
    Ok((train, test))
}

/// Decade bucket of a parameter count: `10^b <= n < 10^(b+1)`.
pub fn param_bucket(n_params: usize) -> u32 {
    n_params.max(1).ilog10()
}

/// Group tasks by the decade of their parameter count, as recorded in the
/// store. Tasks without records are skipped.
pub fn bucket_by_param_count(ids: &[String], store: &Store) -> BTreeMap<u32, Vec<String>> {
    let mut out: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    for t in ids {
        if let Some(c) = store.curves_for_task(t).first() {
            out.entry(param_bucket(c.n_params)).or_default().push(t.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buckets() {
        assert_eq!(param_bucket(50), 1);
        assert_eq!(param_bucket(2), 0);
        assert_eq!(param_bucket(10), 1);
        assert_eq!(param_bucket(999), 2);
    }

    #[test]
    fn family_prefix() {
        assert_eq!(family_of("quadratic_like-0123456789ab"), Some(Family::QuadraticLike));
        assert_eq!(family_of("nope-0123"), None);
    }
}
