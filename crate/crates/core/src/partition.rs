//! Split one context's subdatasets into two independent parts whose sizes
//! approximate a target proportion.
//!
//! Subdatasets are permuted with a seeded RNG, every proper prefix is scored
//! by `p_a - p_alpha` where `p_a = min(n_a) / (min(n_a) + min(n_b))` over
//! per-class counts, and the prefix with the smallest non-negative score
//! wins. "Size" is the minimum per-class count: the effective amount of data
//! is set by the rarest class, not the raw number of rows.

use rand::seq::SliceRandom;

use crate::data::{Context, Direction, SessionDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// A two-way split of a context's subdatasets. `alpha` is the train side.
#[derive(Debug, Clone)]
pub struct Partition {
    pub alpha_ids: Vec<u32>,
    pub beta_ids: Vec<u32>,
    /// The realized `p_a` of the selected prefix.
    pub achieved_proportion: f64,
    /// Set when no prefix reached the target and the closest one was used.
    pub fallback: bool,
}

impl Partition {
    pub fn is_alpha(&self, subdataset: u32) -> bool {
        self.alpha_ids.binary_search(&subdataset).is_ok()
    }
}

/// Per-subdataset class counts over usable (moving) timepoints.
fn class_counts(ds: &SessionDataset, context: Context, ids: &[u32]) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0usize; ds.n_classes()]; ids.len()];
    for row in 0..ds.len() {
        if ds.context(row) != context || ds.direction(row) == Direction::NoMovement {
            continue;
        }
        if let Ok(pos) = ids.binary_search(&ds.subdataset(row)) {
            counts[pos][ds.location(row) as usize] += 1;
        }
    }
    counts
}

pub fn partition_subdatasets(
    ds: &SessionDataset,
    context: Context,
    spec: SplitSpec,
) -> Result<Partition> {
    let ids = ds.subdataset_ids(context);
    if ids.len() < 2 {
        return Err(Error::CannotPartition(format!(
            "context {} has {} subdataset(s); at least 2 required",
            context.tag(),
            ids.len()
        )));
    }
    let counts = class_counts(ds, context, &ids);
    let totals: Vec<usize> = (0..ds.n_classes())
        .map(|j| counts.iter().map(|c| c[j]).sum())
        .collect();
    if let Some(j) = totals.iter().position(|&t| t == 0) {
        return Err(Error::ClassAbsent {
            class: j,
            what: format!("context {}", context.tag()),
        });
    }

    let mut permuted = ids.clone();
    permuted.shuffle(&mut rng_from_seed(spec.seed));

    // Score every proper prefix of the permutation.
    let mut prefix = vec![0usize; ds.n_classes()];
    let mut best_nonneg: Option<(f64, usize)> = None;
    let mut best_abs: Option<(f64, usize)> = None;
    let mut proportions = vec![0.0; permuted.len()];
    for (i, id) in permuted[..permuted.len() - 1].iter().enumerate() {
        let pos = ids.binary_search(id).expect("id from the same list");
        for j in 0..ds.n_classes() {
            prefix[j] += counts[pos][j];
        }
        let min_a = *prefix.iter().min().expect("n_classes > 0") as f64;
        let min_b = (0..ds.n_classes())
            .map(|j| totals[j] - prefix[j])
            .min()
            .expect("n_classes > 0") as f64;
        let p_a = if min_a + min_b == 0.0 {
            0.0
        } else {
            min_a / (min_a + min_b)
        };
        proportions[i] = p_a;
        let e = p_a - spec.proportion_alpha;
        if e >= 0.0 && best_nonneg.map_or(true, |(b, _)| e < b) {
            best_nonneg = Some((e, i));
        }
        if best_abs.map_or(true, |(b, _)| e.abs() < b) {
            best_abs = Some((e.abs(), i));
        }
    }

    let (chosen, fallback) = match best_nonneg {
        Some((_, i)) => (i, false),
        None => (best_abs.expect("at least one prefix").1, true),
    };
    let mut alpha_ids: Vec<u32> = permuted[..=chosen].to_vec();
    let mut beta_ids: Vec<u32> = permuted[chosen + 1..].to_vec();
    alpha_ids.sort_unstable();
    beta_ids.sort_unstable();
    Ok(Partition {
        alpha_ids,
        beta_ids,
        achieved_proportion: proportions[chosen],
        fallback,
    })
}
