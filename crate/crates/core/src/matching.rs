//! Covariate matching across the splits feeding the decoders being compared.
//!
//! Train splits are subsampled without replacement to the per-class minimum
//! across splits, then minority classes are oversampled with replacement so
//! every class reaches the majority count. Test splits get exactly `m` unique
//! rows per class, where `m` is the global minimum class count, and are
//! sorted ascending in time so error autocorrelation is meaningful.
//!
//! Matching works on row indices only; spike data is never copied here.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};

/// Row indices of one split with their class labels, parallel vectors.
#[derive(Debug, Clone, Default)]
pub struct SplitRows {
    pub rows: Vec<usize>,
    pub labels: Vec<u8>,
}

impl SplitRows {
    pub fn new(rows: Vec<usize>, labels: Vec<u8>) -> Self {
        assert_eq!(rows.len(), labels.len());
        SplitRows { rows, labels }
    }

    fn by_class(&self, n_classes: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); n_classes];
        for (&r, &l) in self.rows.iter().zip(&self.labels) {
            out[l as usize].push(r);
        }
        out
    }
}

/// Draw `n` rows without replacement via a seeded shuffle.
fn draw(rng: &mut Rng, pool: &[usize], n: usize) -> Vec<usize> {
    let mut copy = pool.to_vec();
    copy.shuffle(rng);
    copy.truncate(n);
    copy
}

fn check_classes(
    by_class: &[Vec<Vec<usize>>],
    n_classes: usize,
) -> Result<()> {
    for (s, classes) in by_class.iter().enumerate() {
        for j in 0..n_classes {
            if classes[j].is_empty() {
                return Err(Error::Infeasible(format!(
                    "split {s} has no rows of class {j}"
                )));
            }
        }
    }
    Ok(())
}

/// Match train splits: per-class subsample to the cross-split minimum, then
/// oversample minorities with replacement up to the majority count. Returned
/// row lists may contain repetitions.
pub fn match_train(
    splits: &[SplitRows],
    n_classes: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let by_class: Vec<Vec<Vec<usize>>> =
        splits.iter().map(|s| s.by_class(n_classes)).collect();
    check_classes(&by_class, n_classes)?;
    let m: Vec<usize> = (0..n_classes)
        .map(|j| by_class.iter().map(|c| c[j].len()).min().unwrap_or(0))
        .collect();
    let m_max = *m.iter().max().expect("n_classes > 0");

    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(splits.len());
    for classes in &by_class {
        let mut rows = Vec::new();
        let mut matched: Vec<Vec<usize>> = Vec::with_capacity(n_classes);
        for j in 0..n_classes {
            matched.push(draw(&mut rng, &classes[j], m[j]));
        }
        for j in 0..n_classes {
            rows.extend_from_slice(&matched[j]);
            // Oversample only from the rows the subsample step kept.
            for _ in m[j]..m_max {
                let pick = rng.random_range(0..matched[j].len());
                rows.push(matched[j][pick]);
            }
        }
        out.push(rows);
    }
    Ok(out)
}

/// Match test splits: every split gets exactly `m` unique rows per class,
/// sorted ascending in time. Returns the row lists and `m`.
pub fn match_test(
    splits: &[SplitRows],
    n_classes: usize,
    seed: u64,
) -> Result<(Vec<Vec<usize>>, usize)> {
    let by_class: Vec<Vec<Vec<usize>>> =
        splits.iter().map(|s| s.by_class(n_classes)).collect();
    check_classes(&by_class, n_classes)?;
    let m = by_class
        .iter()
        .flat_map(|classes| classes.iter().map(|c| c.len()))
        .min()
        .unwrap_or(0);
    if m == 0 {
        return Err(Error::Infeasible(
            "a test split has an empty class".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(splits.len());
    for classes in &by_class {
        let mut rows = Vec::with_capacity(n_classes * m);
        for class_rows in classes {
            rows.extend(draw(&mut rng, class_rows, m));
        }
        rows.sort_unstable();
        out.push(rows);
    }
    Ok((out, m))
}
