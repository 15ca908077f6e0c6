//! The three linear decoders, hyperparameter grids and stratified k-fold
//! cross-validation.

pub mod linear;
pub mod poisson;

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::WindowedDesign;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub use linear::{fit_linear, LinearKind, LinearModel, LinearProblem, OptimBudget};
pub use poisson::{fit_poisson, PoissonNb, RATE_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    Poisson,
    Logistic,
    Svm,
}

impl DecoderKind {
    pub fn parse(s: &str) -> Option<DecoderKind> {
        match s {
            "poisson" => Some(DecoderKind::Poisson),
            "logistic" => Some(DecoderKind::Logistic),
            "svm" => Some(DecoderKind::Svm),
            _ => None,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            DecoderKind::Poisson => "poisson",
            DecoderKind::Logistic => "logistic",
            DecoderKind::Svm => "svm",
        }
    }
}

/// Hyperparameters for one decoder kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hyperparams {
    Poisson { prior_rate: f64, prior_n: f64 },
    Linear { inverse_reg: f64 },
}

/// A fitted decoder of any kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum TrainedDecoder {
    Poisson(PoissonNb),
    Linear(LinearModel),
}

impl TrainedDecoder {
    pub fn predict(&self, design: &WindowedDesign) -> Vec<u8> {
        match self {
            TrainedDecoder::Poisson(m) => m.predict(design),
            TrainedDecoder::Linear(m) => m.predict(design),
        }
    }

    pub fn predict_row(&self, row: &[u32]) -> u8 {
        match self {
            TrainedDecoder::Poisson(m) => m.predict_row(row),
            TrainedDecoder::Linear(m) => m.predict_row(row),
        }
    }

    pub fn as_poisson(&self) -> Option<&PoissonNb> {
        match self {
            TrainedDecoder::Poisson(m) => Some(m),
            TrainedDecoder::Linear(_) => None,
        }
    }
}

/// Fit a decoder of the given kind with explicit hyperparameters.
pub fn fit_decoder(
    design: &WindowedDesign,
    kind: DecoderKind,
    hp: Hyperparams,
    budget: OptimBudget,
) -> Result<TrainedDecoder> {
    match (kind, hp) {
        (DecoderKind::Poisson, Hyperparams::Poisson { prior_rate, prior_n }) => {
            Ok(TrainedDecoder::Poisson(fit_poisson(design, prior_rate, prior_n)?))
        }
        (DecoderKind::Logistic, Hyperparams::Linear { inverse_reg }) => Ok(
            TrainedDecoder::Linear(fit_linear(design, LinearKind::Logistic, inverse_reg, budget)?),
        ),
        (DecoderKind::Svm, Hyperparams::Linear { inverse_reg }) => Ok(TrainedDecoder::Linear(
            fit_linear(design, LinearKind::Svm, inverse_reg, budget)?,
        )),
        _ => Err(Error::Config(format!(
            "hyperparameters {hp:?} do not match decoder kind {kind:?}"
        ))),
    }
}

pub fn save_model(model: &TrainedDecoder, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(model)
        .map_err(|e| Error::ModelIo(format!("serialize: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedDecoder> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::ModelIo(format!("parse {path:?}: {e}")))
}

/// Cross-validation configuration. The Poisson grid covers prior sample
/// sizes {0, 1, 5, 10, ..., 100, 500, 1000} (the 5..100 range in steps of 5,
/// configurable) and prior rates {0, 0.5, ..., 10}; the linear grid spans
/// 1e-4 to 1e4 in decades.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub poisson_n_grid: Vec<f64>,
    pub poisson_rate_grid: Vec<f64>,
    pub linear_c_grid: Vec<f64>,
    pub seed: u64,
}

impl CvConfig {
    pub fn with_default_grids(seed: u64) -> Self {
        let mut n_grid = vec![0.0, 1.0];
        let mut v = 5.0;
        while v <= 100.0 {
            n_grid.push(v);
            v += 5.0;
        }
        n_grid.push(500.0);
        n_grid.push(1000.0);
        let rate_grid: Vec<f64> = (0..=20).map(|k| k as f64 / 2.0).collect();
        let c_grid: Vec<f64> = (-4..=4).map(|e| 10f64.powi(e)).collect();
        CvConfig {
            folds: 5,
            poisson_n_grid: n_grid,
            poisson_rate_grid: rate_grid,
            linear_c_grid: c_grid,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config("cross-validation needs >= 2 folds".into()));
        }
        if self.poisson_n_grid.is_empty()
            || self.poisson_rate_grid.is_empty()
            || self.linear_c_grid.is_empty()
        {
            return Err(Error::Config("cross-validation grids must be non-empty".into()));
        }
        Ok(())
    }
}

/// Outcome of a grid search: the winning point, the per-point mean
/// accuracies in evaluation order, and how many folds were skipped.
#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub chosen: Hyperparams,
    pub scores: Vec<(Hyperparams, f64)>,
    pub skipped_folds: usize,
}

/// Stratified fold assignment: per-class indices are shuffled and dealt
/// round-robin, so every fold sees near-proportional class counts.
fn stratified_folds(labels: &[u8], n_classes: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    let mut by_class = vec![Vec::new(); n_classes];
    for (r, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(r);
    }
    let mut assignment = vec![0usize; labels.len()];
    for class_rows in &mut by_class {
        class_rows.shuffle(&mut rng);
        for (k, &r) in class_rows.iter().enumerate() {
            assignment[r] = k % folds;
        }
    }
    assignment
}

/// Pick hyperparameters by stratified k-fold accuracy. Grid points are
/// visited from the strongest prior (or strongest regularization) downward
/// and only a strictly better score displaces the incumbent, so ties break
/// toward the stronger prior.
pub fn cross_validate(
    design: &WindowedDesign,
    cfg: &CvConfig,
    kind: DecoderKind,
) -> Result<CvOutcome> {
    cfg.validate()?;
    if design.n_rows() < cfg.folds {
        return Err(Error::Infeasible(format!(
            "{} rows cannot fill {} folds",
            design.n_rows(),
            cfg.folds
        )));
    }
    let n_classes = design.n_classes();
    let assignment = stratified_folds(design.labels(), n_classes, cfg.folds, cfg.seed);

    // A fold is usable when the complementary training side still contains
    // every class; the same folds are reused for every grid point.
    let mut fold_rows: Vec<Vec<usize>> = vec![Vec::new(); cfg.folds];
    for (r, &f) in assignment.iter().enumerate() {
        fold_rows[f].push(r);
    }
    let total_counts = design.class_counts();
    let mut usable = Vec::new();
    let mut skipped_folds = 0usize;
    for f in 0..cfg.folds {
        let mut fold_counts = vec![0usize; n_classes];
        for &r in &fold_rows[f] {
            fold_counts[design.label(r) as usize] += 1;
        }
        let train_ok =
            (0..n_classes).all(|j| total_counts[j] - fold_counts[j] > 0);
        if train_ok && !fold_rows[f].is_empty() {
            usable.push(f);
        } else {
            skipped_folds += 1;
        }
    }
    if usable.is_empty() {
        return Err(Error::Infeasible(
            "all cross-validation folds were skipped".into(),
        ));
    }

    let grid: Vec<Hyperparams> = match kind {
        DecoderKind::Poisson => {
            let mut pts = Vec::new();
            let mut ns = cfg.poisson_n_grid.clone();
            ns.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let mut rates = cfg.poisson_rate_grid.clone();
            rates.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for &n in &ns {
                for &r in &rates {
                    pts.push(Hyperparams::Poisson {
                        prior_rate: r,
                        prior_n: n,
                    });
                }
            }
            pts
        }
        DecoderKind::Logistic | DecoderKind::Svm => {
            let mut cs = cfg.linear_c_grid.clone();
            cs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cs.iter()
                .map(|&c| Hyperparams::Linear { inverse_reg: c })
                .collect()
        }
    };

    // Per-fold train/eval splits, materialized once.
    let splits: Vec<(WindowedDesign, WindowedDesign)> = usable
        .iter()
        .map(|&f| {
            let eval_idx = &fold_rows[f];
            let train_idx: Vec<usize> = (0..design.n_rows())
                .filter(|r| assignment[*r] != f)
                .collect();
            (design.subset(&train_idx), design.subset(eval_idx))
        })
        .collect();

    let mut scores = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, Hyperparams)> = None;
    for &hp in &grid {
        let mut acc_sum = 0.0;
        for (train, eval) in &splits {
            let model = fit_decoder(train, kind, hp, OptimBudget::default())?;
            let preds = model.predict(eval);
            let correct = preds
                .iter()
                .zip(eval.labels())
                .filter(|(p, l)| p == l)
                .count();
            acc_sum += correct as f64 / eval.n_rows() as f64;
        }
        let score = acc_sum / splits.len() as f64;
        scores.push((hp, score));
        if best.map_or(true, |(b, _)| score > b) {
            best = Some((score, hp));
        }
    }
    let (_, chosen) = best.expect("grid validated non-empty");
    Ok(CvOutcome {
        chosen,
        scores,
        skipped_folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{materialize_rows, Context, Direction, SessionDataset};

    fn poisson_toy(n_per_class: usize) -> WindowedDesign {
        // Strongly separated single-feature classes.
        let mut labels = Vec::new();
        let mut spikes = Vec::new();
        for k in 0..n_per_class {
            for j in 0..3u32 {
                labels.push(j as u8);
                spikes.push(j * 7 + (k as u32 % 2));
            }
        }
        let t = labels.len();
        let ds = SessionDataset::new(
            (0..t as u64).collect(),
            vec![Context::Task; t],
            vec![0; t],
            labels,
            vec![Direction::Forward; t],
            spikes,
            1,
            3,
        )
        .unwrap();
        materialize_rows(&ds, 0, &(0..t).collect::<Vec<_>>())
    }

    #[test]
    fn one_point_grid_is_returned() {
        let d = poisson_toy(10);
        let cfg = CvConfig {
            folds: 5,
            poisson_n_grid: vec![2.0],
            poisson_rate_grid: vec![0.5],
            linear_c_grid: vec![1.0],
            seed: 0,
        };
        let out = cross_validate(&d, &cfg, DecoderKind::Poisson).unwrap();
        assert_eq!(
            out.chosen,
            Hyperparams::Poisson {
                prior_rate: 0.5,
                prior_n: 2.0
            }
        );
        assert_eq!(out.scores.len(), 1);
    }

    #[test]
    fn chosen_score_is_the_grid_maximum() {
        let d = poisson_toy(12);
        let cfg = CvConfig {
            folds: 4,
            poisson_n_grid: vec![0.0, 1.0, 10.0, 1000.0],
            poisson_rate_grid: vec![0.0, 1.0, 5.0],
            linear_c_grid: vec![1.0],
            seed: 3,
        };
        let out = cross_validate(&d, &cfg, DecoderKind::Poisson).unwrap();
        let max = out
            .scores
            .iter()
            .map(|&(_, s)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        let chosen_score = out
            .scores
            .iter()
            .find(|(hp, _)| *hp == out.chosen)
            .unwrap()
            .1;
        assert_eq!(chosen_score, max);
    }

    #[test]
    fn duplicate_grid_points_break_ties_deterministically() {
        let d = poisson_toy(10);
        let cfg = CvConfig {
            folds: 5,
            poisson_n_grid: vec![3.0, 3.0],
            poisson_rate_grid: vec![1.0, 1.0],
            linear_c_grid: vec![1.0],
            seed: 1,
        };
        let out = cross_validate(&d, &cfg, DecoderKind::Poisson).unwrap();
        assert_eq!(out.scores.len(), 4);
        let s0 = out.scores[0].1;
        assert!(out.scores.iter().all(|&(_, s)| s == s0));
        assert_eq!(out.chosen, out.scores[0].0);
    }

    #[test]
    fn rare_class_folds_are_skipped() {
        // One row of class 2: whichever fold holds it leaves the training
        // side without that class, so exactly one fold is skipped.
        let mut labels = vec![0u8, 1];
        let mut spikes = vec![0u32, 5];
        for k in 0..20 {
            labels.push((k % 2) as u8);
            spikes.push((k % 2) as u32 * 5);
        }
        labels.push(2);
        spikes.push(11);
        let t = labels.len();
        let ds = SessionDataset::new(
            (0..t as u64).collect(),
            vec![Context::Task; t],
            vec![0; t],
            labels,
            vec![Direction::Forward; t],
            spikes,
            1,
            3,
        )
        .unwrap();
        let d = materialize_rows(&ds, 0, &(0..t).collect::<Vec<_>>());
        let cfg = CvConfig {
            folds: 5,
            poisson_n_grid: vec![1.0],
            poisson_rate_grid: vec![0.5],
            linear_c_grid: vec![1.0],
            seed: 0,
        };
        let out = cross_validate(&d, &cfg, DecoderKind::Poisson).unwrap();
        assert_eq!(out.skipped_folds, 1);
    }

    #[test]
    fn linear_grid_prefers_stronger_regularization_on_ties() {
        let d = poisson_toy(8);
        let cfg = CvConfig {
            folds: 4,
            poisson_n_grid: vec![1.0],
            poisson_rate_grid: vec![0.5],
            linear_c_grid: vec![1e4, 1e-4, 1.0],
            seed: 2,
        };
        let out = cross_validate(&d, &cfg, DecoderKind::Logistic).unwrap();
        // Evaluation order must be ascending C regardless of input order.
        let cs: Vec<f64> = out
            .scores
            .iter()
            .map(|(hp, _)| match hp {
                Hyperparams::Linear { inverse_reg } => *inverse_reg,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(cs, vec![1e-4, 1.0, 1e4]);
    }

    #[test]
    fn model_json_round_trip() {
        let d = poisson_toy(6);
        let m = fit_decoder(
            &d,
            DecoderKind::Poisson,
            Hyperparams::Poisson {
                prior_rate: 0.5,
                prior_n: 1.0,
            },
            OptimBudget::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(m.predict(&d), back.predict(&d));
    }
}
