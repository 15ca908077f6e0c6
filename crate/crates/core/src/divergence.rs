//! Cross-context decoding divergence: accuracy estimation with a
//! dependence-aware standard error, the symmetric decoding divergence and its
//! conservative standard-deviation bound, confound-stratified one-sided
//! Z-tests, and the seed-averaged pipeline that ties partitioning, matching
//! and decoding together.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    materialize_rows, valid_window_rows, Context, Direction, SessionDataset, SplitSpec, Stratum,
};
use crate::decoders::{
    cross_validate, fit_decoder, CvConfig, DecoderKind, Hyperparams, OptimBudget, TrainedDecoder,
};
use crate::error::{Error, Result};
use crate::matching::{match_test, match_train, SplitRows};
use crate::partition::partition_subdatasets;
use crate::rng::{derive_seed, Stream};
use crate::stats::{normal_sf, sample_sd};
use crate::vif::estimate_vif;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Empirical accuracy with its standard error. The error vector is kept for
/// VIF estimation; entry i is 1 when test row i was misclassified.
#[derive(Debug, Clone)]
pub struct AccuracyEstimate {
    pub value: f64,
    pub se: f64,
    pub n_test: usize,
    pub error_vector: Vec<u8>,
}

/// Build an accuracy estimate from an error vector. The standard error is
/// `sqrt(vif) * sd(E) / sqrt(n)` with the sample (n-1) standard deviation.
pub fn accuracy_from_errors(error_vector: Vec<u8>, vif: f64) -> Result<AccuracyEstimate> {
    if error_vector.is_empty() {
        return Err(Error::DegenerateVariance("empty test set".into()));
    }
    if vif < 1.0 {
        return Err(Error::Config(format!("vif must be >= 1, got {vif}")));
    }
    let n = error_vector.len();
    let as_f64: Vec<f64> = error_vector.iter().map(|&e| e as f64).collect();
    let err_rate = as_f64.iter().sum::<f64>() / n as f64;
    let se = vif.sqrt() * sample_sd(&as_f64) / (n as f64).sqrt();
    Ok(AccuracyEstimate {
        value: 1.0 - err_rate,
        se,
        n_test: n,
        error_vector,
    })
}

/// Evaluate a decoder on a (time-sorted) test design.
pub fn accuracy(
    model: &TrainedDecoder,
    test: &crate::data::WindowedDesign,
    vif: f64,
) -> Result<AccuracyEstimate> {
    let preds = model.predict(test);
    let errors: Vec<u8> = preds
        .iter()
        .zip(test.labels())
        .map(|(p, l)| u8::from(p != l))
        .collect();
    accuracy_from_errors(errors, vif)
}

/// Symmetric decoding divergence of four accuracy estimates and the
/// conservative bound on its standard deviation (half the sum of the four
/// component standard errors).
pub fn symmetric_divergence(
    acc_a: &AccuracyEstimate,
    acc_b: &AccuracyEstimate,
    xacc_a_to_b: &AccuracyEstimate,
    xacc_b_to_a: &AccuracyEstimate,
) -> (f64, f64) {
    let delta =
        0.5 * (acc_a.value + acc_b.value - xacc_a_to_b.value - xacc_b_to_a.value);
    let sigma = 0.5 * (acc_a.se + acc_b.se + xacc_a_to_b.se + xacc_b_to_a.se);
    (delta, sigma)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ZTestResult {
    pub z: f64,
    pub p_one_sided: f64,
    pub p_two_sided: f64,
}

/// Combine per-stratum divergences by averaging means and averaging standard
/// deviations: `p = 1 - Phi(sum(delta) / sum(sigma))`.
pub fn combined_z_test(strata: &[(f64, f64)]) -> Result<ZTestResult> {
    if strata.is_empty() {
        return Err(Error::Config("combined test needs at least one stratum".into()));
    }
    if strata.iter().any(|&(_, s)| s < 0.0) {
        return Err(Error::Config("negative sigma in combined test".into()));
    }
    let sum_delta: f64 = strata.iter().map(|&(d, _)| d).sum();
    let sum_sigma: f64 = strata.iter().map(|&(_, s)| s).sum();
    if sum_sigma == 0.0 {
        return Err(Error::DegenerateVariance(
            "all stratum standard deviations are zero".into(),
        ));
    }
    let z = sum_delta / sum_sigma;
    Ok(ZTestResult {
        z,
        p_one_sided: normal_sf(z),
        p_two_sided: (2.0 * normal_sf(z.abs())).min(1.0),
    })
}

/// One-sided p-value from seed-and-decoder averaged accuracies and raw
/// (unscaled) standard errors, applying the VIF to the denominator.
pub fn aggregated_p(
    acc_same: f64,
    acc_cross: f64,
    se_same_raw: f64,
    se_cross_raw: f64,
    vif: f64,
) -> Result<f64> {
    if vif < 1.0 {
        return Err(Error::Config(format!("vif must be >= 1, got {vif}")));
    }
    let denom = vif.sqrt() * (se_same_raw + se_cross_raw);
    if denom == 0.0 {
        return Err(Error::DegenerateVariance(
            "aggregated standard errors are zero".into(),
        ));
    }
    Ok(normal_sf((acc_same - acc_cross) / denom))
}

/// How the primary p-value corrects for temporal dependence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum VifMode {
    Fixed { value: f64 },
    Estimated,
    None,
}

impl Default for VifMode {
    fn default() -> Self {
        VifMode::Fixed { value: 12.0 }
    }
}

/// Extra p-value columns to compute alongside the primary one.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Ablations {
    #[serde(default)]
    pub no_matching: bool,
    #[serde(default)]
    pub no_stratification: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestSettings {
    pub decoder: DecoderKind,
    pub lag: usize,
    pub p_alpha: f64,
    pub n_seeds: usize,
    pub master_seed: u64,
    pub vif_mode: VifMode,
    /// The fixed VIF used for the always-reported fixed-VIF column.
    pub fixed_vif: f64,
    pub matching: bool,
    pub stratification: bool,
    pub cv: Option<CvConfig>,
    pub hyperparams: Hyperparams,
    pub budget: OptimBudget,
    pub min_success_fraction: f64,
    pub k_min: usize,
    pub ablations: Ablations,
}

impl TestSettings {
    pub fn new(decoder: DecoderKind, n_seeds: usize, master_seed: u64) -> Self {
        let hyperparams = match decoder {
            DecoderKind::Poisson => Hyperparams::Poisson {
                prior_rate: 0.5,
                prior_n: 1.0,
            },
            _ => Hyperparams::Linear { inverse_reg: 1.0 },
        };
        TestSettings {
            decoder,
            lag: 9,
            p_alpha: 0.5,
            n_seeds,
            master_seed,
            vif_mode: VifMode::default(),
            fixed_vif: 12.0,
            matching: true,
            stratification: true,
            cv: None,
            hyperparams,
            budget: OptimBudget::default(),
            min_success_fraction: 0.9,
            k_min: 1,
            ablations: Ablations::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::Config("n_seeds must be at least 1".into()));
        }
        if !(self.p_alpha > 0.0 && self.p_alpha < 1.0) {
            return Err(Error::Config("p_alpha must lie in (0,1)".into()));
        }
        if self.fixed_vif < 1.0 {
            return Err(Error::Config("fixed_vif must be >= 1".into()));
        }
        if let VifMode::Fixed { value } = self.vif_mode {
            if value < 1.0 {
                return Err(Error::Config("vif must be >= 1".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.min_success_fraction) {
            return Err(Error::Config("min_success_fraction must be in [0,1]".into()));
        }
        if let Some(cv) = &self.cv {
            cv.validate()?;
        }
        Ok(())
    }
}

/// One evaluated prediction direction of one repetition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionRecord {
    pub seed_index: usize,
    pub stratum: String,
    pub train_context: Context,
    pub test_context: Context,
    pub accuracy: f64,
    /// Standard error without any VIF scaling.
    pub se_raw: f64,
    pub n_test: usize,
}

impl DirectionRecord {
    pub fn is_same_context(&self) -> bool {
        self.train_context == self.test_context
    }
}

/// Derived seeds used by one repetition, kept for forensic re-runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepetitionSeeds {
    pub index: usize,
    pub partition_task: u64,
    pub partition_fr: u64,
    pub match_train: u64,
    pub match_test: u64,
    pub cv: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed_index: usize,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumSummary {
    pub stratum: String,
    /// Seed-averaged symmetric decoding divergence.
    pub delta: f64,
    /// Seed-averaged conservative sigma, scaled by the primary VIF.
    pub sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub schema_version: u32,
    pub decoder: DecoderKind,
    pub lag: usize,
    pub n_seeds_requested: usize,
    pub n_seeds_succeeded: usize,
    pub seed_failures: Vec<SeedFailure>,
    pub acc_same_bar: f64,
    pub acc_cross_bar: f64,
    pub se_same_bar: f64,
    pub se_cross_bar: f64,
    pub strata: Vec<StratumSummary>,
    /// Lower median of the in-context VIF estimates across seeds.
    pub est_vif: Option<usize>,
    pub vif_used: f64,
    /// Primary p-value under the configured VIF mode.
    pub p_value: f64,
    pub p_fixed_vif: f64,
    pub p_est_vif: Option<f64>,
    pub p_no_vif: f64,
    pub p_no_matching: Option<f64>,
    pub p_no_stratification: Option<f64>,
    pub repetition_seeds: Vec<RepetitionSeeds>,
}

pub fn load_report(path: &std::path::Path) -> Result<DivergenceReport> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::ModelIo(format!("parse report: {e}")))?;
    let version = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::ModelIo("report is missing schema_version".into()))?;
    if version != REPORT_SCHEMA_VERSION as u64 {
        return Err(Error::ModelIo(format!(
            "unsupported report schema version {version} (expected {REPORT_SCHEMA_VERSION})"
        )));
    }
    serde_json::from_value(value).map_err(|e| Error::ModelIo(format!("parse report: {e}")))
}

/// Tuning curves recovered from one fitted Poisson decoder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveSet {
    pub stratum: String,
    pub context: Context,
    /// Per neuron: one rate per location.
    pub curves: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutocovRecord {
    pub stratum: String,
    pub context: Context,
    pub lag: usize,
    pub gamma: f64,
}

/// Everything a full run produces: the summary report plus the per-seed
/// tables that back the CSV outputs.
#[derive(Debug, Clone)]
pub struct ContextTestOutput {
    pub report: DivergenceReport,
    pub per_direction: Vec<DirectionRecord>,
    pub tuning_curves: Vec<CurveSet>,
    pub autocov: Vec<AutocovRecord>,
}

struct StratumOutcome {
    stratum: String,
    delta: f64,
    sigma_raw: f64,
    directions: Vec<DirectionRecord>,
    in_context_khats: Vec<usize>,
    // (stratum, context, curve) from the Poisson decoders, first seed only.
    curves: Vec<CurveSet>,
    autocov: Vec<AutocovRecord>,
}

struct SeedOutcome {
    strata: Vec<StratumOutcome>,
    seeds: RepetitionSeeds,
}

fn strata_for(stratification: bool) -> Vec<Stratum> {
    if stratification {
        vec![
            Stratum::Direction(Direction::Forward),
            Stratum::Direction(Direction::Backward),
        ]
    } else {
        vec![Stratum::AnyMovement]
    }
}

/// Run one repetition: partition both contexts, match the splits across all
/// decoders, fit one decoder per (stratum, context) and evaluate the four
/// accuracies of each stratum.
#[allow(clippy::too_many_arguments)]
fn run_seed(
    ds: &SessionDataset,
    settings: &TestSettings,
    matching: bool,
    strata: &[Stratum],
    seed_index: usize,
    collect_curves: bool,
) -> Result<SeedOutcome> {
    let master = settings.master_seed;
    let idx = seed_index as u64;
    let partition_task = derive_seed(master, Stream::Partition, idx * 2);
    let partition_fr = derive_seed(master, Stream::Partition, idx * 2 + 1);
    let match_train_seed = derive_seed(master, Stream::MatchTrain, idx);
    let match_test_seed = derive_seed(master, Stream::MatchTest, idx);

    let part_task = partition_subdatasets(
        ds,
        Context::Task,
        SplitSpec::new(settings.p_alpha, partition_task)?,
    )?;
    let part_fr = partition_subdatasets(
        ds,
        Context::FreeRunning,
        SplitSpec::new(settings.p_alpha, partition_fr)?,
    )?;

    // Split order: strata outer, context inner (task first).
    let mut train_splits = Vec::new();
    let mut test_splits = Vec::new();
    for &stratum in strata {
        for context in Context::ALL {
            let part = match context {
                Context::Task => &part_task,
                Context::FreeRunning => &part_fr,
            };
            let rows = valid_window_rows(ds, settings.lag, stratum, context);
            let mut train = SplitRows::default();
            let mut test = SplitRows::default();
            for t in rows {
                let target = if part.is_alpha(ds.subdataset(t)) {
                    &mut train
                } else {
                    &mut test
                };
                target.rows.push(t);
                target.labels.push(ds.location(t));
            }
            if train.rows.is_empty() || test.rows.is_empty() {
                return Err(Error::Infeasible(format!(
                    "empty {} split for stratum {}, context {}",
                    if train.rows.is_empty() { "train" } else { "test" },
                    stratum.tag(),
                    context.tag()
                )));
            }
            train_splits.push(train);
            test_splits.push(test);
        }
    }

    let n_classes = ds.n_classes();
    let (train_rows, test_rows) = if matching {
        let tr = match_train(&train_splits, n_classes, match_train_seed)?;
        let (te, _m) = match_test(&test_splits, n_classes, match_test_seed)?;
        (tr, te)
    } else {
        (
            train_splits.iter().map(|s| s.rows.clone()).collect(),
            test_splits.iter().map(|s| s.rows.clone()).collect(),
        )
    };

    let mut outcomes = Vec::with_capacity(strata.len());
    let mut cv_seeds = Vec::new();
    for (k, &stratum) in strata.iter().enumerate() {
        let idx_task = 2 * k;
        let idx_fr = 2 * k + 1;
        let test_task = materialize_rows(ds, settings.lag, &test_rows[idx_task]);
        let test_fr = materialize_rows(ds, settings.lag, &test_rows[idx_fr]);

        let mut fit_one = |split_idx: usize| -> Result<TrainedDecoder> {
            let design = materialize_rows(ds, settings.lag, &train_rows[split_idx]);
            let hp = match &settings.cv {
                Some(cfg) => {
                    let seed =
                        derive_seed(master, Stream::CrossVal, idx * 16 + split_idx as u64);
                    cv_seeds.push(seed);
                    let mut cfg = cfg.clone();
                    cfg.seed = seed;
                    cross_validate(&design, &cfg, settings.decoder)?.chosen
                }
                None => settings.hyperparams,
            };
            fit_decoder(&design, settings.decoder, hp, settings.budget)
        };
        let model_task = fit_one(idx_task)?;
        let model_fr = fit_one(idx_fr)?;

        let acc_task = accuracy(&model_task, &test_task, 1.0)?;
        let acc_fr = accuracy(&model_fr, &test_fr, 1.0)?;
        let x_task_to_fr = accuracy(&model_task, &test_fr, 1.0)?;
        let x_fr_to_task = accuracy(&model_fr, &test_task, 1.0)?;

        let mut khats = Vec::new();
        for est in [&acc_task, &acc_fr] {
            if let Ok(v) = estimate_vif(&est.error_vector, settings.k_min) {
                if !v.degenerate {
                    khats.push(v.k_hat);
                }
            }
        }

        let (delta, sigma_raw) =
            symmetric_divergence(&acc_task, &acc_fr, &x_task_to_fr, &x_fr_to_task);

        let tag = stratum.tag().to_string();
        let mk = |train: Context, test: Context, est: &AccuracyEstimate| DirectionRecord {
            seed_index,
            stratum: tag.clone(),
            train_context: train,
            test_context: test,
            accuracy: est.value,
            se_raw: est.se,
            n_test: est.n_test,
        };
        let directions = vec![
            mk(Context::Task, Context::Task, &acc_task),
            mk(Context::FreeRunning, Context::FreeRunning, &acc_fr),
            mk(Context::Task, Context::FreeRunning, &x_task_to_fr),
            mk(Context::FreeRunning, Context::Task, &x_fr_to_task),
        ];

        let mut curves = Vec::new();
        let mut autocov = Vec::new();
        if collect_curves {
            for (context, model, est) in [
                (Context::Task, &model_task, &acc_task),
                (Context::FreeRunning, &model_fr, &acc_fr),
            ] {
                if let Some(p) = model.as_poisson() {
                    curves.push(CurveSet {
                        stratum: tag.clone(),
                        context,
                        curves: p.tuning_curves(),
                    });
                }
                if let Ok(v) = estimate_vif(&est.error_vector, settings.k_min) {
                    for (off, &g) in v.autocovariance.iter().enumerate() {
                        autocov.push(AutocovRecord {
                            stratum: tag.clone(),
                            context,
                            lag: v.k_min + off,
                            gamma: g,
                        });
                    }
                }
            }
        }

        outcomes.push(StratumOutcome {
            stratum: tag,
            delta,
            sigma_raw,
            directions,
            in_context_khats: khats,
            curves,
            autocov,
        });
    }

    Ok(SeedOutcome {
        strata: outcomes,
        seeds: RepetitionSeeds {
            index: seed_index,
            partition_task,
            partition_fr,
            match_train: match_train_seed,
            match_test: match_test_seed,
            cv: cv_seeds,
        },
    })
}

struct Aggregate {
    acc_same_bar: f64,
    acc_cross_bar: f64,
    se_same_bar: f64,
    se_cross_bar: f64,
    strata: Vec<(String, f64, f64)>, // tag, mean delta, mean sigma_raw
    est_vif: Option<usize>,
    per_direction: Vec<DirectionRecord>,
    tuning_curves: Vec<CurveSet>,
    autocov: Vec<AutocovRecord>,
    failures: Vec<SeedFailure>,
    n_succeeded: usize,
    repetition_seeds: Vec<RepetitionSeeds>,
}

fn lower_median(mut xs: Vec<usize>) -> Option<usize> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_unstable();
    Some(xs[(xs.len() - 1) / 2])
}

fn run_pipeline(
    ds: &SessionDataset,
    settings: &TestSettings,
    matching: bool,
    stratification: bool,
) -> Result<Aggregate> {
    let strata = strata_for(stratification);
    let results: Vec<(usize, Result<SeedOutcome>)> = (0..settings.n_seeds)
        .into_par_iter()
        .map(|s| {
            (
                s,
                run_seed(ds, settings, matching, &strata, s, s == 0),
            )
        })
        .collect();

    let mut failures = Vec::new();
    let mut outcomes = Vec::new();
    for (s, r) in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => failures.push(SeedFailure {
                seed_index: s,
                message: e.to_string(),
            }),
        }
    }
    let n_succeeded = outcomes.len();
    let min_needed = (settings.min_success_fraction * settings.n_seeds as f64).ceil() as usize;
    if n_succeeded < min_needed.max(1) {
        return Err(Error::TooManyFailures {
            succeeded: n_succeeded,
            requested: settings.n_seeds,
            min_fraction: settings.min_success_fraction,
        });
    }

    let mut same_acc = Vec::new();
    let mut same_se = Vec::new();
    let mut cross_acc = Vec::new();
    let mut cross_se = Vec::new();
    let mut khats = Vec::new();
    let mut per_direction = Vec::new();
    let mut tuning_curves = Vec::new();
    let mut autocov = Vec::new();
    let mut repetition_seeds = Vec::new();
    let mut stratum_sums: Vec<(String, f64, f64)> = strata
        .iter()
        .map(|s| (s.tag().to_string(), 0.0, 0.0))
        .collect();

    for o in &outcomes {
        for (k, so) in o.strata.iter().enumerate() {
            stratum_sums[k].1 += so.delta;
            stratum_sums[k].2 += so.sigma_raw;
            khats.extend_from_slice(&so.in_context_khats);
            for d in &so.directions {
                if d.is_same_context() {
                    same_acc.push(d.accuracy);
                    same_se.push(d.se_raw);
                } else {
                    cross_acc.push(d.accuracy);
                    cross_se.push(d.se_raw);
                }
                per_direction.push(d.clone());
            }
            tuning_curves.extend(so.curves.iter().cloned());
            autocov.extend(so.autocov.iter().cloned());
        }
        repetition_seeds.push(o.seeds.clone());
    }
    for sums in &mut stratum_sums {
        sums.1 /= n_succeeded as f64;
        sums.2 /= n_succeeded as f64;
    }

    Ok(Aggregate {
        acc_same_bar: crate::stats::mean(&same_acc),
        acc_cross_bar: crate::stats::mean(&cross_acc),
        se_same_bar: crate::stats::mean(&same_se),
        se_cross_bar: crate::stats::mean(&cross_se),
        strata: stratum_sums,
        est_vif: lower_median(khats),
        per_direction,
        tuning_curves,
        autocov,
        failures,
        n_succeeded,
        repetition_seeds,
    })
}

fn check_preconditions(ds: &SessionDataset, settings: &TestSettings) -> Result<()> {
    settings.validate()?;
    for context in Context::ALL {
        if !ds.has_context(context) {
            return Err(Error::Config(format!(
                "dataset has no {} data",
                context.tag()
            )));
        }
    }
    for stratum in strata_for(settings.stratification) {
        for context in Context::ALL {
            if valid_window_rows(ds, settings.lag, stratum, context).is_empty() {
                return Err(Error::Config(format!(
                    "no usable rows for stratum {}, context {} at lag {}",
                    stratum.tag(),
                    context.tag(),
                    settings.lag
                )));
            }
        }
    }
    Ok(())
}

/// The full context test: repeated partition/match/fit/evaluate across
/// seeds, aggregation per the seed-and-decoder averaging scheme, and the
/// requested ablation p-values.
pub fn run_context_test(ds: &SessionDataset, settings: &TestSettings) -> Result<ContextTestOutput> {
    check_preconditions(ds, settings)?;
    let main = run_pipeline(ds, settings, settings.matching, settings.stratification)?;

    let p_fixed = aggregated_p(
        main.acc_same_bar,
        main.acc_cross_bar,
        main.se_same_bar,
        main.se_cross_bar,
        settings.fixed_vif,
    )?;
    let p_no_vif = aggregated_p(
        main.acc_same_bar,
        main.acc_cross_bar,
        main.se_same_bar,
        main.se_cross_bar,
        1.0,
    )?;
    let p_est = match main.est_vif {
        Some(k) => Some(aggregated_p(
            main.acc_same_bar,
            main.acc_cross_bar,
            main.se_same_bar,
            main.se_cross_bar,
            k as f64,
        )?),
        None => None,
    };

    let (vif_used, p_value) = match settings.vif_mode {
        VifMode::Fixed { value } => (
            value,
            if (value - settings.fixed_vif).abs() < f64::EPSILON {
                p_fixed
            } else {
                aggregated_p(
                    main.acc_same_bar,
                    main.acc_cross_bar,
                    main.se_same_bar,
                    main.se_cross_bar,
                    value,
                )?
            },
        ),
        VifMode::Estimated => {
            let k = main.est_vif.ok_or_else(|| {
                Error::DegenerateVariance(
                    "estimated VIF unavailable: all error sequences degenerate".into(),
                )
            })?;
            (
                k as f64,
                p_est.expect("est_vif present implies p_est present"),
            )
        }
        VifMode::None => (1.0, p_no_vif),
    };

    // Ablation columns re-run the pipeline with one control removed.
    let p_no_matching = if settings.ablations.no_matching {
        let alt = run_pipeline(ds, settings, false, settings.stratification)?;
        Some(aggregated_p(
            alt.acc_same_bar,
            alt.acc_cross_bar,
            alt.se_same_bar,
            alt.se_cross_bar,
            vif_used,
        )?)
    } else {
        None
    };
    let p_no_stratification = if settings.ablations.no_stratification {
        let alt = run_pipeline(ds, settings, settings.matching, false)?;
        Some(aggregated_p(
            alt.acc_same_bar,
            alt.acc_cross_bar,
            alt.se_same_bar,
            alt.se_cross_bar,
            vif_used,
        )?)
    } else {
        None
    };

    let strata = main
        .strata
        .iter()
        .map(|(tag, delta, sigma_raw)| StratumSummary {
            stratum: tag.clone(),
            delta: *delta,
            sigma: sigma_raw * vif_used.sqrt(),
        })
        .collect();

    let report = DivergenceReport {
        schema_version: REPORT_SCHEMA_VERSION,
        decoder: settings.decoder,
        lag: settings.lag,
        n_seeds_requested: settings.n_seeds,
        n_seeds_succeeded: main.n_succeeded,
        seed_failures: main.failures,
        acc_same_bar: main.acc_same_bar,
        acc_cross_bar: main.acc_cross_bar,
        se_same_bar: main.se_same_bar,
        se_cross_bar: main.se_cross_bar,
        strata,
        est_vif: main.est_vif,
        vif_used,
        p_value,
        p_fixed_vif: p_fixed,
        p_est_vif: p_est,
        p_no_vif,
        p_no_matching,
        p_no_stratification,
        repetition_seeds: main.repetition_seeds,
    };

    Ok(ContextTestOutput {
        report,
        per_direction: main.per_direction,
        tuning_curves: main.tuning_curves,
        autocov: main.autocov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat(value: f64, se: f64) -> AccuracyEstimate {
        AccuracyEstimate {
            value,
            se,
            n_test: 100,
            error_vector: vec![],
        }
    }

    #[test]
    fn perfect_predictions_have_zero_se() {
        let est = accuracy_from_errors(vec![0; 40], 1.0).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.se, 0.0);
    }

    #[test]
    fn balanced_errors_match_closed_form() {
        let mut errors = vec![0u8; 50];
        errors.extend(vec![1u8; 50]);
        let est = accuracy_from_errors(errors.clone(), 1.0).unwrap();
        assert_relative_eq!(est.value, 0.5);
        let expect = 0.5 * (1.0 / 10.0) * (100.0f64 / 99.0).sqrt();
        assert_relative_eq!(est.se, expect, max_relative = 1e-12);
        assert!((est.se - 0.0503).abs() < 1e-4);

        let scaled = accuracy_from_errors(errors, 12.0).unwrap();
        assert_relative_eq!(scaled.se, expect * 12f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn empty_test_set_errors() {
        assert!(accuracy_from_errors(vec![], 1.0).is_err());
        assert!(accuracy_from_errors(vec![0], 0.5).is_err());
    }

    #[test]
    fn divergence_arithmetic() {
        let (d0, _) = symmetric_divergence(
            &flat(0.7, 0.0),
            &flat(0.7, 0.0),
            &flat(0.7, 0.0),
            &flat(0.7, 0.0),
        );
        assert_relative_eq!(d0, 0.0);
        let (d, s) = symmetric_divergence(
            &flat(0.75, 0.007),
            &flat(0.76, 0.007),
            &flat(0.60, 0.007),
            &flat(0.64, 0.007),
        );
        assert_relative_eq!(d, 0.135, max_relative = 1e-12);
        assert_relative_eq!(s, 0.014, max_relative = 1e-12);
    }

    #[test]
    fn combined_test_examples() {
        let r = combined_z_test(&[(0.0, 1.0)]).unwrap();
        assert_relative_eq!(r.p_one_sided, 0.5, max_relative = 1e-12);

        let r = combined_z_test(&[(0.1, 0.05), (0.2, 0.05)]).unwrap();
        assert_relative_eq!(r.z, 3.0, max_relative = 1e-12);
        assert_relative_eq!(r.p_one_sided, 1.349898031630095e-3, max_relative = 1e-9);

        let r = combined_z_test(&[(-0.1, 0.2)]).unwrap();
        assert!(r.p_one_sided > 0.5);

        assert!(combined_z_test(&[(0.1, 0.0), (0.0, 0.0)]).is_err());
        assert!(combined_z_test(&[]).is_err());
    }

    #[test]
    fn sigma_scaling_divides_z() {
        let base = combined_z_test(&[(0.1, 0.02), (0.05, 0.03)]).unwrap();
        let k = 3.5;
        let scaled = combined_z_test(&[(0.1, 0.02 * k), (0.05, 0.03 * k)]).unwrap();
        assert_relative_eq!(scaled.z, base.z / k, max_relative = 1e-12);
    }

    #[test]
    fn two_sided_variant_matches_theorem_form() {
        let r = combined_z_test(&[(0.1, 0.05)]).unwrap();
        assert_relative_eq!(
            r.p_two_sided,
            2.0 * normal_sf(r.z.abs()),
            max_relative = 1e-12
        );
    }

    #[test]
    fn aggregated_p_matches_published_arithmetic() {
        // Accuracy gap 0.15, raw sigma bars 0.007 each.
        let p12 = aggregated_p(0.75, 0.60, 0.007, 0.007, 12.0).unwrap();
        assert!(p12 > 5e-4 && p12 < 5e-3, "p12 = {p12}");
        let p1 = aggregated_p(0.75, 0.60, 0.007, 0.007, 1.0).unwrap();
        assert!(p1 < 1e-20, "p1 = {p1}");
    }

    #[test]
    fn report_schema_version_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        std::fs::write(&path, r#"{"schema_version": 99}"#).unwrap();
        let err = load_report(&path).unwrap_err();
        assert!(err.to_string().contains("schema version"));
    }
}
