//! Monte Carlo sweeps over the generative model: type I error on null
//! datasets (no context-dependent neurons) and power over a grid of
//! context-dependent shares, for the cross-accuracy test and the
//! alternative two-sample tests.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alt::{run_alt_test, AltTestKind, AltTestOptions, StrataDef};
use crate::divergence::{run_context_test, TestSettings};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Stream};
use crate::sim::{generate, SimSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_both_grid: Vec<usize>,
    pub scales: Vec<f64>,
    /// Outer Monte Carlo seeds per grid cell.
    pub n_seeds: usize,
    pub master_seed: u64,
    /// Rejection threshold.
    pub alpha: f64,
    /// Template simulation parameters; neuron counts, scale and seed are
    /// overwritten per cell.
    pub base_sim: SimSpec,
    /// Template divergence-test settings; the master seed is overwritten
    /// per run. `n_seeds` inside acts as the inner repetition count.
    pub test: TestSettings,
    pub alt_tests: Vec<AltTestKind>,
    pub alt_options: AltTestOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerConfig {
    /// Location-sensitive neurons in total: n_both + n_context.
    pub n_signal: usize,
    /// Total neurons; the remainder beyond the signal fires uniformly.
    pub n_total: usize,
    /// Context-dependent counts to visit (even numbers).
    pub n_context_grid: Vec<usize>,
    pub scales: Vec<f64>,
    pub n_seeds: usize,
    pub master_seed: u64,
    pub alpha: f64,
    pub base_sim: SimSpec,
    pub test: TestSettings,
    pub alt_tests: Vec<AltTestKind>,
    pub alt_options: AltTestOptions,
}

/// Rejection counts for one test at one grid cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateRow {
    pub scale: f64,
    pub n_random: usize,
    pub n_both: usize,
    pub n_context: usize,
    pub test: String,
    pub rejections: usize,
    pub n_success: usize,
    pub n_failures: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    scale: f64,
    n_random: usize,
    n_both: usize,
    n_context: usize,
    index: usize,
}

/// Test names evaluated per seed, in emission order.
fn test_names(cfg_test: &TestSettings, alt: &[AltTestKind]) -> Vec<String> {
    let mut names = vec![
        format!("xacc_{}_fixed_vif", cfg_test.decoder.tag()),
        format!("xacc_{}_est_vif", cfg_test.decoder.tag()),
    ];
    names.extend(alt.iter().map(|k| format!("alt_{}", k.tag())));
    names
}

/// Run every configured test on one simulated dataset. Returns one
/// rejection flag per test name; None marks a failed run.
#[allow(clippy::too_many_arguments)]
fn run_one(
    cell: &Cell,
    seed_idx: usize,
    master_seed: u64,
    base_sim: &SimSpec,
    test: &TestSettings,
    alt_tests: &[AltTestKind],
    alt_options: &AltTestOptions,
    alpha: f64,
) -> Result<Vec<bool>> {
    let task_id = (cell.index * 1_000_003 + seed_idx) as u64;
    let sim_seed = derive_seed(master_seed, Stream::Sweep, task_id * 2);
    let test_seed = derive_seed(master_seed, Stream::Sweep, task_id * 2 + 1);
    let spec = SimSpec {
        n_random: cell.n_random,
        n_both: cell.n_both,
        n_context: cell.n_context,
        scale: cell.scale,
        seed: sim_seed,
        ..base_sim.clone()
    };
    let (ds, _) = generate(&spec)?;

    let mut settings = test.clone();
    settings.master_seed = test_seed;
    let out = run_context_test(&ds, &settings)?;
    let mut rejections = vec![
        out.report.p_fixed_vif <= alpha,
        // An unavailable estimate counts as no rejection.
        out.report.p_est_vif.map_or(false, |p| p <= alpha),
    ];
    for kind in alt_tests {
        let mut options = *alt_options;
        options.seed = derive_seed(test_seed, Stream::AltTest, 0);
        let result = run_alt_test(&ds, *kind, StrataDef::Location, options)?;
        rejections.push(result.corrected_p <= alpha);
    }
    Ok(rejections)
}

#[allow(clippy::too_many_arguments)]
fn sweep_cells(
    cells: &[Cell],
    n_seeds: usize,
    master_seed: u64,
    base_sim: &SimSpec,
    test: &TestSettings,
    alt_tests: &[AltTestKind],
    alt_options: &AltTestOptions,
    alpha: f64,
) -> Result<Vec<RateRow>> {
    if n_seeds == 0 {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let names = test_names(test, alt_tests);
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..n_seeds).map(move |s| (c, s)))
        .collect();
    let outcomes: Vec<(usize, Option<Vec<bool>>)> = tasks
        .par_iter()
        .map(|&(c, s)| {
            let r = run_one(
                &cells[c],
                s,
                master_seed,
                base_sim,
                test,
                alt_tests,
                alt_options,
                alpha,
            );
            (c, r.ok())
        })
        .collect();

    let mut rows = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        let mut rejections = vec![0usize; names.len()];
        let mut successes = 0usize;
        let mut failures = 0usize;
        for (ci, outcome) in &outcomes {
            if *ci != c {
                continue;
            }
            match outcome {
                Some(flags) => {
                    successes += 1;
                    for (k, &f) in flags.iter().enumerate() {
                        if f {
                            rejections[k] += 1;
                        }
                    }
                }
                None => failures += 1,
            }
        }
        for (k, name) in names.iter().enumerate() {
            rows.push(RateRow {
                scale: cell.scale,
                n_random: cell.n_random,
                n_both: cell.n_both,
                n_context: cell.n_context,
                test: name.clone(),
                rejections: rejections[k],
                n_success: successes,
                n_failures: failures,
                rate: if successes > 0 {
                    rejections[k] as f64 / successes as f64
                } else {
                    f64::NAN
                },
            });
        }
    }
    Ok(rows)
}

/// Null sweep: no context-dependent neurons anywhere, so every rejection is
/// a type I error.
pub fn sweep_type1(cfg: &SweepConfig) -> Result<Vec<RateRow>> {
    let mut cells = Vec::new();
    for (si, &scale) in cfg.scales.iter().enumerate() {
        for (ni, &n_both) in cfg.n_both_grid.iter().enumerate() {
            cells.push(Cell {
                scale,
                n_random: 0,
                n_both,
                n_context: 0,
                index: si * cfg.n_both_grid.len() + ni,
            });
        }
    }
    sweep_cells(
        &cells,
        cfg.n_seeds,
        cfg.master_seed,
        &cfg.base_sim,
        &cfg.test,
        &cfg.alt_tests,
        &cfg.alt_options,
        cfg.alpha,
    )
}

/// Power sweep: total neuron count fixed, the location-sensitive share is
/// split between shared and context-dependent cells.
pub fn sweep_power(cfg: &PowerConfig) -> Result<Vec<RateRow>> {
    if cfg.n_signal > cfg.n_total {
        return Err(Error::Config("n_signal exceeds n_total".into()));
    }
    let mut cells = Vec::new();
    for (si, &scale) in cfg.scales.iter().enumerate() {
        for (ci, &n_context) in cfg.n_context_grid.iter().enumerate() {
            if n_context > cfg.n_signal {
                return Err(Error::Config(format!(
                    "n_context {n_context} exceeds n_signal {}",
                    cfg.n_signal
                )));
            }
            cells.push(Cell {
                scale,
                n_random: cfg.n_total - cfg.n_signal,
                n_both: cfg.n_signal - n_context,
                n_context,
                index: si * cfg.n_context_grid.len() + ci,
            });
        }
    }
    sweep_cells(
        &cells,
        cfg.n_seeds,
        cfg.master_seed,
        &cfg.base_sim,
        &cfg.test,
        &cfg.alt_tests,
        &cfg.alt_options,
        cfg.alpha,
    )
}
