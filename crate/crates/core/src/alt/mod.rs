//! Classical two-sample tests applied per stratum with Bonferroni
//! correction. Univariate kinds test every neuron in every stratum
//! (`n_tests = P * |C|`); multivariate kinds test the joint firing vector
//! per stratum (`n_tests = |C|`). The corrected p-value is
//! `n_tests * min(p)`, clamped to [0, 1].

pub mod multivariate;
pub mod univariate;

use serde::{Deserialize, Serialize};

use crate::data::{Context, Direction, SessionDataset};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Stream};

pub use multivariate::{
    dcorr_two_sample, hotelling_t2, mmd_two_sample, HotellingOutcome, MmdOutcome,
    TwoSampleOutcome,
};
pub use univariate::{chi2_test, ks_test, t_test, Chi2Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AltTestKind {
    T2,
    Ks,
    Chi2,
    Hotelling,
    Dcorr,
    Mmd,
}

impl AltTestKind {
    pub const ALL: [AltTestKind; 6] = [
        AltTestKind::T2,
        AltTestKind::Ks,
        AltTestKind::Chi2,
        AltTestKind::Hotelling,
        AltTestKind::Dcorr,
        AltTestKind::Mmd,
    ];

    pub fn parse(s: &str) -> Option<AltTestKind> {
        match s {
            "t2" => Some(AltTestKind::T2),
            "ks" => Some(AltTestKind::Ks),
            "chi2" => Some(AltTestKind::Chi2),
            "hotelling" => Some(AltTestKind::Hotelling),
            "dcorr" => Some(AltTestKind::Dcorr),
            "mmd" => Some(AltTestKind::Mmd),
            _ => None,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            AltTestKind::T2 => "t2",
            AltTestKind::Ks => "ks",
            AltTestKind::Chi2 => "chi2",
            AltTestKind::Hotelling => "hotelling",
            AltTestKind::Dcorr => "dcorr",
            AltTestKind::Mmd => "mmd",
        }
    }

    pub fn is_univariate(self) -> bool {
        matches!(self, AltTestKind::T2 | AltTestKind::Ks | AltTestKind::Chi2)
    }
}

/// How rows are stratified before testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrataDef {
    Location,
    LocationDirection,
}

impl StrataDef {
    pub fn parse(s: &str) -> Option<StrataDef> {
        match s {
            "location" => Some(StrataDef::Location),
            "location-direction" => Some(StrataDef::LocationDirection),
            _ => None,
        }
    }
}

/// One stratum's task-side and free-running-side samples (rows x neurons).
#[derive(Debug, Clone)]
pub struct StratumSample {
    pub key: String,
    pub location: u8,
    pub direction: Option<Direction>,
    pub task: Vec<Vec<f64>>,
    pub fr: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct StratifiedSamples {
    pub strata: Vec<StratumSample>,
}

/// Assign every moving timepoint to exactly one stratum. No-movement rows
/// are discarded like everywhere else in the pipeline.
pub fn stratify(ds: &SessionDataset, def: StrataDef) -> StratifiedSamples {
    let directions: Vec<Option<Direction>> = match def {
        StrataDef::Location => vec![None],
        StrataDef::LocationDirection => {
            vec![Some(Direction::Forward), Some(Direction::Backward)]
        }
    };
    let mut strata = Vec::new();
    for loc in 0..ds.n_classes() as u8 {
        for &dir in &directions {
            let key = match dir {
                None => format!("loc{loc}"),
                Some(d) => format!("loc{loc}-{}", d.tag()),
            };
            strata.push(StratumSample {
                key,
                location: loc,
                direction: dir,
                task: Vec::new(),
                fr: Vec::new(),
            });
        }
    }
    let n_dir = directions.len();
    for row in 0..ds.len() {
        let d = ds.direction(row);
        if d == Direction::NoMovement {
            continue;
        }
        let dir_idx = match def {
            StrataDef::Location => 0,
            StrataDef::LocationDirection => match d {
                Direction::Forward => 0,
                Direction::Backward => 1,
                Direction::NoMovement => unreachable!(),
            },
        };
        let idx = ds.location(row) as usize * n_dir + dir_idx;
        let counts: Vec<f64> = ds.spike_row(row).iter().map(|&v| v as f64).collect();
        match ds.context(row) {
            Context::Task => strata[idx].task.push(counts),
            Context::FreeRunning => strata[idx].fr.push(counts),
        }
    }
    StratifiedSamples { strata }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AltTestOptions {
    /// Permutation count for DCorr/MMD; None selects the chi-squared
    /// approximation.
    pub permutations: Option<usize>,
    /// Row cap per side for the O(n^2) tests; larger strata are subsampled
    /// with the seeded RNG.
    pub max_rows_per_side: usize,
    pub seed: u64,
}

impl Default for AltTestOptions {
    fn default() -> Self {
        AltTestOptions {
            permutations: None,
            max_rows_per_side: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitTestRecord {
    pub stratum: String,
    /// Neuron index for univariate tests, None for multivariate ones.
    pub neuron: Option<usize>,
    pub statistic: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AltTestResult {
    pub test: AltTestKind,
    pub strata_def: StrataDef,
    pub n_tests: usize,
    pub min_raw_p: f64,
    /// Bonferroni: `n_tests * min(p)`, clamped to [0, 1].
    pub corrected_p: f64,
    pub records: Vec<UnitTestRecord>,
    pub skipped_strata: Vec<String>,
}

fn subsample(
    rows: &[Vec<f64>],
    cap: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    if rows.len() <= cap {
        return rows.to_vec();
    }
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.shuffle(&mut crate::rng::rng_from_seed(seed));
    idx.truncate(cap);
    idx.sort_unstable();
    idx.into_iter().map(|i| rows[i].clone()).collect()
}

fn column(rows: &[Vec<f64>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i]).collect()
}

fn column_u32(rows: &[Vec<f64>], i: usize) -> Vec<u32> {
    rows.iter().map(|r| r[i] as u32).collect()
}

/// Run one alternative test over all strata and Bonferroni-combine.
pub fn run_alt_test(
    ds: &SessionDataset,
    kind: AltTestKind,
    def: StrataDef,
    options: AltTestOptions,
) -> Result<AltTestResult> {
    let stratified = stratify(ds, def);
    let p_neurons = ds.n_neurons();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (s_idx, stratum) in stratified.strata.iter().enumerate() {
        if stratum.task.is_empty() || stratum.fr.is_empty() {
            skipped.push(stratum.key.clone());
            continue;
        }
        if kind.is_univariate() {
            for i in 0..p_neurons {
                let (stat, p) = match kind {
                    AltTestKind::T2 => {
                        t_test(&column(&stratum.task, i), &column(&stratum.fr, i))?
                    }
                    AltTestKind::Ks => {
                        ks_test(&column(&stratum.task, i), &column(&stratum.fr, i))?
                    }
                    AltTestKind::Chi2 => {
                        let out =
                            chi2_test(&column_u32(&stratum.task, i), &column_u32(&stratum.fr, i))?;
                        (out.statistic, out.p)
                    }
                    _ => unreachable!(),
                };
                records.push(UnitTestRecord {
                    stratum: stratum.key.clone(),
                    neuron: Some(i),
                    statistic: stat,
                    p,
                });
            }
        } else {
            let seed = derive_seed(options.seed, Stream::AltTest, s_idx as u64);
            let perm = options.permutations.map(|n| (n, seed.wrapping_add(1)));
            let (stat, p) = match kind {
                AltTestKind::Hotelling => {
                    let out = hotelling_t2(&stratum.task, &stratum.fr)?;
                    (out.t2, out.p)
                }
                AltTestKind::Dcorr => {
                    let task = subsample(&stratum.task, options.max_rows_per_side, seed);
                    let fr =
                        subsample(&stratum.fr, options.max_rows_per_side, seed.wrapping_add(2));
                    let out = dcorr_two_sample(&task, &fr, perm)?;
                    (out.statistic, out.p)
                }
                AltTestKind::Mmd => {
                    let task = subsample(&stratum.task, options.max_rows_per_side, seed);
                    let fr =
                        subsample(&stratum.fr, options.max_rows_per_side, seed.wrapping_add(2));
                    let out = mmd_two_sample(&task, &fr, perm)?;
                    (out.statistic, out.p)
                }
                _ => unreachable!(),
            };
            records.push(UnitTestRecord {
                stratum: stratum.key.clone(),
                neuron: None,
                statistic: stat,
                p,
            });
        }
    }
    if records.is_empty() {
        return Err(Error::Infeasible(
            "every stratum was empty on one side".into(),
        ));
    }
    let n_tests = records.len();
    let min_raw_p = records.iter().map(|r| r.p).fold(f64::INFINITY, f64::min);
    Ok(AltTestResult {
        test: kind,
        strata_def: def,
        n_tests,
        min_raw_p,
        corrected_p: (n_tests as f64 * min_raw_p).clamp(0.0, 1.0),
        records,
        skipped_strata: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    /// Dataset whose task side fires ~Poisson(hi) and fr side ~Poisson(lo)
    /// for the first neuron; second neuron identical across contexts.
    fn two_context_dataset(shifted: bool, seed: u64) -> SessionDataset {
        let mut rng = crate::rng::rng_from_seed(seed);
        let per_ctx = 90usize;
        let mut times = Vec::new();
        let mut contexts = Vec::new();
        let mut subs = Vec::new();
        let mut locs = Vec::new();
        let mut dirs = Vec::new();
        let mut spikes = Vec::new();
        for (ctx_i, ctx) in Context::ALL.iter().enumerate() {
            for k in 0..per_ctx {
                times.push((ctx_i * per_ctx + k) as u64);
                contexts.push(*ctx);
                subs.push(ctx_i as u32);
                locs.push((k % 3) as u8);
                dirs.push(if k % 2 == 0 {
                    Direction::Forward
                } else {
                    Direction::Backward
                });
                let bump = if shifted && *ctx == Context::Task { 4 } else { 0 };
                spikes.push(rng.random_range(0..3u32) + bump);
                spikes.push(rng.random_range(0..3u32));
            }
        }
        SessionDataset::new(times, contexts, subs, locs, dirs, spikes, 2, 3).unwrap()
    }

    #[test]
    fn stratification_partitions_moving_rows() {
        let ds = two_context_dataset(false, 1);
        let s = stratify(&ds, StrataDef::LocationDirection);
        assert_eq!(s.strata.len(), 6);
        let total: usize = s
            .strata
            .iter()
            .map(|st| st.task.len() + st.fr.len())
            .sum();
        assert_eq!(total, ds.len());
    }

    #[test]
    fn single_stratum_single_neuron_has_no_correction() {
        // One location, one neuron: corrected p equals the raw p.
        let t = 40;
        let mut rng = crate::rng::rng_from_seed(2);
        let spikes: Vec<u32> = (0..t).map(|_| rng.random_range(0..4)).collect();
        let ds = SessionDataset::new(
            (0..t as u64).collect(),
            (0..t)
                .map(|i| if i < 20 { Context::Task } else { Context::FreeRunning })
                .collect(),
            (0..t).map(|i| (i / 20) as u32).collect(),
            vec![0; t as usize],
            vec![Direction::Forward; t as usize],
            spikes,
            1,
            1,
        )
        .unwrap();
        let out = run_alt_test(&ds, AltTestKind::Ks, StrataDef::Location, Default::default())
            .unwrap();
        assert_eq!(out.n_tests, 1);
        assert_eq!(out.corrected_p, out.min_raw_p.min(1.0));
    }

    #[test]
    fn shifted_context_rejects_across_kinds() {
        let ds = two_context_dataset(true, 3);
        for kind in AltTestKind::ALL {
            let out = run_alt_test(&ds, kind, StrataDef::Location, Default::default()).unwrap();
            assert!(
                out.corrected_p < 0.05,
                "{}: corrected p = {}",
                kind.tag(),
                out.corrected_p
            );
        }
    }

    #[test]
    fn univariate_test_count_is_neurons_times_strata() {
        let ds = two_context_dataset(false, 4);
        let out =
            run_alt_test(&ds, AltTestKind::T2, StrataDef::LocationDirection, Default::default())
                .unwrap();
        assert_eq!(out.n_tests, 2 * 6);
        let out =
            run_alt_test(&ds, AltTestKind::Hotelling, StrataDef::Location, Default::default())
                .unwrap();
        assert_eq!(out.n_tests, 3);
    }

    #[test]
    fn bonferroni_monotone_in_added_strata() {
        let ds = two_context_dataset(false, 5);
        let loc = run_alt_test(&ds, AltTestKind::Ks, StrataDef::Location, Default::default())
            .unwrap();
        let loc_dir = run_alt_test(
            &ds,
            AltTestKind::Ks,
            StrataDef::LocationDirection,
            Default::default(),
        )
        .unwrap();
        // Finer stratification cannot reduce the corrected p below
        // n_coarse * min_fine when the minimum does not move.
        assert!(loc_dir.n_tests > loc.n_tests);
        assert!(loc_dir.corrected_p >= loc_dir.min_raw_p);
        assert!(loc.corrected_p <= 1.0 && loc_dir.corrected_p <= 1.0);
    }

    #[test]
    fn raw_p_values_lie_in_unit_interval() {
        let ds = two_context_dataset(true, 6);
        for kind in AltTestKind::ALL {
            let out = run_alt_test(&ds, kind, StrataDef::LocationDirection, Default::default())
                .unwrap();
            for r in &out.records {
                assert!((0.0..=1.0).contains(&r.p), "{}: {}", kind.tag(), r.p);
            }
        }
    }
}
