//! Univariate two-sample tests on per-neuron firing rates: pooled-variance
//! t-test, two-sample Kolmogorov-Smirnov with the asymptotic null, and the
//! chi-squared contingency test on spike-count histograms.

use crate::error::{Error, Result};
use crate::stats::{chi2_sf, kolmogorov_sf, mean, t_two_sided};

/// Equal-variance two-sample t-test. Zero pooled variance degenerates to
/// p=1 for equal means and p=0 otherwise.
pub fn t_test(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::Infeasible(
            "t-test needs at least two observations per sample".into(),
        ));
    }
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let (m1, m2) = (mean(x), mean(y));
    let ss1: f64 = x.iter().map(|v| (v - m1) * (v - m1)).sum();
    let ss2: f64 = y.iter().map(|v| (v - m2) * (v - m2)).sum();
    let df = n1 + n2 - 2.0;
    let pooled = (ss1 + ss2) / df;
    if pooled == 0.0 {
        return if m1 == m2 {
            Ok((0.0, 1.0))
        } else {
            let t = if m1 > m2 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
            Ok((t, 0.0))
        };
    }
    let t = (m1 - m2) / (pooled * (1.0 / n1 + 1.0 / n2)).sqrt();
    Ok((t, t_two_sided(t, df)))
}

/// Two-sample Kolmogorov-Smirnov test. The p-value uses the asymptotic
/// Kolmogorov distribution at `sqrt(n_eff) * D` with
/// `n_eff = n1*n2/(n1+n2)`.
pub fn ks_test(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Infeasible("ks test on empty sample".into()));
    }
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("NaN in ks input"));
    ys.sort_by(|a, b| a.partial_cmp(b).expect("NaN in ks input"));
    let (n1, n2) = (xs.len(), ys.len());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let v = xs[i].min(ys[j]);
        while i < n1 && xs[i] == v {
            i += 1;
        }
        while j < n2 && ys[j] == v {
            j += 1;
        }
        let gap = (i as f64 / n1 as f64 - j as f64 / n2 as f64).abs();
        if gap > d {
            d = gap;
        }
    }
    let n_eff = (n1 * n2) as f64 / (n1 + n2) as f64;
    Ok((d, kolmogorov_sf(n_eff.sqrt() * d)))
}

#[derive(Debug, Clone, Copy)]
pub struct Chi2Outcome {
    pub statistic: f64,
    pub p: f64,
    pub df: usize,
    /// Count-value columns dropped because both samples had zero frequency.
    pub dropped_columns: usize,
}

/// Pearson chi-squared test on the 2 x R table of spike-count frequencies,
/// R spanning 0..=max observed count. Empty columns are dropped with the
/// degrees of freedom adjusted accordingly.
pub fn chi2_test(x: &[u32], y: &[u32]) -> Result<Chi2Outcome> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Infeasible("chi-squared test on empty sample".into()));
    }
    let max = x.iter().chain(y.iter()).copied().max().unwrap() as usize;
    let r = max + 1;
    let mut top = vec![0usize; r];
    let mut bottom = vec![0usize; r];
    for &v in x {
        top[v as usize] += 1;
    }
    for &v in y {
        bottom[v as usize] += 1;
    }
    let kept: Vec<usize> = (0..r).filter(|&c| top[c] + bottom[c] > 0).collect();
    let dropped_columns = r - kept.len();
    if kept.len() < 2 {
        return Ok(Chi2Outcome {
            statistic: 0.0,
            p: 1.0,
            df: 0,
            dropped_columns,
        });
    }
    let row1: f64 = x.len() as f64;
    let row2: f64 = y.len() as f64;
    let total = row1 + row2;
    let mut stat = 0.0;
    for &c in &kept {
        let col = (top[c] + bottom[c]) as f64;
        for (obs, row_total) in [(top[c] as f64, row1), (bottom[c] as f64, row2)] {
            let expected = row_total * col / total;
            stat += (obs - expected) * (obs - expected) / expected;
        }
    }
    let df = kept.len() - 1;
    Ok(Chi2Outcome {
        statistic: stat,
        p: chi2_sf(stat, df as f64),
        df,
        dropped_columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn t_test_identical_samples() {
        let x = vec![1.0, 2.0, 3.0];
        let (t, p) = t_test(&x, &x).unwrap();
        assert_eq!(t, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn t_test_zero_variance_split() {
        let (_, p) = t_test(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(p, 0.0);
        let (t, p) = t_test(&[2.0, 2.0], &[2.0, 2.0]).unwrap();
        assert_eq!((t, p), (0.0, 1.0));
    }

    #[test]
    fn t_test_matches_scipy() {
        // scipy.stats.ttest_ind([1,2,3], [2,3,4], equal_var=True)
        let (t, p) = t_test(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert_relative_eq!(t, -1.224744871391589, max_relative = 1e-12);
        assert_relative_eq!(p, 0.2878641347266908, max_relative = 1e-10);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let x = vec![0.5, 1.0, 2.0];
        let (d, p) = ks_test(&x, &x).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);
        let (d, _) = ks_test(&[0.0, 1.0], &[5.0, 6.0]).unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn ks_enumerated_ecdf_case() {
        let (d, p) = ks_test(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_relative_eq!(d, 0.5);
        // Q(sqrt(2) * 0.5) from scipy.special.kolmogorov
        assert_relative_eq!(p, 0.6993741991310154, max_relative = 1e-7);
    }

    #[test]
    fn chi2_identical_histograms() {
        let x = vec![0u32, 0, 1, 1, 2];
        let out = chi2_test(&x, &x).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert_eq!(out.p, 1.0);
    }

    #[test]
    fn chi2_hand_case() {
        // Table [[10,20],[20,10]]: scipy.stats.chi2_contingency(correction=False)
        let mut x = vec![0u32; 10];
        x.extend(vec![1u32; 20]);
        let mut y = vec![0u32; 20];
        y.extend(vec![1u32; 10]);
        let out = chi2_test(&x, &y).unwrap();
        assert_relative_eq!(out.statistic, 20.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(out.p, 0.009823274507519235, max_relative = 1e-10);
        assert_eq!(out.df, 1);
    }

    #[test]
    fn chi2_empty_columns_are_dropped() {
        // Counts 0 and 9 only: columns 1..=8 are empty.
        let x = vec![0u32, 0, 9, 9];
        let y = vec![0u32, 9, 9, 9];
        let out = chi2_test(&x, &y).unwrap();
        assert_eq!(out.dropped_columns, 8);
        assert_eq!(out.df, 1);
    }

    #[test]
    fn chi2_separation_drives_p_down() {
        let n = 400;
        let x = vec![0u32; n];
        let y = vec![1u32; n];
        let out = chi2_test(&x, &y).unwrap();
        assert!(out.p < 1e-100, "p = {}", out.p);
    }
}
