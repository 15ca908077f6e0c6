//! Multivariate two-sample tests: Hotelling's T-squared on mean vectors, and
//! the unbiased distance-correlation and Gaussian-kernel MMD statistics
//! applied as two-sample tests by stacking both samples against a 0/1 group
//! indicator.
//!
//! DCorr/MMD p-values use the chi-squared approximation on the normalized
//! unbiased statistic (`n * stat + 1` against a 1-df chi-squared); a
//! permutation fallback is available and serves as the calibration oracle.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::stats::{chi2_sf, f_sf};

#[derive(Debug, Clone, Copy)]
pub struct HotellingOutcome {
    pub t2: f64,
    pub f: f64,
    pub p: f64,
    pub df1: usize,
    pub df2: usize,
    /// Set when the pooled covariance needed a diagonal ridge to invert.
    pub ridged: bool,
}

const RIDGE: f64 = 1e-8;

/// Cholesky factorization of a symmetric positive-definite matrix stored
/// row-major. Returns None when a pivot is non-positive.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}

fn column_means(rows: &[Vec<f64>], p: usize) -> Vec<f64> {
    let mut m = vec![0.0; p];
    for row in rows {
        for (mi, &v) in m.iter_mut().zip(row) {
            *mi += v;
        }
    }
    for mi in &mut m {
        *mi /= rows.len() as f64;
    }
    m
}

/// Mean-centered scatter matrix accumulated into `out` (p x p, row-major).
fn add_scatter(rows: &[Vec<f64>], means: &[f64], p: usize, out: &mut [f64]) {
    let mut centered = vec![0.0; p];
    for row in rows {
        for i in 0..p {
            centered[i] = row[i] - means[i];
        }
        for i in 0..p {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in 0..p {
                out[i * p + j] += ci * centered[j];
            }
        }
    }
}

/// Hotelling's T-squared with pooled mean-centered covariance; the
/// F-transform `(n - p - 1) / (p (n - 2)) * T2` is referred to
/// `F(p, n - p - 1)` where `n` is the combined sample size.
pub fn hotelling_t2(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<HotellingOutcome> {
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::Infeasible(
            "hotelling test needs at least two rows per sample".into(),
        ));
    }
    let p = x[0].len();
    let (t1, t2n) = (x.len() as f64, y.len() as f64);
    let n = t1 + t2n;
    if n - p as f64 - 1.0 < 1.0 {
        return Err(Error::Infeasible(format!(
            "hotelling test needs n1 + n2 - P - 1 >= 1 (n={n}, P={p})"
        )));
    }
    let mx = column_means(x, p);
    let my = column_means(y, p);
    let mut pooled = vec![0.0; p * p];
    add_scatter(x, &mx, p, &mut pooled);
    add_scatter(y, &my, p, &mut pooled);
    for v in &mut pooled {
        *v /= n - 2.0;
    }
    let diff: Vec<f64> = mx.iter().zip(&my).map(|(a, b)| a - b).collect();

    let (l, ridged) = match cholesky(&pooled, p) {
        Some(l) => (l, false),
        None => {
            for i in 0..p {
                pooled[i * p + i] += RIDGE;
            }
            let l = cholesky(&pooled, p).ok_or_else(|| {
                Error::DegenerateVariance("pooled covariance not invertible".into())
            })?;
            (l, true)
        }
    };
    let solved = cholesky_solve(&l, p, &diff);
    let quad: f64 = diff.iter().zip(&solved).map(|(a, b)| a * b).sum();
    let t2 = t1 * t2n / n * quad;
    let df1 = p;
    let df2 = (n - p as f64 - 1.0) as usize;
    let f = (n - p as f64 - 1.0) / (p as f64 * (n - 2.0)) * t2;
    Ok(HotellingOutcome {
        t2,
        f,
        p: f_sf(f, df1 as f64, df2 as f64),
        df1,
        df2,
        ridged,
    })
}

/// Euclidean distance matrix of stacked rows, flat n x n.
fn distance_matrix(rows: &[&[f64]]) -> Vec<f64> {
    let n = rows.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let dist: f64 = rows[i]
                .iter()
                .zip(rows[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d[i * n + j] = dist;
            d[j * n + i] = dist;
        }
    }
    d
}

/// U-centering for the unbiased distance covariance: off-diagonal entries
/// lose row means, column means (with the n-2 denominator) and gain back the
/// grand mean with the (n-1)(n-2) denominator; the diagonal is zeroed.
fn u_center(d: &[f64], n: usize) -> Vec<f64> {
    let mut row_sums = vec![0.0; n];
    let mut grand = 0.0;
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            s += d[i * n + j];
        }
        row_sums[i] = s;
        grand += s;
    }
    let mut out = vec![0.0; n * n];
    let c1 = 1.0 / (n as f64 - 2.0);
    let c2 = 1.0 / ((n as f64 - 1.0) * (n as f64 - 2.0));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            out[i * n + j] =
                d[i * n + j] - c1 * row_sums[i] - c1 * row_sums[j] + c2 * grand;
        }
    }
    out
}

/// Unbiased squared distance covariance from two u-centered matrices.
fn dcov_u(a: &[f64], b: &[f64], n: usize) -> f64 {
    let inner: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    inner / (n as f64 * (n as f64 - 3.0))
}

fn normalized_stat(a: &[f64], b: &[f64], n: usize) -> f64 {
    let vxy = dcov_u(a, b, n);
    let vxx = dcov_u(a, a, n);
    let vyy = dcov_u(b, b, n);
    if vxx <= 0.0 || vyy <= 0.0 {
        return 0.0;
    }
    vxy / (vxx * vyy).sqrt()
}

fn chi2_approx_p(stat: f64, n: usize) -> f64 {
    chi2_sf(n as f64 * stat + 1.0, 1.0)
}

#[derive(Debug, Clone, Copy)]
pub struct TwoSampleOutcome {
    pub statistic: f64,
    pub p: f64,
}

fn group_labels(n1: usize, n2: usize) -> Vec<f64> {
    let mut z = vec![0.0; n1];
    z.extend(vec![1.0; n2]);
    z
}

fn label_distance_matrix(z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] = (z[i] - z[j]).abs();
        }
    }
    d
}

/// Unbiased distance correlation between the stacked data and the group
/// indicator. With `permutations` set, the p-value comes from reshuffling
/// the indicator; otherwise from the chi-squared approximation.
pub fn dcorr_two_sample(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    permutations: Option<(usize, u64)>,
) -> Result<TwoSampleOutcome> {
    let n = x.len() + y.len();
    if n < 4 {
        return Err(Error::Infeasible(
            "distance correlation needs at least 4 combined rows".into(),
        ));
    }
    let rows: Vec<&[f64]> = x.iter().chain(y.iter()).map(|r| r.as_slice()).collect();
    let dw = distance_matrix(&rows);
    let aw = u_center(&dw, n);
    let labels = group_labels(x.len(), y.len());
    let stat_of = |z: &[f64]| -> f64 {
        let dz = label_distance_matrix(z);
        let bz = u_center(&dz, n);
        normalized_stat(&aw, &bz, n)
    };
    let stat = stat_of(&labels);
    let p = match permutations {
        None => chi2_approx_p(stat, n),
        Some((count, seed)) => permutation_p(stat, &labels, count, seed, stat_of),
    };
    Ok(TwoSampleOutcome { statistic: stat, p })
}

/// Permutation p-value with the +1/+1 correction.
fn permutation_p<F: Fn(&[f64]) -> f64>(
    observed: f64,
    labels: &[f64],
    count: usize,
    seed: u64,
    stat_of: F,
) -> f64 {
    let mut rng = rng_from_seed(seed);
    let mut permuted = labels.to_vec();
    let mut at_least = 0usize;
    for _ in 0..count {
        permuted.shuffle(&mut rng);
        if stat_of(&permuted) >= observed {
            at_least += 1;
        }
    }
    (at_least + 1) as f64 / (count + 1) as f64
}

#[derive(Debug, Clone, Copy)]
pub struct MmdOutcome {
    /// Unbiased squared MMD between the two samples.
    pub statistic: f64,
    pub p: f64,
    pub bandwidth: f64,
}

/// Median of the strictly-upper-triangle entries; 1.0 when all are zero.
fn median_bandwidth(d: &[f64], n: usize) -> f64 {
    let mut vals: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            vals.push(d[i * n + j]);
        }
    }
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = vals[(vals.len() - 1) / 2];
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn gaussian_kernel(d: &[f64], bandwidth: f64) -> Vec<f64> {
    let denom = 2.0 * bandwidth * bandwidth;
    d.iter().map(|&v| (-v * v / denom).exp()).collect()
}

/// Unbiased squared MMD with a median-heuristic Gaussian kernel. The
/// chi-squared p-value is computed on the kernel analogue of the normalized
/// unbiased statistic against the group indicator; the permutation option
/// reshuffles the indicator.
pub fn mmd_two_sample(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    permutations: Option<(usize, u64)>,
) -> Result<MmdOutcome> {
    let (n1, n2) = (x.len(), y.len());
    let n = n1 + n2;
    if n1 < 2 || n2 < 2 || n < 4 {
        return Err(Error::Infeasible(
            "mmd needs at least two rows per sample".into(),
        ));
    }
    let rows: Vec<&[f64]> = x.iter().chain(y.iter()).map(|r| r.as_slice()).collect();
    let dw = distance_matrix(&rows);
    let bandwidth = median_bandwidth(&dw, n);
    let kw = gaussian_kernel(&dw, bandwidth);

    // The three-term unbiased estimator, diagonals excluded.
    let mut within_x = 0.0;
    for i in 0..n1 {
        for j in 0..n1 {
            if i != j {
                within_x += kw[i * n + j];
            }
        }
    }
    let mut within_y = 0.0;
    for i in 0..n2 {
        for j in 0..n2 {
            if i != j {
                within_y += kw[(n1 + i) * n + (n1 + j)];
            }
        }
    }
    let mut cross = 0.0;
    for i in 0..n1 {
        for j in 0..n2 {
            cross += kw[i * n + (n1 + j)];
        }
    }
    let statistic = within_x / (n1 as f64 * (n1 as f64 - 1.0))
        + within_y / (n2 as f64 * (n2 as f64 - 1.0))
        - 2.0 * cross / (n1 as f64 * n2 as f64);

    // Calibration statistic: u-centered kernel correlation with the labels.
    let ak = u_center(&kw, n);
    let labels = group_labels(n1, n2);
    let stat_of = |z: &[f64]| -> f64 {
        let dz = label_distance_matrix(z);
        let bw = median_bandwidth(&dz, n);
        let kz = gaussian_kernel(&dz, bw);
        let bk = u_center(&kz, n);
        normalized_stat(&ak, &bk, n)
    };
    let p = match permutations {
        None => chi2_approx_p(stat_of(&labels), n),
        Some((count, seed)) => {
            permutation_p(stat_of(&labels), &labels, count, seed, stat_of)
        }
    };
    Ok(MmdOutcome {
        statistic,
        p,
        bandwidth,
    })
}
