//! Variance inflation from temporal dependence in prediction errors.
//!
//! The autocovariance of the binary error sequence is scanned upward from
//! `k_min`; the first lag with non-positive autocovariance is the estimated
//! VIF. The corrected standard error is the i.i.d. one scaled by sqrt(VIF).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VifEstimate {
    pub k_hat: usize,
    /// Autocovariance at lags `k_min ..= k_hat`, in order.
    pub autocovariance: Vec<f64>,
    pub k_min: usize,
    /// Set when no lag up to T-1 crossed zero and `k_hat` saturated at T-1.
    pub saturated: bool,
    /// Set for a constant error sequence, where dependence is unidentifiable.
    pub degenerate: bool,
}

/// Autocovariance of `errors` at lag `i` with the 1/(T-i) normalization.
fn autocov(errors: &[u8], mean: f64, lag: usize) -> f64 {
    let t = errors.len();
    debug_assert!(lag >= 1 && lag < t);
    let mut sum = 0.0;
    for s in 0..t - lag {
        sum += (errors[s + lag] as f64 - mean) * (errors[s] as f64 - mean);
    }
    sum / (t - lag) as f64
}

/// Estimate the VIF from a binary prediction-error sequence.
pub fn estimate_vif(errors: &[u8], k_min: usize) -> Result<VifEstimate> {
    if k_min < 1 {
        return Err(Error::Config("k_min must be at least 1".into()));
    }
    let t = errors.len();
    if t < k_min + 2 {
        return Err(Error::Config(format!(
            "error sequence of length {t} is too short for k_min {k_min}"
        )));
    }
    if let Some(&bad) = errors.iter().find(|&&e| e > 1) {
        return Err(Error::Config(format!(
            "error sequence must be binary, found {bad}"
        )));
    }
    let mean = errors.iter().map(|&e| e as f64).sum::<f64>() / t as f64;
    if mean == 0.0 || mean == 1.0 {
        return Ok(VifEstimate {
            k_hat: k_min,
            autocovariance: vec![0.0],
            k_min,
            saturated: false,
            degenerate: true,
        });
    }
    let mut curve = Vec::new();
    for i in k_min..t {
        let g = autocov(errors, mean, i);
        curve.push(g);
        if g <= 0.0 {
            return Ok(VifEstimate {
                k_hat: i,
                autocovariance: curve,
                k_min,
                saturated: false,
                degenerate: false,
            });
        }
    }
    Ok(VifEstimate {
        k_hat: t - 1,
        autocovariance: curve,
        k_min,
        saturated: true,
        degenerate: false,
    })
}

/// Scale an i.i.d. standard error by the estimated dependence range.
pub fn apply_vif(se: f64, k_hat: usize) -> f64 {
    se * (k_hat as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng as _;

    #[test]
    fn alternating_errors_have_k_hat_one() {
        let errors: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        let est = estimate_vif(&errors, 1).unwrap();
        assert_eq!(est.k_hat, 1);
        assert!(est.autocovariance[0] < 0.0);
        assert!(!est.saturated && !est.degenerate);
    }

    #[test]
    fn iid_errors_cross_zero_quickly() {
        let mut small = 0;
        let n_seeds = 40;
        for seed in 0..n_seeds {
            let mut rng = crate::rng::rng_from_seed(seed);
            let errors: Vec<u8> = (0..10_000).map(|_| rng.random_range(0..2u8)).collect();
            let est = estimate_vif(&errors, 1).unwrap();
            if est.k_hat <= 3 {
                small += 1;
            }
        }
        assert!(
            small as f64 >= 0.9 * n_seeds as f64,
            "k_hat small in only {small}/{n_seeds} seeds"
        );
    }

    #[test]
    fn block_dependence_is_detected() {
        let mut hits = 0;
        let n_seeds = 40;
        for seed in 0..n_seeds {
            let mut rng = crate::rng::rng_from_seed(1000 + seed);
            let mut errors = Vec::with_capacity(5000);
            for _ in 0..100 {
                let v = rng.random_range(0..2u8);
                errors.extend(std::iter::repeat(v).take(50));
            }
            let est = estimate_vif(&errors, 1).unwrap();
            if est.k_hat >= 40 {
                hits += 1;
            }
        }
        assert!(
            hits as f64 >= 0.9 * n_seeds as f64,
            "k_hat >= 40 in only {hits}/{n_seeds} seeds"
        );
    }

    #[test]
    fn constant_errors_are_degenerate() {
        let est = estimate_vif(&vec![0u8; 50], 3).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.k_hat, 3);
        let est = estimate_vif(&vec![1u8; 50], 1).unwrap();
        assert!(est.degenerate);
    }

    #[test]
    fn k_min_skips_early_lags() {
        // Strong negative lag-1 correlation, but k_min=2 ignores it.
        let errors: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
        let est = estimate_vif(&errors, 2).unwrap();
        assert!(est.k_hat >= 2);
    }

    #[test]
    fn short_sequences_are_rejected() {
        assert!(estimate_vif(&[0, 1], 1).is_err());
        assert!(estimate_vif(&[0, 1, 0, 1], 1).is_ok());
    }

    #[test]
    fn apply_vif_scales_by_sqrt() {
        assert_relative_eq!(apply_vif(0.01, 1), 0.01);
        assert_relative_eq!(apply_vif(0.01, 12), 0.01 * 12f64.sqrt());
        // 48 is in the range of the published per-session estimates.
        assert_relative_eq!(apply_vif(0.007, 48), 0.007 * 48f64.sqrt());
        assert!((apply_vif(0.007, 48) - 0.0485).abs() < 5e-4);
    }

    #[test]
    fn invariants_on_returned_curve() {
        let mut rng = crate::rng::rng_from_seed(9);
        let mut errors = Vec::new();
        for _ in 0..200 {
            let v = rng.random_range(0..2u8);
            errors.extend(std::iter::repeat(v).take(7));
        }
        let est = estimate_vif(&errors, 1).unwrap();
        let n = est.autocovariance.len();
        assert_eq!(est.k_min + n - 1, est.k_hat);
        assert!(est.autocovariance[n - 1] <= 0.0 || est.saturated);
        for &g in &est.autocovariance[..n - 1] {
            assert!(g > 0.0);
        }
    }

    #[test]
    fn block_upsampling_grows_k_hat() {
        let mut grew = 0;
        let trials = 30;
        for seed in 0..trials {
            let mut rng = crate::rng::rng_from_seed(77 + seed);
            let base: Vec<u8> = (0..600).map(|_| rng.random_range(0..2u8)).collect();
            let k = 5usize;
            let upsampled: Vec<u8> = base
                .iter()
                .flat_map(|&v| std::iter::repeat(v).take(k))
                .collect();
            let e1 = estimate_vif(&base, 1).unwrap();
            let e2 = estimate_vif(&upsampled, 1).unwrap();
            if e2.k_hat >= e1.k_hat {
                grew += 1;
            }
        }
        assert!(grew as f64 >= 0.9 * trials as f64, "{grew}/{trials}");
    }
}
