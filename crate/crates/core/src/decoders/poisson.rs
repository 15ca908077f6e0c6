//! Poisson naive Bayes decoder with a conjugate Gamma prior.
//!
//! Rates are posterior means: for feature `i` and class `j`,
//! `rate = (prior_rate * prior_n + sum of class-j counts) / (prior_n + n_j)`.
//! Prediction maximizes the Poisson log-likelihood
//! `sum_i [-ln(x_i!) - rate_ij + x_i * ln(rate_ij)]` with ties going to the
//! smallest class id. A zero rate contributes `x * ln(1e-12)` rather than
//! negative infinity; the floor only enters through the logarithm.

use serde::{Deserialize, Serialize};

use crate::data::WindowedDesign;
use crate::error::{Error, Result};
use crate::stats::ln_factorial;

/// Smoothing floor applied inside the logarithm at prediction time.
pub const RATE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "PoissonNbData", into = "PoissonNbData")]
pub struct PoissonNb {
    rates: Vec<f64>, // feature-major: rates[i * n_classes + j]
    n_features: usize,
    n_classes: usize,
    prior_rate: f64,
    prior_n: f64,
    lag: usize,
    n_neurons: usize,
    // Derived, rebuilt on deserialization.
    ln_rates: Vec<f64>,
    rate_sums: Vec<f64>, // per class: sum_i rates[i][j]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PoissonNbData {
    rates: Vec<f64>,
    n_features: usize,
    n_classes: usize,
    prior_rate: f64,
    prior_n: f64,
    lag: usize,
    n_neurons: usize,
}

impl From<PoissonNbData> for PoissonNb {
    fn from(d: PoissonNbData) -> Self {
        PoissonNb::assemble(
            d.rates,
            d.n_features,
            d.n_classes,
            d.prior_rate,
            d.prior_n,
            d.lag,
            d.n_neurons,
        )
    }
}

impl From<PoissonNb> for PoissonNbData {
    fn from(m: PoissonNb) -> Self {
        PoissonNbData {
            rates: m.rates,
            n_features: m.n_features,
            n_classes: m.n_classes,
            prior_rate: m.prior_rate,
            prior_n: m.prior_n,
            lag: m.lag,
            n_neurons: m.n_neurons,
        }
    }
}

impl PoissonNb {
    fn assemble(
        rates: Vec<f64>,
        n_features: usize,
        n_classes: usize,
        prior_rate: f64,
        prior_n: f64,
        lag: usize,
        n_neurons: usize,
    ) -> Self {
        let ln_rates = rates.iter().map(|&r| r.max(RATE_FLOOR).ln()).collect();
        let mut rate_sums = vec![0.0; n_classes];
        for i in 0..n_features {
            for j in 0..n_classes {
                rate_sums[j] += rates[i * n_classes + j];
            }
        }
        PoissonNb {
            rates,
            n_features,
            n_classes,
            prior_rate,
            prior_n,
            lag,
            n_neurons,
            ln_rates,
            rate_sums,
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn n_neurons(&self) -> usize {
        self.n_neurons
    }

    pub fn prior(&self) -> (f64, f64) {
        (self.prior_rate, self.prior_n)
    }

    pub fn rate(&self, feature: usize, class: usize) -> f64 {
        self.rates[feature * self.n_classes + class]
    }

    /// Per-class Poisson log-likelihood of one feature row.
    pub fn log_likelihoods(&self, row: &[u32]) -> Vec<f64> {
        assert_eq!(row.len(), self.n_features, "row width mismatch");
        let base: f64 = row
            .iter()
            .filter(|&&x| x > 1)
            .map(|&x| -ln_factorial(x as u64))
            .sum();
        let mut scores: Vec<f64> = self.rate_sums.iter().map(|&s| base - s).collect();
        for (i, &x) in row.iter().enumerate() {
            if x == 0 {
                continue;
            }
            let ln_row = &self.ln_rates[i * self.n_classes..(i + 1) * self.n_classes];
            for (j, &lr) in ln_row.iter().enumerate() {
                scores[j] += x as f64 * lr;
            }
        }
        scores
    }

    /// The rate-linear part of the score, `sum_i x_i * ln(rate_ij)` per class.
    pub fn log_rate_term(&self, row: &[u32]) -> Vec<f64> {
        assert_eq!(row.len(), self.n_features);
        let mut out = vec![0.0; self.n_classes];
        for (i, &x) in row.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for j in 0..self.n_classes {
                out[j] += x as f64 * self.ln_rates[i * self.n_classes + j];
            }
        }
        out
    }

    pub fn predict_row(&self, row: &[u32]) -> u8 {
        let scores = self.log_likelihoods(row);
        argmax_first(&scores)
    }

    pub fn predict(&self, design: &WindowedDesign) -> Vec<u8> {
        (0..design.n_rows())
            .map(|r| self.predict_row(design.feature_row(r)))
            .collect()
    }

    /// Discretized tuning curves: the lag-0 rate block, one row of `n_c`
    /// rates per neuron.
    pub fn tuning_curves(&self) -> Vec<Vec<f64>> {
        (0..self.n_neurons)
            .map(|i| (0..self.n_classes).map(|j| self.rate(i, j)).collect())
            .collect()
    }
}

/// First index of the maximum, so ties resolve to the smallest class id.
pub(crate) fn argmax_first(scores: &[f64]) -> u8 {
    let mut best = 0usize;
    for j in 1..scores.len() {
        if scores[j] > scores[best] {
            best = j;
        }
    }
    best as u8
}

/// Fit the posterior-mean rate table.
pub fn fit_poisson(design: &WindowedDesign, prior_rate: f64, prior_n: f64) -> Result<PoissonNb> {
    if design.n_rows() == 0 {
        return Err(Error::EmptyDesign("poisson fit on empty design".into()));
    }
    if prior_rate < 0.0 || prior_n < 0.0 {
        return Err(Error::Config(
            "poisson prior parameters must be non-negative".into(),
        ));
    }
    let n_classes = design.n_classes();
    let n_features = design.n_features();
    let counts = design.class_counts();
    // With zero prior weight an absent class leaves the posterior undefined.
    if prior_n == 0.0 {
        if let Some(j) = counts.iter().position(|&c| c == 0) {
            return Err(Error::ClassAbsent {
                class: j,
                what: "poisson training design".into(),
            });
        }
    }
    let mut sums = vec![0.0f64; n_features * n_classes];
    for r in 0..design.n_rows() {
        let j = design.label(r) as usize;
        for (i, &x) in design.feature_row(r).iter().enumerate() {
            if x > 0 {
                sums[i * n_classes + j] += x as f64;
            }
        }
    }
    let mut rates = vec![0.0f64; n_features * n_classes];
    for i in 0..n_features {
        for j in 0..n_classes {
            rates[i * n_classes + j] = (prior_rate * prior_n + sums[i * n_classes + j])
                / (prior_n + counts[j] as f64);
        }
    }
    let n_neurons = n_features / (design.lag() + 1);
    Ok(PoissonNb::assemble(
        rates,
        n_features,
        n_classes,
        prior_rate,
        prior_n,
        design.lag(),
        n_neurons,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{materialize_rows, Context, Direction, SessionDataset};
    use approx::assert_relative_eq;

    /// Lag-0 design with the given single-feature observations per class.
    fn design_1f(obs: &[(u8, u32)], n_classes: usize) -> WindowedDesign {
        let t = obs.len();
        let ds = SessionDataset::new(
            (0..t as u64).collect(),
            vec![Context::Task; t],
            vec![0; t],
            obs.iter().map(|&(l, _)| l).collect(),
            vec![Direction::Forward; t],
            obs.iter().map(|&(_, x)| x).collect(),
            1,
            n_classes,
        )
        .unwrap();
        materialize_rows(&ds, 0, &(0..t).collect::<Vec<_>>())
    }

    #[test]
    fn zero_prior_weight_gives_sample_mean() {
        let d = design_1f(&[(0, 2), (0, 4), (1, 1)], 2);
        let m = fit_poisson(&d, 1.0, 0.0).unwrap();
        assert_relative_eq!(m.rate(0, 0), 3.0);
        assert_relative_eq!(m.rate(0, 1), 1.0);
    }

    #[test]
    fn posterior_mean_matches_hand_computation() {
        // prior_rate=1, prior_n=2, observations {3,5}: (1*2 + 8)/(2 + 2) = 2.5
        let d = design_1f(&[(0, 3), (0, 5), (1, 0)], 2);
        let m = fit_poisson(&d, 1.0, 2.0).unwrap();
        assert_relative_eq!(m.rate(0, 0), 2.5);
    }

    #[test]
    fn absent_class_with_prior_returns_prior() {
        let d = design_1f(&[(0, 3), (0, 5)], 2);
        let m = fit_poisson(&d, 1.5, 2.0).unwrap();
        assert_relative_eq!(m.rate(0, 1), 1.5);
    }

    #[test]
    fn absent_class_without_prior_is_an_error() {
        let d = design_1f(&[(0, 3), (0, 5)], 2);
        let err = fit_poisson(&d, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::ClassAbsent { class: 1, .. }));
    }

    #[test]
    fn log_likelihood_hand_case() {
        // Single feature, rates 1 and 3; X=0 scores are -1 and -3.
        let d = design_1f(&[(0, 1), (1, 3)], 2);
        let m = fit_poisson(&d, 0.0, 0.0).unwrap();
        let scores = m.log_likelihoods(&[0]);
        assert_relative_eq!(scores[0], -1.0);
        assert_relative_eq!(scores[1], -3.0);
        assert_eq!(m.predict_row(&[0]), 0);
    }

    #[test]
    fn ties_break_to_smallest_class() {
        let d = design_1f(&[(0, 2), (1, 2)], 2);
        let m = fit_poisson(&d, 0.0, 0.0).unwrap();
        assert_eq!(m.predict_row(&[7]), 0);
    }

    #[test]
    fn zero_rate_never_panics_and_loses() {
        // Class 1 never fires: rate 0 for it.
        let d = design_1f(&[(0, 4), (1, 0)], 2);
        let m = fit_poisson(&d, 0.0, 0.0).unwrap();
        assert_eq!(m.rate(0, 1), 0.0);
        let scores = m.log_likelihoods(&[3]);
        assert!(scores[1].is_finite());
        assert!(scores[1] < scores[0] - 50.0);
        assert_eq!(m.predict_row(&[3]), 0);
    }

    #[test]
    fn separable_toy_set_is_self_consistent() {
        // Class 0 fires ~0, class 1 fires ~6, class 2 fires ~12.
        let mut obs = Vec::new();
        for k in 0..30u32 {
            obs.push((0u8, k % 2));
            obs.push((1u8, 5 + (k % 3)));
            obs.push((2u8, 11 + (k % 3)));
        }
        let d = design_1f(&obs, 3);
        let m = fit_poisson(&d, 0.0, 0.0).unwrap();
        let preds = m.predict(&d);
        let correct = preds
            .iter()
            .zip(d.labels())
            .filter(|(p, l)| p == l)
            .count();
        assert_eq!(correct, d.n_rows());
    }

    #[test]
    fn estimator_interpolates_prior_and_mean() {
        let d = design_1f(&[(0, 2), (0, 4), (1, 1)], 2);
        // Monotone in the class sum for fixed counts.
        let lo = fit_poisson(&design_1f(&[(0, 1), (0, 1), (1, 1)], 2), 1.0, 1.0).unwrap();
        let hi = fit_poisson(&d, 1.0, 1.0).unwrap();
        assert!(hi.rate(0, 0) > lo.rate(0, 0));
        // Prior dominates as prior_n grows.
        let heavy = fit_poisson(&d, 7.5, 1e9).unwrap();
        assert_relative_eq!(heavy.rate(0, 0), 7.5, max_relative = 1e-6);
    }

    #[test]
    fn rate_linear_term_is_additive() {
        let mut obs = Vec::new();
        for k in 0..12u32 {
            obs.push(((k % 3) as u8, k % 5));
        }
        let d = design_1f(&obs, 3);
        let m = fit_poisson(&d, 0.5, 1.0).unwrap();
        let a = m.log_rate_term(&[3]);
        let b = m.log_rate_term(&[4]);
        let sum = m.log_rate_term(&[7]);
        for j in 0..3 {
            assert_relative_eq!(a[j] + b[j], sum[j], max_relative = 1e-12);
        }
    }

    #[test]
    fn json_round_trip_preserves_predictions() {
        let d = design_1f(&[(0, 2), (1, 5), (2, 9)], 3);
        let m = fit_poisson(&d, 0.5, 1.0).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: PoissonNb = serde_json::from_str(&json).unwrap();
        for x in 0..10u32 {
            assert_eq!(m.predict_row(&[x]), back.predict_row(&[x]));
        }
    }

    #[test]
    fn tuning_curves_equal_rate_rows_at_lag_zero() {
        let d = design_1f(&[(0, 2), (1, 5), (2, 9)], 3);
        let m = fit_poisson(&d, 0.0, 0.0).unwrap();
        let curves = m.tuning_curves();
        assert_eq!(curves.len(), 1);
        assert_eq!(curves[0], vec![2.0, 5.0, 9.0]);
    }
}
