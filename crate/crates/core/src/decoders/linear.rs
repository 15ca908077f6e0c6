//! Multinomial logistic regression and one-vs-rest linear SVM with squared
//! hinge loss, both L2-regularized and trained by full-batch gradient descent
//! with backtracking line search. Deterministic by construction: no
//! stochastic minibatching, weights start at zero.
//!
//! The objective is `mean loss + ||W||^2 / (2 C n)` with the bias column left
//! unpenalized, so `C` acts as an inverse regularization strength.

use serde::{Deserialize, Serialize};

use crate::data::WindowedDesign;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Logistic,
    Svm,
}

/// Iteration cap and gradient-norm tolerance for the optimizer.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OptimBudget {
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for OptimBudget {
    fn default() -> Self {
        OptimBudget {
            max_iter: 5000,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    /// n_classes x (n_features + 1), bias last.
    pub weights: Vec<f64>,
    pub n_features: usize,
    pub n_classes: usize,
    pub kind: LinearKind,
    pub inverse_reg: f64,
    /// False when the iteration cap was hit before the gradient tolerance.
    pub converged: bool,
    pub lag: usize,
    pub n_neurons: usize,
}

impl LinearModel {
    fn scores(&self, row: &[u32], out: &mut [f64]) {
        let d = self.n_features + 1;
        for (c, s) in out.iter_mut().enumerate() {
            let w = &self.weights[c * d..(c + 1) * d];
            let mut z = w[self.n_features]; // bias
            for (i, &x) in row.iter().enumerate() {
                if x > 0 {
                    z += w[i] * x as f64;
                }
            }
            *s = z;
        }
    }

    pub fn predict_row(&self, row: &[u32]) -> u8 {
        assert_eq!(row.len(), self.n_features, "row width mismatch");
        let mut scores = vec![0.0; self.n_classes];
        self.scores(row, &mut scores);
        super::poisson::argmax_first(&scores)
    }

    pub fn predict(&self, design: &WindowedDesign) -> Vec<u8> {
        (0..design.n_rows())
            .map(|r| self.predict_row(design.feature_row(r)))
            .collect()
    }
}

/// A dense training problem: features with a trailing bias column.
pub struct LinearProblem {
    x: Vec<f64>, // n x (d+1), last column 1.0
    y: Vec<u8>,
    n: usize,
    d: usize, // feature count, excluding bias
    n_classes: usize,
    kind: LinearKind,
    inverse_reg: f64,
}

impl LinearProblem {
    pub fn from_design(design: &WindowedDesign, kind: LinearKind, inverse_reg: f64) -> Self {
        let n = design.n_rows();
        let d = design.n_features();
        let mut x = Vec::with_capacity(n * (d + 1));
        for r in 0..n {
            x.extend(design.feature_row(r).iter().map(|&v| v as f64));
            x.push(1.0);
        }
        LinearProblem {
            x,
            y: design.labels().to_vec(),
            n,
            d,
            n_classes: design.n_classes(),
            kind,
            inverse_reg,
        }
    }

    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        y: Vec<u8>,
        n_classes: usize,
        kind: LinearKind,
        inverse_reg: f64,
    ) -> Self {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.len());
        let mut x = Vec::with_capacity(n * (d + 1));
        for r in rows {
            debug_assert_eq!(r.len(), d);
            x.extend_from_slice(&r);
            x.push(1.0);
        }
        LinearProblem {
            x,
            y,
            n,
            d,
            n_classes,
            kind,
            inverse_reg,
        }
    }

    pub fn n_weights(&self) -> usize {
        self.n_classes * (self.d + 1)
    }

    fn penalty(&self, w: &[f64]) -> f64 {
        let scale = 1.0 / (2.0 * self.inverse_reg * self.n as f64);
        let mut sum = 0.0;
        for c in 0..self.n_classes {
            for i in 0..self.d {
                let v = w[c * (self.d + 1) + i];
                sum += v * v;
            }
        }
        scale * sum
    }

    fn add_penalty_grad(&self, w: &[f64], grad: &mut [f64]) {
        let scale = 1.0 / (self.inverse_reg * self.n as f64);
        for c in 0..self.n_classes {
            for i in 0..self.d {
                grad[c * (self.d + 1) + i] += scale * w[c * (self.d + 1) + i];
            }
        }
    }

    fn row_scores(&self, w: &[f64], t: usize, out: &mut [f64]) {
        let stride = self.d + 1;
        let xt = &self.x[t * stride..(t + 1) * stride];
        for (c, s) in out.iter_mut().enumerate() {
            let wc = &w[c * stride..(c + 1) * stride];
            *s = wc.iter().zip(xt).map(|(a, b)| a * b).sum();
        }
    }

    /// Objective value only.
    pub fn value(&self, w: &[f64]) -> f64 {
        self.eval(w, None)
    }

    /// Objective value and gradient.
    pub fn value_grad(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.n_weights()];
        let v = self.eval(w, Some(&mut grad));
        (v, grad)
    }

    fn eval(&self, w: &[f64], mut grad: Option<&mut Vec<f64>>) -> f64 {
        let stride = self.d + 1;
        let inv_n = 1.0 / self.n as f64;
        let mut scores = vec![0.0; self.n_classes];
        let mut loss = 0.0;
        for t in 0..self.n {
            self.row_scores(w, t, &mut scores);
            let xt = &self.x[t * stride..(t + 1) * stride];
            let yt = self.y[t] as usize;
            match self.kind {
                LinearKind::Logistic => {
                    let zmax = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum_exp: f64 = scores.iter().map(|&z| (z - zmax).exp()).sum();
                    let lse = zmax + sum_exp.ln();
                    loss += (lse - scores[yt]) * inv_n;
                    if let Some(g) = grad.as_deref_mut() {
                        for c in 0..self.n_classes {
                            let p = (scores[c] - zmax).exp() / sum_exp;
                            let coef = (p - if c == yt { 1.0 } else { 0.0 }) * inv_n;
                            if coef != 0.0 {
                                let gc = &mut g[c * stride..(c + 1) * stride];
                                for (gi, &xi) in gc.iter_mut().zip(xt) {
                                    *gi += coef * xi;
                                }
                            }
                        }
                    }
                }
                LinearKind::Svm => {
                    for c in 0..self.n_classes {
                        let s = if c == yt { 1.0 } else { -1.0 };
                        let margin = 1.0 - s * scores[c];
                        if margin > 0.0 {
                            loss += margin * margin * inv_n;
                            if let Some(g) = grad.as_deref_mut() {
                                let coef = -2.0 * s * margin * inv_n;
                                let gc = &mut g[c * stride..(c + 1) * stride];
                                for (gi, &xi) in gc.iter_mut().zip(xt) {
                                    *gi += coef * xi;
                                }
                            }
                        }
                    }
                }
            }
        }
        loss += self.penalty(w);
        if let Some(g) = grad.as_deref_mut() {
            self.add_penalty_grad(w, g);
        }
        loss
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Full-batch gradient descent with Armijo backtracking from an adaptive
/// initial step. Returns the weights and whether the tolerance was reached.
fn minimize(problem: &LinearProblem, budget: OptimBudget) -> (Vec<f64>, bool) {
    let mut w = vec![0.0; problem.n_weights()];
    let (mut fval, mut grad) = problem.value_grad(&w);
    let mut step = 1.0f64;
    for _ in 0..budget.max_iter {
        let gnorm = norm2(&grad);
        if gnorm <= budget.grad_tol {
            return (w, true);
        }
        step = (step * 2.0).min(1e8);
        let gsq = gnorm * gnorm;
        let mut trial = vec![0.0; w.len()];
        loop {
            for (i, t) in trial.iter_mut().enumerate() {
                *t = w[i] - step * grad[i];
            }
            let ftrial = problem.value(&trial);
            if ftrial <= fval - 1e-4 * step * gsq {
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                // Line search stalled at numerical precision.
                return (w, norm2(&grad) <= budget.grad_tol);
            }
        }
        std::mem::swap(&mut w, &mut trial);
        let (f_new, g_new) = problem.value_grad(&w);
        fval = f_new;
        grad = g_new;
    }
    (w, norm2(&grad) <= budget.grad_tol)
}

/// Fit a linear decoder. Non-convergence sets a flag on the model rather
/// than failing.
pub fn fit_linear(
    design: &WindowedDesign,
    kind: LinearKind,
    inverse_reg: f64,
    budget: OptimBudget,
) -> Result<LinearModel> {
    if inverse_reg <= 0.0 {
        return Err(Error::Config(format!(
            "inverse regularization strength must be positive, got {inverse_reg}"
        )));
    }
    let counts = design.class_counts();
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::Infeasible(
            "linear fit needs at least two classes present".into(),
        ));
    }
    let problem = LinearProblem::from_design(design, kind, inverse_reg);
    let (weights, converged) = minimize(&problem, budget);
    Ok(LinearModel {
        weights,
        n_features: design.n_features(),
        n_classes: design.n_classes(),
        kind,
        inverse_reg,
        converged,
        lag: design.lag(),
        n_neurons: design.n_features() / (design.lag() + 1),
    })
}
