//! Forward/backward/no-movement labeling of 1-D trajectories.
//!
//! The trajectory is smoothed with a Savitzky-Golay filter (least-squares
//! local polynomial fits, truncated windows at the ends), thresholded on the
//! discrete first derivative, segmented at the smoothed curve's prominent
//! peaks and troughs, and each segment is relabeled as a whole: lightly mixed
//! segments take the majority label, heavily mixed ones the sign of the
//! segment's mean velocity.
//!
//! The default velocity threshold of 0.1 units/timepoint is tied to the
//! location units of the original recordings; rescale it (and the peak
//! prominence) when the trajectory lives in a different coordinate system.

use serde::{Deserialize, Serialize};

use crate::data::Direction;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LabelerConfig {
    pub sg_window: usize,
    pub sg_order: usize,
    pub velocity_threshold: f64,
    pub peak_prominence: f64,
    pub mixing_ratio_cutoff: f64,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        LabelerConfig {
            sg_window: 251,
            sg_order: 2,
            velocity_threshold: 0.1,
            peak_prominence: 1.0,
            mixing_ratio_cutoff: 0.5,
        }
    }
}

impl LabelerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sg_window % 2 == 0 || self.sg_window <= self.sg_order {
            return Err(Error::Config(format!(
                "sg_window must be odd and larger than sg_order (window {}, order {})",
                self.sg_window, self.sg_order
            )));
        }
        if self.velocity_threshold <= 0.0 {
            return Err(Error::Config("velocity_threshold must be positive".into()));
        }
        Ok(())
    }
}

/// Solve a small dense system by Gaussian elimination with partial pivoting.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>> {
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[pivot * n + col].abs() {
                pivot = r;
            }
        }
        if a[pivot * n + col].abs() < 1e-300 {
            return Err(Error::Config("singular polynomial fit".into()));
        }
        if pivot != col {
            for c in 0..n {
                a.swap(col * n + c, pivot * n + c);
            }
            b.swap(col, pivot);
        }
        for r in col + 1..n {
            let factor = a[r * n + col] / a[col * n + col];
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= factor * a[col * n + c];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut sum = b[r];
        for c in r + 1..n {
            sum -= a[r * n + c] * x[c];
        }
        x[r] = sum / a[r * n + r];
    }
    Ok(x)
}

/// Least-squares polynomial estimate of the value at offset 0 from samples
/// at the given offsets. Returns the weight applied to each sample.
fn polyfit_weights(offsets: &[i64], order: usize) -> Result<Vec<f64>> {
    let k = order + 1;
    // Normal equations: (X^T X) c = X^T e_value; smoothing weight for sample
    // r is the first row of (X^T X)^{-1} X^T evaluated at offset 0.
    let mut xtx = vec![0.0; k * k];
    for &o in offsets {
        let mut pow = vec![1.0; k];
        for c in 1..k {
            pow[c] = pow[c - 1] * o as f64;
        }
        for i in 0..k {
            for j in 0..k {
                xtx[i * k + j] += pow[i] * pow[j];
            }
        }
    }
    // Solve (X^T X) c = e_0; the fitted value at offset 0 is c . (X^T y),
    // i.e. weight_r = sum_i c_i * offset_r^i ... with the roles swapped the
    // weight for sample r is (solution of XtX c = e0) dotted with x_r.
    let mut e0 = vec![0.0; k];
    e0[0] = 1.0;
    let c = solve_dense(&mut xtx, &mut e0, k)?;
    Ok(offsets
        .iter()
        .map(|&o| {
            let mut pow = 1.0;
            let mut w = 0.0;
            for &ci in &c {
                w += ci * pow;
                pow *= o as f64;
            }
            w
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct Smoothed {
    pub values: Vec<f64>,
    /// The window actually used; smaller than requested for short inputs.
    pub window_used: usize,
}

/// Savitzky-Golay smoothing. Interior points use the centered window;
/// points near the ends are fit on the window truncated to the valid range.
pub fn smooth(raw: &[f64], cfg: &LabelerConfig) -> Result<Smoothed> {
    cfg.validate()?;
    if raw.is_empty() {
        return Err(Error::Config("cannot smooth an empty trajectory".into()));
    }
    let mut window = cfg.sg_window;
    if raw.len() < window {
        // Largest odd window that fits, but still larger than the order.
        let mut w = raw.len();
        if w % 2 == 0 {
            w -= 1;
        }
        window = w.max(cfg.sg_order + 1);
        if window % 2 == 0 {
            window += 1;
        }
        if window > raw.len() {
            return Err(Error::Config(format!(
                "trajectory of {} points too short for polynomial order {}",
                raw.len(),
                cfg.sg_order
            )));
        }
    }
    let half = window / 2;
    let n = raw.len();
    let order = cfg.sg_order.min(window - 1);
    let center_offsets: Vec<i64> = (-(half as i64)..=half as i64).collect();
    let center_weights = polyfit_weights(&center_offsets, order)?;
    let mut out = vec![0.0; n];
    for i in 0..n {
        if i >= half && i + half < n {
            let mut v = 0.0;
            for (k, &w) in center_weights.iter().enumerate() {
                v += w * raw[i - half + k];
            }
            out[i] = v;
        } else {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let offsets: Vec<i64> = (lo..=hi).map(|j| j as i64 - i as i64).collect();
            let ord = order.min(offsets.len() - 1);
            let weights = polyfit_weights(&offsets, ord)?;
            let mut v = 0.0;
            for (k, &w) in weights.iter().enumerate() {
                v += w * raw[lo + k];
            }
            out[i] = v;
        }
    }
    Ok(Smoothed {
        values: out,
        window_used: window,
    })
}

/// Forward difference with the last value repeated, keeping lengths equal.
pub fn velocity(smoothed: &[f64]) -> Vec<f64> {
    let n = smoothed.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut v: Vec<f64> = smoothed.windows(2).map(|w| w[1] - w[0]).collect();
    v.push(v[n - 2]);
    v
}

/// Preliminary labels: 1 above the velocity threshold, -1 below its
/// negation, 0 otherwise.
pub fn threshold_velocity(smoothed: &[f64], tau: f64) -> Vec<i8> {
    velocity(smoothed)
        .into_iter()
        .map(|v| {
            if v > tau {
                1
            } else if v < -tau {
                -1
            } else {
                0
            }
        })
        .collect()
}

/// Indices of local maxima with topographic prominence at or above the
/// threshold. Plateaus count once, at their left edge.
pub fn find_peaks(values: &[f64], min_prominence: f64) -> Vec<usize> {
    let n = values.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if values[i] > values[i - 1] {
            // Scan across a possible plateau.
            let start = i;
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[j] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[j] {
                let peak = start;
                if prominence(values, peak) >= min_prominence {
                    peaks.push(peak);
                }
                i = j + 1;
                continue;
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Topographic prominence: height above the higher of the two base valleys,
/// where each base is the minimum between the peak and the nearest higher
/// point on that side (or the end of the series).
fn prominence(values: &[f64], peak: usize) -> f64 {
    let h = values[peak];
    let mut left_base = h;
    for j in (0..peak).rev() {
        if values[j] > h {
            break;
        }
        if values[j] < left_base {
            left_base = values[j];
        }
    }
    let mut right_base = h;
    for &v in &values[peak + 1..] {
        if v > h {
            break;
        }
        if v < right_base {
            right_base = v;
        }
    }
    h - left_base.max(right_base)
}

/// Segment at prominent peaks and troughs, then settle each segment on one
/// label: the majority when mixing is light, the mean-velocity sign when
/// heavy. Returns labels of the same length as the input.
pub fn segment_and_filter(smoothed: &[f64], labels: &[i8], cfg: &LabelerConfig) -> Vec<i8> {
    assert_eq!(smoothed.len(), labels.len());
    let n = smoothed.len();
    if n == 0 {
        return Vec::new();
    }
    let mut cuts: Vec<usize> = find_peaks(smoothed, cfg.peak_prominence);
    let negated: Vec<f64> = smoothed.iter().map(|v| -v).collect();
    cuts.extend(find_peaks(&negated, cfg.peak_prominence));
    cuts.sort_unstable();
    cuts.dedup();

    let vel = velocity(smoothed);
    let mut out = labels.to_vec();
    let mut start = 0usize;
    let mut boundaries: Vec<usize> = cuts.into_iter().filter(|&c| c > 0 && c < n).collect();
    boundaries.push(n);
    for end in boundaries {
        if end > start {
            relabel_segment(&mut out[start..end], &vel[start..end], cfg);
        }
        start = end;
    }
    out
}

fn relabel_segment(labels: &mut [i8], vel: &[f64], cfg: &LabelerConfig) {
    let mut counts = [0usize; 3]; // index by label + 1
    for &l in labels.iter() {
        counts[(l + 1) as usize] += 1;
    }
    let mut order: Vec<usize> = vec![0, 1, 2];
    order.sort_by_key(|&i| std::cmp::Reverse(counts[i]));
    let majority = counts[order[0]];
    let runner_up = counts[order[1]];
    let ratio = if majority == 0 {
        0.0
    } else {
        runner_up as f64 / majority as f64
    };
    let new_label = if ratio < cfg.mixing_ratio_cutoff {
        order[0] as i8 - 1
    } else {
        let mean_v = vel.iter().sum::<f64>() / vel.len() as f64;
        if mean_v > cfg.velocity_threshold {
            1
        } else if mean_v < -cfg.velocity_threshold {
            -1
        } else {
            0
        }
    };
    for l in labels.iter_mut() {
        *l = new_label;
    }
}

#[derive(Debug, Clone)]
pub struct LabelOutcome {
    pub labels: Vec<i8>,
    pub directions: Vec<Direction>,
    pub smoothed: Vec<f64>,
    pub velocity: Vec<f64>,
    pub window_used: usize,
}

pub fn to_direction(label: i8) -> Direction {
    match label {
        1 => Direction::Forward,
        -1 => Direction::Backward,
        _ => Direction::NoMovement,
    }
}

/// The full labeling pipeline: smooth, threshold, segment, relabel.
pub fn label_direction(raw: &[f64], cfg: &LabelerConfig) -> Result<LabelOutcome> {
    let smoothed = smooth(raw, cfg)?;
    let prelim = threshold_velocity(&smoothed.values, cfg.velocity_threshold);
    let labels = segment_and_filter(&smoothed.values, &prelim, cfg);
    let vel = velocity(&smoothed.values);
    let directions = labels.iter().map(|&l| to_direction(l)).collect();
    Ok(LabelOutcome {
        labels,
        directions,
        smoothed: smoothed.values,
        velocity: vel,
        window_used: smoothed.window_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn cfg(window: usize, tau: f64, prominence: f64) -> LabelerConfig {
        LabelerConfig {
            sg_window: window,
            sg_order: 2,
            velocity_threshold: tau,
            peak_prominence: prominence,
            mixing_ratio_cutoff: 0.5,
        }
    }

    #[test]
    fn quadratic_is_reproduced_exactly() {
        let raw: Vec<f64> = (0..400)
            .map(|t| {
                let x = t as f64;
                0.3 * x * x - 2.0 * x + 5.0
            })
            .collect();
        let s = smooth(&raw, &cfg(251, 0.1, 1.0)).unwrap();
        for (a, b) in raw.iter().zip(&s.values) {
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn constant_input_stays_constant() {
        let raw = vec![3.25; 300];
        let s = smooth(&raw, &cfg(251, 0.1, 1.0)).unwrap();
        assert!(s.values.iter().all(|&v| (v - 3.25).abs() < 1e-10));
    }

    #[test]
    fn short_input_shrinks_the_window() {
        let raw: Vec<f64> = (0..50).map(|t| t as f64).collect();
        let s = smooth(&raw, &cfg(251, 0.1, 1.0)).unwrap();
        assert_eq!(s.window_used, 49);
        for (a, b) in raw.iter().zip(&s.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn noisy_ramp_slope_is_recovered() {
        let mut rng = crate::rng::rng_from_seed(3);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let raw: Vec<f64> = (0..3000)
            .map(|t| 0.2 * t as f64 + noise.sample(&mut rng))
            .collect();
        let s = smooth(&raw, &cfg(251, 0.1, 1.0)).unwrap();
        let v = velocity(&s.values);
        let interior = &v[300..2700];
        let mean_slope = interior.iter().sum::<f64>() / interior.len() as f64;
        assert!(
            (mean_slope - 0.2).abs() < 0.02,
            "recovered slope {mean_slope}"
        );
    }

    #[test]
    fn threshold_labels_are_piecewise() {
        let constant = vec![1.0; 20];
        assert!(threshold_velocity(&constant, 0.1).iter().all(|&l| l == 0));
        let ramp: Vec<f64> = (0..20).map(|t| 0.2 * t as f64).collect();
        assert!(threshold_velocity(&ramp, 0.1).iter().all(|&l| l == 1));
        // Triangle wave: up then down, apex gets the sign of the next step.
        let tri: Vec<f64> = (0..21)
            .map(|t| if t <= 10 { t as f64 } else { 20.0 - t as f64 })
            .map(|v| 0.2 * v)
            .collect();
        let labels = threshold_velocity(&tri, 0.1);
        assert!(labels[..10].iter().all(|&l| l == 1));
        assert!(labels[10..20].iter().all(|&l| l == -1));
    }

    #[test]
    fn prominence_filters_minor_wiggles() {
        let mut values = vec![0.0; 100];
        for (i, v) in values.iter_mut().enumerate() {
            *v = (i as f64 / 10.0).sin() * 5.0;
        }
        values[40] += 0.2; // minor wiggle
        let major = find_peaks(&values, 3.0);
        assert!(!major.is_empty());
        assert!(major.iter().all(|&p| values[p] > 4.0));
    }

    #[test]
    fn lightly_mixed_segment_takes_majority() {
        let smoothed: Vec<f64> = (0..100).map(|t| t as f64).collect();
        let mut labels = vec![1i8; 100];
        for k in (0..100).step_by(20) {
            labels[k] = -1; // 5% noise
        }
        let out = segment_and_filter(&smoothed, &labels, &cfg(9, 0.1, 1e9));
        assert!(out.iter().all(|&l| l == 1));
    }

    #[test]
    fn heavily_mixed_segment_uses_mean_velocity() {
        let smoothed: Vec<f64> = (0..100).map(|t| t as f64 * 0.5).collect();
        let labels: Vec<i8> = (0..100).map(|t| if t % 2 == 0 { 1 } else { -1 }).collect();
        let out = segment_and_filter(&smoothed, &labels, &cfg(9, 0.1, 1e9));
        assert!(out.iter().all(|&l| l == 1), "positive mean velocity wins");
    }

    #[test]
    fn still_segment_stays_no_movement() {
        let smoothed = vec![2.0; 50];
        let labels = vec![0i8; 50];
        let out = segment_and_filter(&smoothed, &labels, &cfg(9, 0.1, 1e9));
        assert!(out.iter().all(|&l| l == 0));
    }

    #[test]
    fn segments_are_internally_constant() {
        let mut rng = crate::rng::rng_from_seed(8);
        let noise = Normal::new(0.0, 3.0).unwrap();
        // Up, down, up with noise.
        let mut raw = Vec::new();
        let mut x = 0.0;
        for seg in 0..3 {
            let slope = if seg % 2 == 0 { 0.5 } else { -0.5 };
            for _ in 0..400 {
                x += slope;
                raw.push(x + noise.sample(&mut rng));
            }
        }
        let config = cfg(101, 0.1, 30.0);
        let out = label_direction(&raw, &config).unwrap();
        // Recompute the cuts and verify constancy inside each segment.
        let mut cuts = find_peaks(&out.smoothed, config.peak_prominence);
        let negated: Vec<f64> = out.smoothed.iter().map(|v| -v).collect();
        cuts.extend(find_peaks(&negated, config.peak_prominence));
        cuts.sort_unstable();
        cuts.dedup();
        cuts.push(raw.len());
        let mut start = 0;
        for end in cuts {
            if end > start {
                let first = out.labels[start];
                assert!(out.labels[start..end].iter().all(|&l| l == first));
            }
            start = end;
        }
        assert_eq!(out.labels.len(), raw.len());
    }
}
