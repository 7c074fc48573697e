//! Soft-margin RBF support vector machine: a sequential minimal
//! optimization solver for the dual, min-max feature scaling, and sigmoid
//! probability calibration with a configurable decision threshold.
//!
//! Natural images are the negative class, fake colorized images the
//! positive class.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary class label. `Natural` is negative, `Fake` positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Natural,
    Fake,
}

impl Label {
    pub fn to_y(self) -> f64 {
        match self {
            Label::Natural => -1.0,
            Label::Fake => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Natural => "natural",
            Label::Fake => "fake",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "natural" => Ok(Label::Natural),
            "fake" => Ok(Label::Fake),
            other => Err(format!("unknown label `{other}` (expected natural|fake)")),
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Feature rows with their labels.
#[derive(Debug, Clone, Default)]
pub struct LabeledFeatures {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
}

impl LabeledFeatures {
    pub fn push(&mut self, row: Vec<f64>, label: Label) {
        self.features.push(row);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Checks shape, finiteness and class coverage for training.
    pub fn validate_for_training(&self) -> Result<()> {
        let dim = self.features.first().map(|r| r.len()).unwrap_or(0);
        for (row, feats) in self.features.iter().enumerate() {
            if feats.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: feats.len(),
                });
            }
            for (col, v) in feats.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteFeature { row, col });
                }
            }
        }
        let fake = self.labels.iter().filter(|l| **l == Label::Fake).count();
        if fake == 0 || fake == self.labels.len() || self.labels.is_empty() {
            return Err(Error::SingleClass);
        }
        Ok(())
    }
}

/// Solver settings. `c` is the soft-margin cost, `gamma` (`g`) the RBF
/// width, `tolerance` the KKT stopping gap, `max_passes` a per-sample
/// iteration cap on the pair solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub gamma: f64,
    pub tolerance: f64,
    pub max_passes: usize,
    /// Calibrate the sigmoid on out-of-fold decision values instead of the
    /// training decisions.
    pub calibration_folds: Option<usize>,
}

impl SvmConfig {
    /// Tuned cost/gamma for the histogram detector.
    pub fn hist_default() -> Self {
        Self {
            c: 32.0,
            ..Default::default()
        }
    }

    /// Tuned cost/gamma for the Fisher-encoding detector.
    pub fn fe_default() -> Self {
        Self {
            c: 2.0,
            ..Default::default()
        }
    }
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: 0.5,
            tolerance: 1e-3,
            max_passes: 1000,
            calibration_folds: None,
        }
    }
}

/// `exp(-g * ||x - y||^2)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let mut dist = 0.0;
    for (a, b) in x.iter().zip(y) {
        let d = a - b;
        dist += d * d;
    }
    Ok((-gamma * dist).exp())
}

/// Raw output of the dual solver.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    /// Dual objective `sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij`.
    pub objective: f64,
    pub iterations: usize,
    /// Final maximal KKT violation gap.
    pub kkt_gap: f64,
}

/// Solves the soft-margin dual by sequential minimal optimization with
/// maximal-violating-pair selection.
///
/// Labels must be +/-1. Runs until the KKT gap drops below
/// `cfg.tolerance` or `cfg.max_passes * n` pair updates.
pub fn solve_dual(features: &[Vec<f64>], y: &[f64], cfg: &SvmConfig) -> Result<DualSolution> {
    let n = features.len();
    if n == 0 {
        return Err(Error::Config("cannot solve an empty problem".into()));
    }
    if cfg.c <= 0.0 || cfg.gamma <= 0.0 {
        return Err(Error::Config("svm cost and gamma must be positive".into()));
    }
    let c = cfg.c;

    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = rbf_kernel(&features[i], &features[j], cfg.gamma)?;
            kernel[i * n + j] = k;
            kernel[j * n + i] = k;
        }
    }

    let mut alpha = vec![0.0f64; n];
    // grad_i = sum_j y_i y_j K_ij alpha_j - 1
    let mut grad = vec![-1.0f64; n];
    let max_iter = cfg.max_passes.saturating_mul(n).max(cfg.max_passes);
    let mut iterations = 0;
    let mut gap = f64::INFINITY;

    let in_up =
        |t: usize, alpha: &[f64]| (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
    let in_low =
        |t: usize, alpha: &[f64]| (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);

    while iterations < max_iter {
        let mut i = usize::MAX;
        let mut m = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut big_m = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(t, &alpha) && v > m {
                m = v;
                i = t;
            }
            if in_low(t, &alpha) && v < big_m {
                big_m = v;
                j = t;
            }
        }
        gap = m - big_m;
        if gap <= cfg.tolerance || i == usize::MAX || j == usize::MAX {
            break;
        }
        iterations += 1;

        // Two-variable subproblem on the maximal violating pair.
        let e_i = y[i] * grad[i];
        let e_j = y[j] * grad[j];
        let eta = (kernel[i * n + i] + kernel[j * n + j] - 2.0 * kernel[i * n + j]).max(1e-12);
        let (lo, hi) = if y[i] != y[j] {
            (
                (alpha[j] - alpha[i]).max(0.0),
                (c + alpha[j] - alpha[i]).min(c),
            )
        } else {
            (
                (alpha[i] + alpha[j] - c).max(0.0),
                (alpha[i] + alpha[j]).min(c),
            )
        };
        let unclipped = alpha[j] + y[j] * (e_i - e_j) / eta;
        // Snap float dust onto the exact bounds, otherwise near-bound
        // multipliers produce phantom violating pairs that stall the
        // solver short of the requested gap.
        let snap = 1e-12 * c.max(1.0);
        let snap_bounds = |v: f64| {
            if v < snap {
                0.0
            } else if v > c - snap {
                c
            } else {
                v
            }
        };
        let new_j = snap_bounds(unclipped.clamp(lo, hi));
        let delta_j = new_j - alpha[j];
        if delta_j.abs() < 1e-14 {
            // Bound-locked pair; no further exact progress possible.
            break;
        }
        let new_i = snap_bounds((alpha[i] + y[i] * y[j] * (alpha[j] - new_j)).clamp(0.0, c));
        let delta_i = new_i - alpha[i];
        alpha[i] = new_i;
        alpha[j] = new_j;
        for t in 0..n {
            grad[t] += y[t] * y[i] * kernel[t * n + i] * delta_i
                + y[t] * y[j] * kernel[t * n + j] * delta_j;
        }
    }

    // Bias from free support vectors, else the violation midpoint.
    let free: Vec<usize> = (0..n)
        .filter(|&t| alpha[t] > 1e-9 && alpha[t] < c - 1e-9)
        .collect();
    let bias = if !free.is_empty() {
        free.iter().map(|&t| -y[t] * grad[t]).sum::<f64>() / free.len() as f64
    } else {
        let m = (0..n)
            .filter(|&t| in_up(t, &alpha))
            .map(|t| -y[t] * grad[t])
            .fold(f64::NEG_INFINITY, f64::max);
        let big_m = (0..n)
            .filter(|&t| in_low(t, &alpha))
            .map(|t| -y[t] * grad[t])
            .fold(f64::INFINITY, f64::min);
        (m + big_m) / 2.0
    };

    let objective = (0..n).map(|t| 0.5 * alpha[t] * (1.0 - grad[t])).sum();

    Ok(DualSolution {
        alphas: alpha,
        bias,
        objective,
        iterations,
        kkt_gap: gap,
    })
}

/// Numerically stable `1 / (1 + exp(a*d + b))`.
pub fn sigmoid(decision: f64, a: f64, b: f64) -> f64 {
    let f = a * decision + b;
    if f >= 0.0 {
        let e = (-f).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + f.exp())
    }
}

/// Fits sigmoid parameters (A, B) by regularized maximum likelihood on
/// decision values (Newton iterations with backtracking line search).
pub fn fit_sigmoid(decisions: &[f64], y: &[f64]) -> (f64, f64) {
    let n = decisions.len();
    let prior1 = y.iter().filter(|v| **v > 0.0).count() as f64;
    let prior0 = n as f64 - prior1;

    let hi_target = (prior1 + 1.0) / (prior1 + 2.0);
    let lo_target = 1.0 / (prior0 + 2.0);
    let targets: Vec<f64> = y
        .iter()
        .map(|&v| if v > 0.0 { hi_target } else { lo_target })
        .collect();

    let max_iter = 100;
    let min_step = 1e-10;
    let ridge = 1e-12;
    let eps = 1e-5;

    let objective = |a: f64, b: f64| -> f64 {
        let mut obj = 0.0;
        for (&d, &t) in decisions.iter().zip(&targets) {
            let f = a * d + b;
            obj += if f >= 0.0 {
                t * f + (1.0 + (-f).exp()).ln()
            } else {
                (t - 1.0) * f + (1.0 + f.exp()).ln()
            };
        }
        obj
    };

    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let mut fval = objective(a, b);

    for _ in 0..max_iter {
        let mut h11 = ridge;
        let mut h22 = ridge;
        let mut h21 = 0.0;
        let mut g1 = 0.0;
        let mut g2 = 0.0;
        for (&d, &t) in decisions.iter().zip(&targets) {
            let f = a * d + b;
            let (p, q) = if f >= 0.0 {
                let e = (-f).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = f.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let w = p * q;
            h11 += d * d * w;
            h22 += w;
            h21 += d * w;
            let diff = t - p;
            g1 += d * diff;
            g2 += diff;
        }
        if g1.abs() < eps && g2.abs() < eps {
            break;
        }

        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let descent = g1 * da + g2 * db;

        let mut step = 1.0;
        while step >= min_step {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * descent {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < min_step {
            break;
        }
    }
    (a, b)
}

/// A trained classifier: support vectors over min-max-scaled features,
/// sigmoid calibration, and the probability threshold used by
/// [`SvmModel::classify`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub gamma: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub scale_min: Vec<f64>,
    pub scale_max: Vec<f64>,
    pub platt_a: f64,
    pub platt_b: f64,
    /// Probability at or above which an input is classified fake.
    pub threshold: f64,
}

impl SvmModel {
    fn scale(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.scale_min.len() {
            return Err(Error::DimensionMismatch {
                expected: self.scale_min.len(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .enumerate()
            .map(|(d, &v)| {
                let span = self.scale_max[d] - self.scale_min[d];
                if span > 0.0 {
                    (v - self.scale_min[d]) / span
                } else {
                    0.0
                }
            })
            .collect())
    }

    /// Uncalibrated decision value; positive leans fake.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        let scaled = self.scale(x)?;
        let mut acc = self.bias;
        for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coefs) {
            acc += coef * rbf_kernel(sv, &scaled, self.gamma)?;
        }
        Ok(acc)
    }

    /// Calibrated probability that the input is fake.
    pub fn predict_probability(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.decision_value(x)?, self.platt_a, self.platt_b))
    }

    /// Thresholded decision: fake iff the probability reaches the model
    /// threshold (boundary inclusive).
    pub fn classify(&self, x: &[f64]) -> Result<Label> {
        Ok(if self.predict_probability(x)? >= self.threshold {
            Label::Fake
        } else {
            Label::Natural
        })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }
}

/// Trains the classifier: learns min-max scaling from the data, solves the
/// dual, and fits the probability sigmoid on training decision values (or
/// out-of-fold values when `cfg.calibration_folds` is set).
pub fn train_svm(data: &LabeledFeatures, cfg: &SvmConfig, seed: u64) -> Result<SvmModel> {
    data.validate_for_training()?;
    let dim = data.features[0].len();
    let n = data.len();

    let mut scale_min = vec![f64::INFINITY; dim];
    let mut scale_max = vec![f64::NEG_INFINITY; dim];
    for row in &data.features {
        for d in 0..dim {
            scale_min[d] = scale_min[d].min(row[d]);
            scale_max[d] = scale_max[d].max(row[d]);
        }
    }
    let scaled: Vec<Vec<f64>> = data
        .features
        .iter()
        .map(|row| {
            (0..dim)
                .map(|d| {
                    let span = scale_max[d] - scale_min[d];
                    if span > 0.0 {
                        (row[d] - scale_min[d]) / span
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let y: Vec<f64> = data.labels.iter().map(|l| l.to_y()).collect();

    let solution = solve_dual(&scaled, &y, cfg)?;

    let decisions: Vec<f64> = (0..n)
        .map(|t| {
            let mut acc = solution.bias;
            for s in 0..n {
                if solution.alphas[s] > 0.0 {
                    acc += solution.alphas[s]
                        * y[s]
                        * rbf_kernel(&scaled[s], &scaled[t], cfg.gamma).expect("equal dims");
                }
            }
            acc
        })
        .collect();

    let (platt_a, platt_b) = match cfg.calibration_folds {
        Some(folds) if folds >= 2 && n >= folds => {
            cross_fit_sigmoid(&scaled, &y, cfg, folds, seed)?
        }
        _ => fit_sigmoid(&decisions, &y),
    };

    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for t in 0..n {
        if solution.alphas[t] > 1e-12 {
            support_vectors.push(scaled[t].clone());
            dual_coefs.push(solution.alphas[t] * y[t]);
        }
    }

    Ok(SvmModel {
        gamma: cfg.gamma,
        support_vectors,
        dual_coefs,
        bias: solution.bias,
        scale_min,
        scale_max,
        platt_a,
        platt_b,
        threshold: 0.5,
    })
}

/// Sigmoid parameters from out-of-fold decision values.
fn cross_fit_sigmoid(
    scaled: &[Vec<f64>],
    y: &[f64],
    cfg: &SvmConfig,
    folds: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let n = scaled.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut decisions = vec![0.0; n];
    for fold in 0..folds {
        let start = fold * n / folds;
        let end = (fold + 1) * n / folds;
        let held: &[usize] = &order[start..end];
        let train: Vec<usize> = order[..start]
            .iter()
            .chain(&order[end..])
            .copied()
            .collect();
        let sub_x: Vec<Vec<f64>> = train.iter().map(|&t| scaled[t].clone()).collect();
        let sub_y: Vec<f64> = train.iter().map(|&t| y[t]).collect();
        let has_both = sub_y.iter().any(|v| *v > 0.0) && sub_y.iter().any(|v| *v < 0.0);
        if !has_both {
            for &t in held {
                decisions[t] = sub_y.first().copied().unwrap_or(0.0);
            }
            continue;
        }
        let sol = solve_dual(&sub_x, &sub_y, cfg)?;
        for &t in held {
            let mut acc = sol.bias;
            for (s, &a) in sol.alphas.iter().enumerate() {
                if a > 0.0 {
                    acc += a * sub_y[s] * rbf_kernel(&sub_x[s], &scaled[t], cfg.gamma)?;
                }
            }
            decisions[t] = acc;
        }
    }
    Ok(fit_sigmoid(&decisions, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labeled(rows: Vec<(Vec<f64>, Label)>) -> LabeledFeatures {
        let mut data = LabeledFeatures::default();
        for (row, label) in rows {
            data.push(row, label);
        }
        data
    }

    #[test]
    fn rbf_reference_values() {
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], 0.5).unwrap(), 1.0);
        let k = rbf_kernel(&[0.0, 0.0], &[1.0, 1.0], 0.5).unwrap();
        assert!((k - (-1.0f64).exp()).abs() < 1e-15);
        assert!(rbf_kernel(&[0.0], &[0.0, 1.0], 0.5).is_err());
    }

    #[test]
    fn rbf_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..200 {
            let x: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let y: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let g = rng.random::<f64>() * 2.0 + 0.01;
            assert_eq!(
                rbf_kernel(&x, &y, g).unwrap(),
                rbf_kernel(&y, &x, g).unwrap()
            );
        }
    }

    #[test]
    fn symmetric_pair_has_zero_midpoint_decision() {
        let data = labeled(vec![
            (vec![1.0, 0.0], Label::Fake),
            (vec![-1.0, 0.0], Label::Natural),
        ]);
        let cfg = SvmConfig {
            c: 10.0,
            ..Default::default()
        };
        let model = train_svm(&data, &cfg, 0).unwrap();
        // Scaled features map the pair to 1 and 0; the midpoint is 0.5.
        let d = model.decision_value(&[0.0, 0.0]).unwrap();
        assert!(d.abs() < 1e-6, "decision at midpoint = {d}");
    }

    #[test]
    fn xor_is_fit_exactly() {
        let data = labeled(vec![
            (vec![0.0, 0.0], Label::Natural),
            (vec![1.0, 1.0], Label::Natural),
            (vec![0.0, 1.0], Label::Fake),
            (vec![1.0, 0.0], Label::Fake),
        ]);
        let cfg = SvmConfig {
            c: 32.0,
            gamma: 0.5,
            ..Default::default()
        };
        let model = train_svm(&data, &cfg, 0).unwrap();
        for (row, label) in data.features.iter().zip(&data.labels) {
            let d = model.decision_value(row).unwrap();
            assert_eq!(d > 0.0, *label == Label::Fake, "row {row:?} decision {d}");
        }
    }

    #[test]
    fn dual_feasibility_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let rows: Vec<(Vec<f64>, Label)> = (0..40)
            .map(|i| {
                let label = if i % 2 == 0 {
                    Label::Natural
                } else {
                    Label::Fake
                };
                let center = if label == Label::Fake { 0.7 } else { 0.3 };
                let row = vec![
                    center + rng.random::<f64>() * 0.4 - 0.2,
                    center + rng.random::<f64>() * 0.4 - 0.2,
                ];
                (row, label)
            })
            .collect();
        let data = labeled(rows);
        let cfg = SvmConfig {
            c: 4.0,
            ..Default::default()
        };

        let y: Vec<f64> = data.labels.iter().map(|l| l.to_y()).collect();
        let sol = solve_dual(&data.features, &y, &cfg).unwrap();
        let balance: f64 = sol.alphas.iter().zip(&y).map(|(a, yy)| a * yy).sum();
        assert!(balance.abs() < 1e-6, "sum alpha_i y_i = {balance}");
        assert!(sol
            .alphas
            .iter()
            .all(|&a| (-1e-12..=cfg.c + 1e-12).contains(&a)));
        assert!(sol.kkt_gap <= cfg.tolerance);
    }

    #[test]
    fn rejects_single_class_and_non_finite() {
        let data = labeled(vec![(vec![0.0], Label::Fake), (vec![1.0], Label::Fake)]);
        assert!(matches!(
            train_svm(&data, &SvmConfig::default(), 0),
            Err(Error::SingleClass)
        ));

        let data = labeled(vec![
            (vec![f64::NAN], Label::Fake),
            (vec![1.0], Label::Natural),
        ]);
        assert!(matches!(
            train_svm(&data, &SvmConfig::default(), 0),
            Err(Error::NonFiniteFeature { .. })
        ));
    }

    #[test]
    fn probability_is_monotone_in_decision() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let rows: Vec<(Vec<f64>, Label)> = (0..30)
            .map(|i| {
                let label = if i % 2 == 0 {
                    Label::Natural
                } else {
                    Label::Fake
                };
                let base = if label == Label::Fake { 1.0 } else { -1.0 };
                (vec![base + rng.random::<f64>() * 0.5], label)
            })
            .collect();
        let model = train_svm(&labeled(rows), &SvmConfig::default(), 0).unwrap();
        // Sweep inputs; decision and probability must order identically.
        let mut last_p = f64::NEG_INFINITY;
        let mut last_d = f64::NEG_INFINITY;
        for i in 0..50 {
            let x = vec![-2.0 + i as f64 * 0.08];
            let d = model.decision_value(&x).unwrap();
            let p = model.predict_probability(&x).unwrap();
            assert!((0.0..=1.0).contains(&p));
            if d > last_d {
                assert!(p >= last_p, "probability dropped while decision rose");
            }
            last_p = p;
            last_d = d;
        }
        // Sigmoid midpoint maps to probability one half.
        let mid = -model.platt_b / model.platt_a;
        assert!((sigmoid(mid, model.platt_a, model.platt_b) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn classify_threshold_is_inclusive() {
        let model = SvmModel {
            gamma: 0.5,
            support_vectors: vec![vec![0.0]],
            dual_coefs: vec![1.0],
            bias: 0.0,
            scale_min: vec![0.0],
            scale_max: vec![1.0],
            platt_a: -1.0,
            platt_b: 0.0,
            threshold: 0.5,
        };
        // decision at x=0 is k(0,0)=1, sigmoid(-1*1) = 1/(1+e^-1) > 0.5.
        assert_eq!(model.classify(&[0.0]).unwrap(), Label::Fake);
        let p = model.predict_probability(&[0.0]).unwrap();
        let boundary = model.clone().with_threshold(p);
        assert_eq!(boundary.classify(&[0.0]).unwrap(), Label::Fake);
        let above = model.with_threshold(p + 1e-9);
        assert_eq!(above.classify(&[0.0]).unwrap(), Label::Natural);
    }

    #[test]
    fn threshold_sweep_moves_predictions_one_way() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let rows: Vec<(Vec<f64>, Label)> = (0..20)
            .map(|i| {
                let label = if i % 2 == 0 {
                    Label::Natural
                } else {
                    Label::Fake
                };
                let base = if label == Label::Fake { 0.8 } else { 0.2 };
                (vec![base + rng.random::<f64>() * 0.3], label)
            })
            .collect();
        let model = train_svm(&labeled(rows), &SvmConfig::default(), 0).unwrap();
        let inputs: Vec<Vec<f64>> = (0..24).map(|i| vec![i as f64 / 24.0]).collect();

        let mut previous_fakes = usize::MAX;
        for step in 0..=10 {
            let t = step as f64 / 10.0;
            let scoped = model.clone().with_threshold(t);
            let fakes: Vec<usize> = inputs
                .iter()
                .enumerate()
                .filter(|(_, x)| scoped.classify(x).unwrap() == Label::Fake)
                .map(|(i, _)| i)
                .collect();
            if step == 0 {
                assert_eq!(
                    fakes.len(),
                    inputs.len(),
                    "threshold 0 marks everything fake"
                );
            }
            if step == 10 {
                assert!(fakes.is_empty(), "threshold 1 marks everything natural");
            }
            assert!(fakes.len() <= previous_fakes, "fake set grew as t rose");
            previous_fakes = fakes.len();
        }
    }

    #[test]
    fn decision_ignores_support_vector_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let rows: Vec<(Vec<f64>, Label)> = (0..20)
            .map(|i| {
                let label = if i < 10 { Label::Natural } else { Label::Fake };
                let base = if label == Label::Fake { 0.8 } else { 0.2 };
                (
                    vec![base + rng.random::<f64>() * 0.3, rng.random::<f64>()],
                    label,
                )
            })
            .collect();
        let model = train_svm(&labeled(rows), &SvmConfig::default(), 0).unwrap();
        let mut permuted = model.clone();
        permuted.support_vectors.reverse();
        permuted.dual_coefs.reverse();
        let x = vec![0.5, 0.5];
        let a = model.decision_value(&x).unwrap();
        let b = permuted.decision_value(&x).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn affine_feature_maps_do_not_change_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let rows: Vec<(Vec<f64>, Label)> = (0..30)
            .map(|i| {
                let label = if i % 2 == 0 {
                    Label::Natural
                } else {
                    Label::Fake
                };
                let base = if label == Label::Fake { 0.7 } else { 0.3 };
                (
                    vec![base + rng.random::<f64>() * 0.2, rng.random::<f64>()],
                    label,
                )
            })
            .collect();
        let data = labeled(rows.clone());
        let mapped = labeled(
            rows.iter()
                .map(|(row, l)| (vec![row[0] * -3.5 + 11.0, row[1]], *l))
                .collect(),
        );
        let cfg = SvmConfig::default();
        let m1 = train_svm(&data, &cfg, 0).unwrap();
        let m2 = train_svm(&mapped, &cfg, 0).unwrap();
        for (row, _) in &rows {
            let l1 = m1.classify(row).unwrap();
            let l2 = m2.classify(&[row[0] * -3.5 + 11.0, row[1]]).unwrap();
            assert_eq!(l1, l2);
        }
    }

    #[test]
    fn cross_fit_calibration_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let rows: Vec<(Vec<f64>, Label)> = (0..24)
            .map(|i| {
                let label = if i % 2 == 0 {
                    Label::Natural
                } else {
                    Label::Fake
                };
                let base = if label == Label::Fake { 0.9 } else { 0.1 };
                (vec![base + rng.random::<f64>() * 0.1], label)
            })
            .collect();
        let cfg = SvmConfig {
            calibration_folds: Some(3),
            ..Default::default()
        };
        let model = train_svm(&labeled(rows), &cfg, 7).unwrap();
        assert!(model.platt_a.is_finite() && model.platt_b.is_finite());
    }
}
