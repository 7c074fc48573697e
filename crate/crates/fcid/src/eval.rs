//! Evaluation protocol: half total error rate, ROC/AUC, cross-validation
//! folds, cost/gamma grid search and the probability-threshold sweep.
//!
//! Fake images are the positive class throughout.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::svm::{train_svm, Label, LabeledFeatures, SvmConfig};

/// Binary confusion counts; positives are fake images.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(predicted: &[Label], truth: &[Label]) -> Self {
        let mut counts = ConfusionCounts::default();
        for (p, t) in predicted.iter().zip(truth) {
            match (t, p) {
                (Label::Fake, Label::Fake) => counts.true_pos += 1,
                (Label::Fake, Label::Natural) => counts.false_neg += 1,
                (Label::Natural, Label::Fake) => counts.false_pos += 1,
                (Label::Natural, Label::Natural) => counts.true_neg += 1,
            }
        }
        counts
    }

    pub fn total(&self) -> usize {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }

    /// FP / (TN + FP).
    pub fn false_positive_rate(&self) -> Result<f64> {
        let negatives = self.true_neg + self.false_pos;
        if negatives == 0 {
            return Err(Error::UndefinedRate("negative"));
        }
        Ok(self.false_pos as f64 / negatives as f64)
    }

    /// FN / (TP + FN).
    pub fn false_negative_rate(&self) -> Result<f64> {
        let positives = self.true_pos + self.false_neg;
        if positives == 0 {
            return Err(Error::UndefinedRate("positive"));
        }
        Ok(self.false_neg as f64 / positives as f64)
    }
}

/// Half total error rate `(FPR + FNR) / 2`.
pub fn hter(counts: &ConfusionCounts) -> Result<f64> {
    Ok((counts.false_positive_rate()? + counts.false_negative_rate()?) / 2.0)
}

/// ROC curve points (fpr, tpr) and the area under the curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Sweeps all distinct score thresholds, grouping ties so the trapezoidal
/// area equals the tie-adjusted pairwise ranking statistic.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<RocCurve> {
    assert_eq!(scores.len(), labels.len());
    let positives = labels.iter().filter(|l| **l == Label::Fake).count();
    let negatives = labels.len() - positives;
    if positives == 0 {
        return Err(Error::UndefinedRate("positive"));
    }
    if negatives == 0 {
        return Err(Error::UndefinedRate("negative"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));

    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut idx = 0;
    while idx < order.len() {
        let score = scores[order[idx]];
        // Consume the whole tie group before emitting a point.
        while idx < order.len() && scores[order[idx]] == score {
            match labels[order[idx]] {
                Label::Fake => tp += 1,
                Label::Natural => fp += 1,
            }
            idx += 1;
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }

    let mut auc = 0.0;
    for w in points.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        auc += (x1 - x0) * (y0 + y1) / 2.0;
    }

    Ok(RocCurve { points, auc })
}

/// Full evaluation of probability scores against ground truth at a fixed
/// decision threshold (fake iff `score >= threshold`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub hter: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub roc: Vec<(f64, f64)>,
    pub auc: f64,
}

pub fn evaluate(scores: &[f64], labels: &[Label], threshold: f64) -> Result<EvalReport> {
    let predicted: Vec<Label> = scores
        .iter()
        .map(|&s| {
            if s >= threshold {
                Label::Fake
            } else {
                Label::Natural
            }
        })
        .collect();
    let counts = ConfusionCounts::from_predictions(&predicted, labels);
    let roc = roc_auc(scores, labels)?;
    Ok(EvalReport {
        threshold,
        counts,
        hter: hter(&counts)?,
        fpr: counts.false_positive_rate()?,
        fnr: counts.false_negative_rate()?,
        roc: roc.points,
        auc: roc.auc,
    })
}

/// Seeded shuffle into `k` near-equal disjoint folds covering `0..n`.
pub fn k_fold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n < k {
        return Err(Error::BadFoldCount { k, n });
    }
    let groups: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    k_fold_split_grouped(&groups, k, seed)
}

/// Fold split that keeps each index group intact (used to keep an image
/// and its colorized twin in the same fold). Groups are shuffled with the
/// seed and dealt round-robin.
pub fn k_fold_split_grouped(groups: &[Vec<usize>], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n: usize = groups.iter().map(|g| g.len()).sum();
    if k < 2 || groups.len() < k {
        return Err(Error::BadFoldCount { k, n });
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (slot, &g) in order.iter().enumerate() {
        folds[slot % k].extend(groups[g].iter().copied());
    }
    Ok(folds)
}

/// HTER as a function of the decision threshold, evaluated on the grid
/// `0.00, 0.01, ..., 1.00`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweep {
    /// 101 `(threshold, hter)` points.
    pub curve: Vec<(f64, f64)>,
    pub best_threshold: f64,
    pub best_hter: f64,
}

pub fn threshold_sweep(scores: &[f64], labels: &[Label]) -> Result<ThresholdSweep> {
    let mut curve = Vec::with_capacity(101);
    let mut best_threshold = 0.0;
    let mut best_hter = f64::INFINITY;
    for step in 0..=100u32 {
        let t = step as f64 / 100.0;
        let predicted: Vec<Label> = scores
            .iter()
            .map(|&s| if s >= t { Label::Fake } else { Label::Natural })
            .collect();
        let counts = ConfusionCounts::from_predictions(&predicted, labels);
        let h = hter(&counts)?;
        if h < best_hter {
            best_hter = h;
            best_threshold = t;
        }
        curve.push((t, h));
    }
    Ok(ThresholdSweep {
        curve,
        best_threshold,
        best_hter,
    })
}

/// Mean of per-fold optimal thresholds, the cross-validated selection rule.
pub fn average_thresholds(fold_optima: &[f64]) -> f64 {
    fold_optima.iter().sum::<f64>() / fold_optima.len() as f64
}

/// The default search grid `2^-6, 2^-5, ..., 2^6` used for both cost and
/// gamma.
pub fn default_param_grid() -> Vec<f64> {
    (-6..=6).map(|e| 2f64.powi(e)).collect()
}

/// One evaluated grid cell. A training failure marks the cell invalid
/// instead of aborting the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub c: f64,
    pub g: f64,
    pub hter: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_c: f64,
    pub best_g: f64,
    pub best_hter: f64,
    pub cells: Vec<GridCell>,
}

/// Trains one classifier per (c, g) cell and scores it on the validation
/// split by HTER of the raw decision boundary. When no validation set is
/// given, a seeded stratified 50/50 split of the training set is used.
/// Ties resolve to the lowest (c, g).
pub fn grid_search(
    train: &LabeledFeatures,
    validation: Option<&LabeledFeatures>,
    c_grid: &[f64],
    g_grid: &[f64],
    base: &SvmConfig,
    seed: u64,
) -> Result<GridSearchResult> {
    if c_grid.is_empty() || g_grid.is_empty() {
        return Err(Error::Config("parameter grids must be non-empty".into()));
    }
    train.validate_for_training()?;

    let split;
    let (fit_set, check_set): (&LabeledFeatures, &LabeledFeatures) = match validation {
        Some(v) => (train, v),
        None => {
            split = stratified_halves(train, seed);
            (&split.0, &split.1)
        }
    };
    fit_set.validate_for_training()?;

    let mut c_sorted = c_grid.to_vec();
    c_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut g_sorted = g_grid.to_vec();
    g_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let params: Vec<(f64, f64)> = c_sorted
        .iter()
        .flat_map(|&c| g_sorted.iter().map(move |&g| (c, g)))
        .collect();

    let cells: Vec<GridCell> = params
        .par_iter()
        .map(|&(c, g)| {
            let cfg = SvmConfig {
                c,
                gamma: g,
                ..*base
            };
            match cell_hter(fit_set, check_set, &cfg, seed) {
                Ok(h) => GridCell {
                    c,
                    g,
                    hter: Some(h),
                    error: None,
                },
                Err(e) => GridCell {
                    c,
                    g,
                    hter: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut best: Option<&GridCell> = None;
    for cell in &cells {
        if let Some(h) = cell.hter {
            if best.and_then(|b| b.hter).map(|bh| h < bh).unwrap_or(true) {
                best = Some(cell);
            }
        }
    }
    let best = best.ok_or_else(|| Error::Config("every grid cell failed".into()))?;

    Ok(GridSearchResult {
        best_c: best.c,
        best_g: best.g,
        best_hter: best.hter.unwrap(),
        cells,
    })
}

fn cell_hter(
    fit_set: &LabeledFeatures,
    check_set: &LabeledFeatures,
    cfg: &SvmConfig,
    seed: u64,
) -> Result<f64> {
    let model = train_svm(fit_set, cfg, seed)?;
    let predicted: Vec<Label> = check_set
        .features
        .iter()
        .map(|row| {
            model.decision_value(row).map(|d| {
                if d >= 0.0 {
                    Label::Fake
                } else {
                    Label::Natural
                }
            })
        })
        .collect::<Result<_>>()?;
    let counts = ConfusionCounts::from_predictions(&predicted, &check_set.labels);
    hter(&counts)
}

/// Seeded per-label 50/50 split so both halves contain both classes.
fn stratified_halves(data: &LabeledFeatures, seed: u64) -> (LabeledFeatures, LabeledFeatures) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first = LabeledFeatures::default();
    let mut second = LabeledFeatures::default();
    for label in [Label::Natural, Label::Fake] {
        let mut idx: Vec<usize> = (0..data.len())
            .filter(|&i| data.labels[i] == label)
            .collect();
        idx.shuffle(&mut rng);
        let half = idx.len() / 2;
        for (pos, &i) in idx.iter().enumerate() {
            let target = if pos < half { &mut first } else { &mut second };
            target.push(data.features[i].clone(), data.labels[i]);
        }
    }
    (first, second)
}
