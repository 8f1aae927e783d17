//! Exact ranking and thresholded classification metrics.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn check(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {i}")));
    }
    if let Some(i) = labels.iter().position(|&y| y > 1) {
        return Err(Error::Dataset(format!(
            "label {} at {i} is not binary",
            labels[i]
        )));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    Ok((positives, labels.len() - positives))
}

fn check_both(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    let (positives, negatives) = check(scores, labels)?;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass {
            positives,
            negatives,
        });
    }
    Ok((positives, negatives))
}

/// AUC as an exact fraction: `twice_wins / twice_pairs`, where `twice_wins`
/// counts each correctly ordered pair twice and each tied pair once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AucFraction {
    pub twice_wins: u64,
    pub twice_pairs: u64,
}

impl AucFraction {
    pub fn value(&self) -> f64 {
        self.twice_wins as f64 / self.twice_pairs as f64
    }
}

/// Rank-statistic AUC in `O(n log n)`, returned as an exact fraction.
///
/// Scores are sorted once; within each group of equal scores with `p`
/// positives and `q` negatives, every positive beats the negatives seen in
/// lower groups and ties with the `q` negatives of its own group.
pub fn auc_fraction(scores: &[f64], labels: &[u8]) -> Result<AucFraction> {
    let (n_pos, n_neg) = check_both(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    let mut twice_wins = 0u64;
    let mut negatives_below = 0u64;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        let (mut p, mut q) = (0u64, 0u64);
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            if labels[order[end]] == 1 {
                p += 1;
            } else {
                q += 1;
            }
            end += 1;
        }
        twice_wins += 2 * p * negatives_below + p * q;
        negatives_below += q;
        start = end;
    }
    Ok(AucFraction {
        twice_wins,
        twice_pairs: 2 * n_pos as u64 * n_neg as u64,
    })
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn exact_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    Ok(auc_fraction(scores, labels)?.value())
}

/// ROC curve as `(fpr, tpr)` points from `(0, 0)` to `(1, 1)`, one point per
/// distinct score in decreasing order.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64)>> {
    let (n_pos, n_neg) = check_both(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = order
            .get(k + 1)
            .is_none_or(|&next| scores[next] != scores[i]);
        if last_of_group {
            points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        }
    }
    Ok(points)
}

/// Confusion matrix for the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `2tp / (2tp + fp + fn)`, algebraically equal to the harmonic mean of
    /// positive precision and sensitivity; `0` when `tp = 0`.
    pub fn f1_pos(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if self.tp == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }

    /// Exact comparison of positive-class F1 via cross-multiplication.
    fn cmp_f1(&self, other: &Self) -> Ordering {
        let num = |c: &Self| 2 * c.tp as u128;
        let den = |c: &Self| (2 * c.tp + c.fp + c.fn_).max(1) as u128;
        (num(self) * den(other)).cmp(&(num(other) * den(self)))
    }
}

/// Predicts positive iff `score >= threshold`.
pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

/// Which of the four ratios had a zero denominator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degeneracy {
    pub precision_pos: bool,
    pub precision_neg: bool,
    pub sensitivity_pos: bool,
    pub sensitivity_neg: bool,
}

impl Degeneracy {
    pub fn any(&self) -> bool {
        self.precision_pos || self.precision_neg || self.sensitivity_pos || self.sensitivity_neg
    }
}

/// Per-class precision and sensitivity plus positive F1.
///
/// A `0/0` ratio is reported as `0` and flagged in `degenerate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision_pos: f64,
    pub precision_neg: f64,
    pub sensitivity_pos: f64,
    pub sensitivity_neg: f64,
    pub f1_pos: f64,
    pub degenerate: Degeneracy,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn class_metrics(c: &ConfusionCounts) -> ClassMetrics {
    let (precision_pos, dpp) = ratio(c.tp, c.tp + c.fp);
    let (precision_neg, dpn) = ratio(c.tn, c.tn + c.fn_);
    let (sensitivity_pos, dsp) = ratio(c.tp, c.tp + c.fn_);
    let (sensitivity_neg, dsn) = ratio(c.tn, c.tn + c.fp);
    ClassMetrics {
        precision_pos,
        precision_neg,
        sensitivity_pos,
        sensitivity_neg,
        f1_pos: c.f1_pos(),
        degenerate: Degeneracy {
            precision_pos: dpp,
            precision_neg: dpn,
            sensitivity_pos: dsp,
            sensitivity_neg: dsn,
        },
    }
}

/// Outcome of the F1 threshold search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub threshold: f64,
    pub f1_at_threshold: f64,
    pub candidates_evaluated: usize,
}

/// Picks the threshold maximizing positive-class F1 on validation scores.
///
/// Candidates are `min − 1`, every midpoint between consecutive distinct
/// sorted scores, and `max + 1`. Among equal F1 the smallest candidate wins.
pub fn select_threshold(scores: &[f64], labels: &[u8]) -> Result<ThresholdResult> {
    let (n_pos, n_neg) = check_both(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));

    // Sweep upward: at a threshold just below group g, every sample in
    // groups ≥ g is predicted positive.
    let mut best_counts = ConfusionCounts {
        tp: n_pos,
        fp: n_neg,
        tn: 0,
        fn_: 0,
    };
    let mut best_threshold = scores[order[0]] - 1.0;
    let mut current = best_counts;
    let mut evaluated = 1;
    let mut k = 0;
    while k < order.len() {
        let value = scores[order[k]];
        while k < order.len() && scores[order[k]] == value {
            if labels[order[k]] == 1 {
                current.tp -= 1;
                current.fn_ += 1;
            } else {
                current.fp -= 1;
                current.tn += 1;
            }
            k += 1;
        }
        let threshold = match order.get(k) {
            Some(&next) => value + (scores[next] - value) / 2.0,
            None => value + 1.0,
        };
        evaluated += 1;
        // strict improvement only: earlier (smaller) candidates win ties
        if current.cmp_f1(&best_counts) == Ordering::Greater {
            best_counts = current;
            best_threshold = threshold;
        }
    }
    Ok(ThresholdResult {
        threshold: best_threshold,
        f1_at_threshold: best_counts.f1_pos(),
        candidates_evaluated: evaluated,
    })
}

/// Fraction of samples whose `score >= threshold` prediction matches the label.
pub fn accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> f64 {
    let c = confusion(scores, labels, threshold);
    if c.total() == 0 {
        return 0.0;
    }
    (c.tp + c.tn) as f64 / c.total() as f64
}
