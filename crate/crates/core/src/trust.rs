//! Question-answer trust.
//!
//! Raw scores are first mapped to a confidence-like value `p̂ ∈ [0, 1]`
//! anchored at the decision threshold `t`: scores below `t` land in
//! `[0, 0.5)`, scores at or above `t` in `[0.5, 1]`, each side rescaled
//! linearly between `t` and the calibration split's extreme score.
//!
//! For a sample with predicted answer `y`, true answer `z` and confidence
//! `C` in its own answer, the question-answer trust is `C^α` when `y = z`
//! and `(1 − C)^β` otherwise. The positive-class trust score of a model is
//! the mean over test samples with `z = 1`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Reward (`alpha`) and penalty (`beta`) exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for TrustConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl TrustConfig {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be a positive real, got {v}"
                )));
            }
        }
        Ok(Self { alpha, beta })
    }
}

/// Threshold and score extrema of the calibration split, with
/// `s_min < threshold < s_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceCalibration {
    pub threshold: f64,
    pub s_min: f64,
    pub s_max: f64,
}

impl ConfidenceCalibration {
    /// Checks the strict ordering; used when a calibration comes from outside.
    pub fn new(s_min: f64, threshold: f64, s_max: f64) -> Result<Self> {
        if !(s_min.is_finite() && threshold.is_finite() && s_max.is_finite()) {
            return Err(Error::NonFinite("calibration bounds".into()));
        }
        if !(s_min < threshold && threshold < s_max) {
            return Err(Error::Config(format!(
                "calibration requires s_min < t < s_max, got ({s_min}, {threshold}, {s_max})"
            )));
        }
        Ok(Self {
            threshold,
            s_min,
            s_max,
        })
    }
}

/// Takes the extrema of the calibration scores around `threshold`.
///
/// A side with no extent (every score on the other side, or on `t`) is
/// mirrored from the other side; if neither side has extent both are set to
/// one unit.
pub fn fit_calibration(scores: &[f64], threshold: f64) -> Result<ConfidenceCalibration> {
    if scores.is_empty() {
        return Err(Error::Empty);
    }
    if !threshold.is_finite() {
        return Err(Error::NonFinite("threshold".into()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("calibration score {i}")));
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (s_min, s_max) = match (lo < threshold, hi > threshold) {
        (true, true) => (lo, hi),
        (true, false) => (lo, threshold + (threshold - lo)),
        (false, true) => (threshold - (hi - threshold), hi),
        (false, false) => (threshold - 1.0, threshold + 1.0),
    };
    ConfidenceCalibration::new(s_min, threshold, s_max)
}

/// Piecewise-linear map of a raw score to `[0, 1]`, clamped outside the
/// calibration range. Equals `0.5` exactly when `s == t`.
pub fn normalized_score(s: f64, calib: &ConfidenceCalibration) -> f64 {
    let t = calib.threshold;
    if s >= t {
        0.5 + 0.5 * ((s - t) / (calib.s_max - t)).min(1.0)
    } else {
        0.5 * ((s - calib.s_min) / (t - calib.s_min)).max(0.0)
    }
}

/// Per-sample trust record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRecord {
    pub idx: usize,
    pub pred: u8,
    pub truth: u8,
    pub confidence: f64,
    pub qa_trust: f64,
}

/// Trust of one answer given its normalized score `p̂` and the true label.
pub fn qa_trust(idx: usize, p_hat: f64, truth: u8, cfg: &TrustConfig) -> TrustRecord {
    let pred = u8::from(p_hat >= 0.5);
    let confidence = if pred == 1 { p_hat } else { 1.0 - p_hat };
    let qa_trust = if pred == truth {
        confidence.powf(cfg.alpha)
    } else {
        (1.0 - confidence).powf(cfg.beta)
    };
    TrustRecord {
        idx,
        pred,
        truth,
        confidence,
        qa_trust,
    }
}

/// Records for every sample, in input order.
pub fn trust_records(
    scores: &[f64],
    labels: &[u8],
    calib: &ConfidenceCalibration,
    cfg: &TrustConfig,
) -> Result<Vec<TrustRecord>> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {i}")));
    }
    Ok(scores
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (&s, &z))| qa_trust(i, normalized_score(s, calib), z, cfg))
        .collect())
}

/// Mean trust per class and overall, in record order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustSummary {
    pub positive_class_trust: f64,
    /// `None` when there are no negatives.
    pub negative_class_trust: Option<f64>,
    pub overall_trust: f64,
}

fn mean_where(records: &[TrustRecord], keep: impl Fn(&TrustRecord) -> bool) -> Option<f64> {
    let (sum, n) = records
        .iter()
        .filter(|r| keep(r))
        .fold((0.0, 0usize), |(s, n), r| (s + r.qa_trust, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn summarize(records: &[TrustRecord]) -> Result<TrustSummary> {
    let positive_class_trust = mean_where(records, |r| r.truth == 1).ok_or(Error::NoPositives)?;
    Ok(TrustSummary {
        positive_class_trust,
        negative_class_trust: mean_where(records, |r| r.truth == 0),
        overall_trust: mean_where(records, |_| true).unwrap_or(0.0),
    })
}

/// Mean question-answer trust over the test samples whose true label is positive.
pub fn positive_class_trust(
    scores: &[f64],
    labels: &[u8],
    calib: &ConfidenceCalibration,
    cfg: &TrustConfig,
) -> Result<f64> {
    let records = trust_records(scores, labels, calib, cfg)?;
    Ok(summarize(&records)?.positive_class_trust)
}
