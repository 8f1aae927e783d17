//! Training objectives on raw scores.
//!
//! * [`ce_loss`]: logistic cross-entropy.
//! * [`pairwise_sq_hinge`]: mean squared hinge over all positive/negative pairs.
//! * [`aucm_objective`]: the AUC min-max margin objective
//!
//!   ```text
//!   F = mean_{y=1} (s − a)² + mean_{y=0} (s − b)²
//!       + 2·α·(m + mean_{y=0} s − mean_{y=1} s) − α²
//!   ```
//!
//!   minimized over the scorer parameters and `(a, b)` and maximized over
//!   `α ≥ 0`. [`pesg_step`] performs one projected primal-dual update.

use serde::{Deserialize, Serialize};

use crate::scorer::ScorerModel;
use crate::{Error, Result};

pub const DEFAULT_MARGIN: f64 = 1.0;

/// Which objective to train with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossKind {
    Ce,
    Pairwise { margin: f64 },
    Aucm { margin: f64 },
}

impl LossKind {
    /// Parses the config spelling `ce`, `pairwise` or `aucm`.
    pub fn from_name(name: &str, margin: f64) -> Result<Self> {
        let kind = match name {
            "ce" => LossKind::Ce,
            "pairwise" => LossKind::Pairwise { margin },
            "aucm" => LossKind::Aucm { margin },
            other => {
                return Err(Error::Config(format!(
                    "unknown loss {other:?} (expected ce, pairwise or aucm)"
                )))
            }
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::Pairwise { .. } => "pairwise",
            LossKind::Aucm { .. } => "aucm",
        }
    }

    pub fn margin(&self) -> Option<f64> {
        match self {
            LossKind::Ce => None,
            LossKind::Pairwise { margin } | LossKind::Aucm { margin } => Some(*margin),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.margin() {
            Some(m) if !(m.is_finite() && m > 0.0) => Err(Error::Config(format!(
                "margin must be a positive real, got {m}"
            ))),
            _ => Ok(()),
        }
    }
}

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::Empty);
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
    Ok(())
}

fn class_counts(labels: &[u8]) -> Result<(usize, usize)> {
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass {
            positives,
            negatives,
        });
    }
    Ok((positives, negatives))
}

fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic loss `softplus(s) − y·s` and its gradient `(σ(s) − y) / n`.
pub fn ce_loss(scores: &[f64], labels: &[u8]) -> Result<(f64, Vec<f64>)> {
    check_inputs(scores, labels)?;
    let n = scores.len() as f64;
    let mut total = 0.0;
    let grad = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let y = f64::from(y);
            total += softplus(s) - y * s;
            (sigmoid(s) - y) / n
        })
        .collect();
    Ok((total / n, grad))
}

/// `(1/(n₊n₋)) Σ_{pos i} Σ_{neg j} max(0, m − (s_i − s_j))²` and its gradient.
pub fn pairwise_sq_hinge(scores: &[f64], labels: &[u8], margin: f64) -> Result<(f64, Vec<f64>)> {
    check_inputs(scores, labels)?;
    let (n_pos, n_neg) = class_counts(labels)?;
    let pairs = (n_pos * n_neg) as f64;
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let mut value = 0.0;
    let mut grad = vec![0.0; scores.len()];
    for &i in &pos {
        for &j in &neg {
            let h = margin - (scores[i] - scores[j]);
            if h > 0.0 {
                value += h * h;
                let g = 2.0 * h / pairs;
                grad[i] -= g;
                grad[j] += g;
            }
        }
    }
    Ok((value / pairs, grad))
}

/// Primal-dual auxiliaries of the AUC min-max margin objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucMarginState {
    /// Tracks the mean positive score.
    pub a: f64,
    /// Tracks the mean negative score.
    pub b: f64,
    /// Dual variable, kept `≥ 0`.
    pub alpha_dual: f64,
    pub margin: f64,
    /// Positive prevalence of the training split. Reporting only.
    pub prevalence: f64,
}

impl AucMarginState {
    /// Starts at `a = b = α = 0`.
    pub fn new(margin: f64, prevalence: f64) -> Result<Self> {
        if !(margin.is_finite() && margin > 0.0) {
            return Err(Error::Config(format!(
                "margin must be positive, got {margin}"
            )));
        }
        if !(prevalence > 0.0 && prevalence < 1.0) {
            return Err(Error::Config(format!(
                "prevalence must lie in (0, 1), got {prevalence}"
            )));
        }
        Ok(Self {
            a: 0.0,
            b: 0.0,
            alpha_dual: 0.0,
            margin,
            prevalence,
        })
    }

    /// State with explicit auxiliaries, for evaluating the objective at a point.
    pub fn at(a: f64, b: f64, alpha_dual: f64, margin: f64) -> Self {
        Self {
            a,
            b,
            alpha_dual,
            margin,
            prevalence: 0.5,
        }
    }
}

/// Value and every partial derivative of the AUC-M objective.
#[derive(Debug, Clone, PartialEq)]
pub struct AucmGradient {
    pub value: f64,
    pub d_scores: Vec<f64>,
    pub d_a: f64,
    pub d_b: f64,
    pub d_alpha: f64,
}

struct ClassMoments {
    n_pos: f64,
    n_neg: f64,
    mean_pos: f64,
    mean_neg: f64,
}

fn moments(scores: &[f64], labels: &[u8]) -> Result<ClassMoments> {
    check_inputs(scores, labels)?;
    let (n_pos, n_neg) = class_counts(labels)?;
    let (mut sum_pos, mut sum_neg) = (0.0, 0.0);
    for (&s, &y) in scores.iter().zip(labels) {
        if y == 1 {
            sum_pos += s;
        } else {
            sum_neg += s;
        }
    }
    Ok(ClassMoments {
        n_pos: n_pos as f64,
        n_neg: n_neg as f64,
        mean_pos: sum_pos / n_pos as f64,
        mean_neg: sum_neg / n_neg as f64,
    })
}

/// Evaluates the AUC-M objective at `(scores, a, b, α)`.
pub fn aucm_objective(scores: &[f64], labels: &[u8], state: &AucMarginState) -> Result<f64> {
    Ok(aucm_gradient(scores, labels, state)?.value)
}

/// Objective value plus gradients with respect to scores, `a`, `b` and `α`.
pub fn aucm_gradient(
    scores: &[f64],
    labels: &[u8],
    state: &AucMarginState,
) -> Result<AucmGradient> {
    if state.alpha_dual.is_nan() || state.alpha_dual < 0.0 {
        return Err(Error::Config(format!(
            "dual variable must be non-negative, got {}",
            state.alpha_dual
        )));
    }
    let mo = moments(scores, labels)?;
    let (a, b, alpha, m) = (state.a, state.b, state.alpha_dual, state.margin);
    let (mut sq_pos, mut sq_neg) = (0.0, 0.0);
    let d_scores = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            if y == 1 {
                sq_pos += (s - a) * (s - a);
                2.0 * (s - a - alpha) / mo.n_pos
            } else {
                sq_neg += (s - b) * (s - b);
                2.0 * (s - b + alpha) / mo.n_neg
            }
        })
        .collect();
    let gap = m + mo.mean_neg - mo.mean_pos;
    let value = sq_pos / mo.n_pos + sq_neg / mo.n_neg + 2.0 * alpha * gap - alpha * alpha;
    Ok(AucmGradient {
        value,
        d_scores,
        d_a: -2.0 * (mo.mean_pos - a),
        d_b: -2.0 * (mo.mean_neg - b),
        d_alpha: 2.0 * gap - 2.0 * alpha,
    })
}

/// Closed-form saddle point for fixed scores:
/// `a* = mean₊`, `b* = mean₋`, `α* = max(0, m + b* − a*)`.
pub fn aucm_inner_optimum(scores: &[f64], labels: &[u8], margin: f64) -> Result<(f64, f64, f64)> {
    let mo = moments(scores, labels)?;
    let alpha = (margin + mo.mean_neg - mo.mean_pos).max(0.0);
    Ok((mo.mean_pos, mo.mean_neg, alpha))
}

/// Min over `(a, b)`, max over `α ≥ 0` of the objective for fixed scores:
/// `(m + b* − a*)₊² + Var₊ + Var₋` with population variances.
pub fn aucm_saddle_value(scores: &[f64], labels: &[u8], margin: f64) -> Result<f64> {
    let (a, b, alpha) = aucm_inner_optimum(scores, labels, margin)?;
    let (mut var_pos, mut var_neg, mut n_pos, mut n_neg) = (0.0, 0.0, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        if y == 1 {
            var_pos += (s - a) * (s - a);
            n_pos += 1;
        } else {
            var_neg += (s - b) * (s - b);
            n_neg += 1;
        }
    }
    Ok(alpha * alpha + var_pos / n_pos as f64 + var_neg / n_neg as f64)
}

/// One primal-dual step on the auxiliaries only (frozen scorer).
///
/// Descends `(a, b)` with `lr_primal`, ascends `α` with `lr_dual`, then
/// projects `α ← max(0, α)`. All partials are taken at the pre-step point.
/// Returns the gradient so callers can push `d_scores` into the scorer.
pub fn pesg_dual_step(
    scores: &[f64],
    labels: &[u8],
    state: &mut AucMarginState,
    lr_primal: f64,
    lr_dual: f64,
) -> Result<AucmGradient> {
    check_rates(lr_primal, lr_dual)?;
    let g = aucm_gradient(scores, labels, state)?;
    let next = AucMarginState {
        a: state.a - lr_primal * g.d_a,
        b: state.b - lr_primal * g.d_b,
        alpha_dual: (state.alpha_dual + lr_dual * g.d_alpha).max(0.0),
        ..*state
    };
    if !(next.a.is_finite() && next.b.is_finite() && next.alpha_dual.is_finite()) {
        return Err(Error::NonFinite(format!(
            "auxiliary update (a={}, b={}, alpha={})",
            next.a, next.b, next.alpha_dual
        )));
    }
    *state = next;
    Ok(g)
}

fn check_rates(lr_primal: f64, lr_dual: f64) -> Result<()> {
    for (name, lr) in [("primal", lr_primal), ("dual", lr_dual)] {
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::Config(format!(
                "{name} learning rate must be finite and non-negative, got {lr}"
            )));
        }
    }
    Ok(())
}

/// One full primal-dual step: gradient descent on the scorer parameters and
/// `(a, b)`, projected gradient ascent on `α`. Returns the objective value at
/// the pre-step point.
///
/// On a non-finite gradient nothing is modified.
pub fn pesg_step(
    model: &mut ScorerModel,
    state: &mut AucMarginState,
    features: &[f64],
    labels: &[u8],
    lr_primal: f64,
    lr_dual: f64,
) -> Result<f64> {
    check_rates(lr_primal, lr_dual)?;
    let scores = model.forward(features)?;
    let mut next_state = *state;
    let g = pesg_dual_step(&scores, labels, &mut next_state, lr_primal, lr_dual)?;
    let grad = model.backward(features, &g.d_scores, false)?;
    model.descend(&grad.d_params, lr_primal)?;
    *state = next_state;
    Ok(g.value)
}
