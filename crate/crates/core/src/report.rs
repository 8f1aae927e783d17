//! Evaluation reports.
//!
//! The threshold is chosen on the validation split (F1-optimal), confidence
//! calibration uses the validation extrema, and every metric and trust value
//! is computed on the test split.

use serde::{Deserialize, Serialize};

use crate::dataio::{DatasetFingerprint, LabeledDataset};
use crate::metrics::{self, Degeneracy};
use crate::scorer::{Architecture, ScorerModel};
use crate::training::{TrainConfig, TrainHistory};
use crate::trust::{self, TrustConfig, TrustRecord};
use crate::{Error, Result, TOOL_VERSION};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub data: DataBlock,
    pub config: ConfigEcho,
    pub metrics: MetricsBlock,
    pub trust: TrustBlock,
    pub history: Option<HistorySummary>,
    /// Test-split ROC points `(fpr, tpr)`.
    pub roc: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    pub train: Option<DatasetFingerprint>,
    pub val: DatasetFingerprint,
    pub test: DatasetFingerprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigEcho {
    pub architecture: Architecture,
    pub training: Option<TrainConfig>,
}

/// Test-split metrics at the validation-selected threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsBlock {
    pub auc: f64,
    pub threshold: f64,
    pub precision_pos: f64,
    pub precision_neg: f64,
    pub sensitivity_pos: f64,
    pub sensitivity_neg: f64,
    pub f1_pos: f64,
    pub degenerate: Degeneracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustBlock {
    pub alpha: f64,
    pub beta: f64,
    pub threshold: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub positive_class_trust: f64,
    /// Diagnostic extra: mean trust over test negatives.
    pub extra_negative_class_trust: Option<f64>,
    /// Diagnostic extra: mean trust over every test sample.
    pub extra_overall_trust: f64,
    pub records: Vec<TrustRecord>,
}

impl TrustBlock {
    pub fn calibration(&self) -> Result<trust::ConfidenceCalibration> {
        trust::ConfidenceCalibration::new(self.s_min, self.threshold, self.s_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistorySummary {
    pub best_epoch: usize,
    pub epochs: usize,
}

impl From<&TrainHistory> for HistorySummary {
    fn from(h: &TrainHistory) -> Self {
        Self {
            best_epoch: h.best_epoch,
            epochs: h.epochs.len(),
        }
    }
}

/// Optional context echoed into the report.
#[derive(Debug, Clone, Default)]
pub struct ReportContext<'a> {
    pub seed: u64,
    pub train: Option<&'a LabeledDataset>,
    pub training: Option<&'a TrainConfig>,
    pub history: Option<&'a TrainHistory>,
}

fn require_split(ds: &LabeledDataset, name: &str) -> Result<()> {
    ds.require_both_classes().map_err(|_| {
        Error::Dataset(format!(
            "{name} split must contain both classes (positives: {}, negatives: {})",
            ds.n_positive(),
            ds.n_negative()
        ))
    })
}

/// Scores both splits with `model` and assembles the report.
pub fn evaluate(
    model: &ScorerModel,
    val: &LabeledDataset,
    test: &LabeledDataset,
    trust_cfg: &TrustConfig,
    ctx: &ReportContext<'_>,
) -> Result<EvalReport> {
    require_split(val, "validation")?;
    require_split(test, "test")?;
    let val_scores = model.forward_checked(val.features(), val.dim())?;
    let test_scores = model.forward_checked(test.features(), test.dim())?;
    evaluate_scores(
        &val_scores,
        val,
        &test_scores,
        test,
        model.arch().clone(),
        trust_cfg,
        ctx,
    )
}

/// Same as [`evaluate`] for precomputed scores.
pub fn evaluate_scores(
    val_scores: &[f64],
    val: &LabeledDataset,
    test_scores: &[f64],
    test: &LabeledDataset,
    architecture: Architecture,
    trust_cfg: &TrustConfig,
    ctx: &ReportContext<'_>,
) -> Result<EvalReport> {
    require_split(val, "validation")?;
    require_split(test, "test")?;
    let chosen = metrics::select_threshold(val_scores, val.labels())?;
    let threshold = chosen.threshold;

    let counts = metrics::confusion(test_scores, test.labels(), threshold);
    let cm = metrics::class_metrics(&counts);
    let auc = metrics::exact_auc(test_scores, test.labels())?;

    let calib = trust::fit_calibration(val_scores, threshold)?;
    let records = trust::trust_records(test_scores, test.labels(), &calib, trust_cfg)?;
    let summary = trust::summarize(&records)?;

    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        seed: ctx.seed,
        data: DataBlock {
            train: ctx.train.map(LabeledDataset::fingerprint),
            val: val.fingerprint(),
            test: test.fingerprint(),
        },
        config: ConfigEcho {
            architecture,
            training: ctx.training.cloned(),
        },
        metrics: MetricsBlock {
            auc,
            threshold,
            precision_pos: cm.precision_pos,
            precision_neg: cm.precision_neg,
            sensitivity_pos: cm.sensitivity_pos,
            sensitivity_neg: cm.sensitivity_neg,
            f1_pos: cm.f1_pos,
            degenerate: cm.degenerate,
        },
        trust: TrustBlock {
            alpha: trust_cfg.alpha,
            beta: trust_cfg.beta,
            threshold,
            s_min: calib.s_min,
            s_max: calib.s_max,
            positive_class_trust: summary.positive_class_trust,
            extra_negative_class_trust: summary.negative_class_trust,
            extra_overall_trust: summary.overall_trust,
            records,
        },
        history: ctx.history.map(HistorySummary::from),
        roc: metrics::roc_curve(test_scores, test.labels())?,
    })
}

impl EvalReport {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported report schema version {}",
                report.schema_version
            )));
        }
        Ok(report)
    }
}
