//! Seeded loss-function ablation.
//!
//! For every seed the data are generated and split once, then each arm (a
//! [`LossKind`]) is trained and evaluated on those same splits. Runs are
//! independent and executed in parallel; results are keyed by
//! `(seed, arm)` and reduced in sorted key order, so the summary does not
//! depend on completion order.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{gen_synthetic, stratified_split, SplitSpec, SynthConfig};
use crate::losses::LossKind;
use crate::report::{evaluate, EvalReport, ReportContext};
use crate::scorer::Architecture;
use crate::training::{train, TrainConfig};
use crate::trust::TrustConfig;
use crate::{Error, Result, TOOL_VERSION};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Stated in every summary.
pub const ABLATION_NOTE: &str = "Arms differ only in the fine-tuning loss (ce / pairwise / aucm) \
on identical synthetic splits per seed. This is a loss-function ablation standing in for an \
architecture ablation; no self-supervised pre-training stage is involved.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    /// `seed` is replaced per run.
    pub synth: SynthConfig,
    /// `seed` is replaced per run.
    pub split: SplitSpec,
    /// `arch.d` must match `synth.dim`.
    pub arch: Architecture,
    /// `loss` and `seed` are replaced per run.
    pub training: TrainConfig,
    pub arms: Vec<LossKind>,
    pub seeds: Vec<u64>,
    pub trust: TrustConfig,
}

impl AblationConfig {
    fn validate(&self) -> Result<()> {
        if self.seeds.len() < 2 {
            return Err(Error::Config(format!(
                "ablation needs at least 2 seeds, got {}",
                self.seeds.len()
            )));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Config("ablation seeds must be distinct".into()));
        }
        if self.arms.is_empty() {
            return Err(Error::Config("ablation needs at least one arm".into()));
        }
        let mut names: Vec<&str> = self.arms.iter().map(LossKind::name).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.arms.len() {
            return Err(Error::Config(
                "ablation arms must be distinct losses".into(),
            ));
        }
        if self.arch.input_dim() != self.synth.dim {
            return Err(Error::Dimension {
                expected: self.synth.dim,
                got: self.arch.input_dim(),
            });
        }
        Ok(())
    }
}

/// One `(seed, arm)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub seed: u64,
    pub arm: String,
    /// File name under which the full report is stored, when it exists.
    pub report_file: Option<String>,
    pub train_sha256: Option<String>,
    pub val_sha256: Option<String>,
    pub test_sha256: Option<String>,
    pub auc: Option<f64>,
    pub f1_pos: Option<f64>,
    pub positive_class_trust: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; `None` with fewer than two values.
    pub std: Option<f64>,
}

impl MeanStd {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() > 1)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub valid_seeds: usize,
    pub auc: Option<MeanStd>,
    pub f1_pos: Option<MeanStd>,
    pub positive_class_trust: Option<MeanStd>,
}

/// Head-to-head count over valid seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinCount {
    pub arm: String,
    pub versus: String,
    /// Seeds where `arm` has strictly higher positive-class trust.
    pub trust_wins: usize,
    /// Seeds where `arm` has strictly higher test AUC.
    pub auc_wins: usize,
    pub compared_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub schema_version: u32,
    pub tool_version: String,
    pub note: String,
    pub config: AblationConfig,
    pub runs: Vec<RunEntry>,
    /// Seeds with at least one failed arm; excluded from aggregates.
    pub invalid_seeds: Vec<u64>,
    pub arms: Vec<ArmSummary>,
    pub wins: Vec<WinCount>,
}

/// Summary plus the full per-run reports, keyed by `report_file`.
#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub summary: AblationSummary,
    pub reports: BTreeMap<String, EvalReport>,
}

pub fn report_file_name(arm: &str, seed: u64) -> String {
    format!("{arm}_seed{seed}.json")
}

fn run_seed(cfg: &AblationConfig, seed: u64) -> Vec<(usize, Result<EvalReport>)> {
    let data = gen_synthetic(&SynthConfig {
        seed,
        ..cfg.synth.clone()
    })
    .and_then(|ds| {
        stratified_split(
            &ds,
            &SplitSpec {
                seed,
                ..cfg.split.clone()
            },
        )
    });
    let (tr, va, te) = match data {
        Ok(splits) => splits,
        Err(e) => {
            let msg = e.to_string();
            return (0..cfg.arms.len())
                .map(|k| {
                    (
                        k,
                        Err(Error::Dataset(format!("data generation failed: {msg}"))),
                    )
                })
                .collect();
        }
    };
    cfg.arms
        .iter()
        .enumerate()
        .map(|(k, &loss)| {
            let tcfg = TrainConfig {
                loss,
                seed,
                ..cfg.training.clone()
            };
            let result = train(&tr, &va, &cfg.arch, &tcfg).and_then(|out| {
                evaluate(
                    &out.best_model,
                    &va,
                    &te,
                    &cfg.trust,
                    &ReportContext {
                        seed,
                        train: Some(&tr),
                        training: Some(&tcfg),
                        history: Some(&out.history),
                    },
                )
            });
            (k, result)
        })
        .collect()
}

/// Runs every `(seed, arm)` combination.
pub fn run_ablation(cfg: &AblationConfig) -> Result<AblationOutcome> {
    cfg.validate()?;
    let results: BTreeMap<(u64, usize), Result<EvalReport>> = cfg
        .seeds
        .par_iter()
        .flat_map_iter(|&seed| {
            run_seed(cfg, seed)
                .into_iter()
                .map(move |(k, r)| ((seed, k), r))
        })
        .collect();

    let mut runs = Vec::with_capacity(results.len());
    let mut reports = BTreeMap::new();
    let mut invalid_seeds = Vec::new();
    for ((seed, k), result) in results {
        let arm = cfg.arms[k].name().to_string();
        let entry = match result {
            Ok(report) => {
                let file = report_file_name(&arm, seed);
                let entry = RunEntry {
                    seed,
                    arm,
                    report_file: Some(file.clone()),
                    train_sha256: report.data.train.as_ref().map(|f| f.sha256.clone()),
                    val_sha256: Some(report.data.val.sha256.clone()),
                    test_sha256: Some(report.data.test.sha256.clone()),
                    auc: Some(report.metrics.auc),
                    f1_pos: Some(report.metrics.f1_pos),
                    positive_class_trust: Some(report.trust.positive_class_trust),
                    error: None,
                };
                reports.insert(file, report);
                entry
            }
            Err(e) => {
                if invalid_seeds.last() != Some(&seed) {
                    invalid_seeds.push(seed);
                }
                RunEntry {
                    seed,
                    arm,
                    report_file: None,
                    train_sha256: None,
                    val_sha256: None,
                    test_sha256: None,
                    auc: None,
                    f1_pos: None,
                    positive_class_trust: None,
                    error: Some(e.to_string()),
                }
            }
        };
        runs.push(entry);
    }

    let valid = |r: &&RunEntry| !invalid_seeds.contains(&r.seed);
    let arms = cfg
        .arms
        .iter()
        .map(|arm| {
            let mine: Vec<&RunEntry> = runs
                .iter()
                .filter(valid)
                .filter(|r| r.arm == arm.name())
                .collect();
            let col = |f: fn(&RunEntry) -> Option<f64>| {
                MeanStd::of(&mine.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            ArmSummary {
                arm: arm.name().to_string(),
                valid_seeds: mine.len(),
                auc: col(|r| r.auc),
                f1_pos: col(|r| r.f1_pos),
                positive_class_trust: col(|r| r.positive_class_trust),
            }
        })
        .collect();

    let mut wins = Vec::new();
    for a in &cfg.arms {
        for b in &cfg.arms {
            if a == b {
                continue;
            }
            let mut w = WinCount {
                arm: a.name().to_string(),
                versus: b.name().to_string(),
                trust_wins: 0,
                auc_wins: 0,
                compared_seeds: 0,
            };
            for &seed in cfg.seeds.iter().filter(|s| !invalid_seeds.contains(s)) {
                let get = |name: &str| runs.iter().find(|r| r.seed == seed && r.arm == name);
                if let (Some(ra), Some(rb)) = (get(a.name()), get(b.name())) {
                    w.compared_seeds += 1;
                    w.trust_wins += usize::from(ra.positive_class_trust > rb.positive_class_trust);
                    w.auc_wins += usize::from(ra.auc > rb.auc);
                }
            }
            wins.push(w);
        }
    }

    Ok(AblationOutcome {
        summary: AblationSummary {
            schema_version: SUMMARY_SCHEMA_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            note: ABLATION_NOTE.to_string(),
            config: cfg.clone(),
            runs,
            invalid_seeds,
            arms,
            wins,
        },
        reports,
    })
}

impl AblationSummary {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn arm(&self, name: &str) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == name)
    }

    pub fn wins(&self, arm: &str, versus: &str) -> Option<&WinCount> {
        self.wins
            .iter()
            .find(|w| w.arm == arm && w.versus == versus)
    }
}
