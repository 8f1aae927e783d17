//! Minibatch training with best-validation checkpointing.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::LabeledDataset;
use crate::losses::{self, AucMarginState, LossKind};
use crate::metrics;
use crate::rng::seeded_epoch;
use crate::scorer::{Architecture, ScorerModel};
use crate::{Error, Result};

/// Optimization settings for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_primal: f64,
    /// Used by the AUC-M dual ascent only.
    pub lr_dual: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Ce,
            epochs: 200,
            batch_size: 64,
            lr_primal: 0.01,
            lr_dual: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch size must be at least 2 to hold both classes, got {}",
                self.batch_size
            )));
        }
        for (name, lr) in [("lr_primal", self.lr_primal), ("lr_dual", self.lr_dual)] {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be finite and non-negative, got {lr}"
                )));
            }
        }
        Ok(())
    }
}

/// Metrics recorded after each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the per-batch objective values, each taken before its update.
    pub train_loss: f64,
    /// Accuracy of the sign rule (`score >= 0` is positive).
    pub val_accuracy: f64,
    pub val_auc: f64,
    /// AUC-M auxiliaries at the end of the epoch.
    pub aucm_state: Option<AucMarginState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Earliest epoch with the highest validation accuracy.
    pub best_epoch: usize,
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best_model: ScorerModel,
    pub final_model: ScorerModel,
    pub history: TrainHistory,
}

/// Splits one epoch into batches that each hold both classes.
///
/// Each class is shuffled with a stream keyed by `(seed, epoch)`. The number of
/// batches `B` starts at `⌈n / batch_size⌉` and grows until every batch fits.
/// A class with at least `B` members is dealt out in contiguous chunks whose
/// sizes differ by at most one; a class with fewer members is oversampled,
/// batch `k` receiving member `k mod n_class` of its shuffled order.
pub fn stratified_batches(
    labels: &[u8],
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 {
        return Err(Error::Config(format!(
            "batch size {batch_size} cannot hold one sample of each class"
        )));
    }
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 1).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass {
            positives: pos.len(),
            negatives: neg.len(),
        });
    }
    let mut rng = seeded_epoch(seed, epoch);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let largest_chunk = |n_class: usize, n_batches: usize| n_class.div_ceil(n_batches).max(1);
    let mut n_batches = labels.len().div_ceil(batch_size);
    while largest_chunk(pos.len(), n_batches) + largest_chunk(neg.len(), n_batches) > batch_size {
        n_batches += 1;
    }

    let mut batches: Vec<Vec<usize>> = vec![Vec::new(); n_batches];
    for class in [&pos, &neg] {
        deal(class, &mut batches);
    }
    Ok(batches)
}

fn deal(members: &[usize], batches: &mut [Vec<usize>]) {
    let nb = batches.len();
    if members.len() < nb {
        for (k, batch) in batches.iter_mut().enumerate() {
            batch.push(members[k % members.len()]);
        }
        return;
    }
    let base = members.len() / nb;
    let extra = members.len() % nb;
    let mut start = 0;
    for (k, batch) in batches.iter_mut().enumerate() {
        let len = base + usize::from(k < extra);
        batch.extend_from_slice(&members[start..start + len]);
        start += len;
    }
}

fn gather(ds: &LabeledDataset, batch: &[usize]) -> (Vec<f64>, Vec<u8>) {
    let mut x = Vec::with_capacity(batch.len() * ds.dim());
    let mut y = Vec::with_capacity(batch.len());
    for &i in batch {
        x.extend_from_slice(ds.row(i));
        y.push(ds.labels()[i]);
    }
    (x, y)
}

/// Trains a freshly initialized scorer and keeps the parameters of the
/// epoch with the best validation accuracy.
///
/// CE and pairwise runs use plain gradient descent; AUC-M runs take one
/// [`losses::pesg_step`] per batch.
pub fn train(
    train_ds: &LabeledDataset,
    val_ds: &LabeledDataset,
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    train_ds.require_both_classes()?;
    val_ds.require_both_classes()?;
    for ds in [train_ds, val_ds] {
        if ds.dim() != arch.input_dim() {
            return Err(Error::Dimension {
                expected: arch.input_dim(),
                got: ds.dim(),
            });
        }
    }
    let mut model = ScorerModel::init(arch.clone(), cfg.seed)?;
    let mut aucm = match cfg.loss {
        LossKind::Aucm { margin } => {
            let prevalence = train_ds.n_positive() as f64 / train_ds.len() as f64;
            Some(AucMarginState::new(margin, prevalence)?)
        }
        _ => None,
    };

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ScorerModel)> = None;
    for epoch in 0..cfg.epochs {
        let batches = stratified_batches(train_ds.labels(), cfg.batch_size, cfg.seed, epoch)?;
        let mut loss_sum = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let diverged = |e: Error| Error::Diverged {
                epoch,
                batch: b,
                detail: e.to_string(),
            };
            let (x, y) = gather(train_ds, batch);
            let value = match (&cfg.loss, aucm.as_mut()) {
                (LossKind::Aucm { .. }, Some(state)) => {
                    losses::pesg_step(&mut model, state, &x, &y, cfg.lr_primal, cfg.lr_dual)
                        .map_err(diverged)?
                }
                (kind, _) => {
                    let scores = model.forward(&x).map_err(diverged)?;
                    let (value, d_scores) = match kind {
                        LossKind::Pairwise { margin } => {
                            losses::pairwise_sq_hinge(&scores, &y, *margin)
                        }
                        _ => losses::ce_loss(&scores, &y),
                    }
                    .map_err(diverged)?;
                    let grad = model.backward(&x, &d_scores, false).map_err(diverged)?;
                    model
                        .descend(&grad.d_params, cfg.lr_primal)
                        .map_err(diverged)?;
                    value
                }
            };
            if !value.is_finite() {
                return Err(diverged(Error::NonFinite(format!("loss value {value}"))));
            }
            loss_sum += value;
        }

        let val_scores = model
            .forward(val_ds.features())
            .map_err(|e| Error::Diverged {
                epoch,
                batch: batches.len(),
                detail: format!("validation scoring: {e}"),
            })?;
        let val_accuracy = metrics::accuracy(&val_scores, val_ds.labels(), 0.0);
        let val_auc = metrics::exact_auc(&val_scores, val_ds.labels())?;
        records.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches.len() as f64,
            val_accuracy,
            val_auc,
            aucm_state: aucm,
        });
        if best.as_ref().is_none_or(|(_, acc, _)| val_accuracy > *acc) {
            best = Some((epoch, val_accuracy, model.clone()));
        }
    }

    let (best_epoch, _, best_model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best_model,
        final_model: model,
        history: TrainHistory {
            epochs: records,
            best_epoch,
        },
    })
}
