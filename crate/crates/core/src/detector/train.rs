//! Training loop shared by the fused model and the single-feature columns.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::model::{ArchConfig, BranchDetector, FusedDetector, FusedModel, SingleModel, Trainable};
use super::normalize::NormalizerSet;
use super::sampling::{balanced_batches, compute_sample_weights, shuffled_batches, CellWeight};
use super::{FeatureTable, Label};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::eval::balanced_accuracy;
use crate::features::FeatureSet;
use crate::nn::network::weighted_cross_entropy;
use crate::nn::{early_stop_check, OptimizerKind, PlateauScheduler};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub arch: ArchConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            early_stop_patience: 10,
            batch_size: 128,
            lr: 1e-4,
            plateau_factor: 0.1,
            plateau_patience: 5,
            min_lr: 1e-7,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            arch: ArchConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.max_epochs > 0
            && self.early_stop_patience > 0
            && self.batch_size >= 2
            && self.lr > 0.0
            && self.plateau_factor > 0.0
            && self.plateau_patience > 0
            && self.min_lr > 0.0;
        if !positive {
            return Err(Error::InvalidArgument("training parameters must be positive".into()));
        }
        if self.early_stop_patience >= self.max_epochs {
            return Err(Error::InvalidArgument("early-stop patience must be below max_epochs".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// Equal REAL/FAKE counts per batch, unit sample weights.
    BatchBalanced,
    /// Shuffled batches with per-sample weights `w(D, L)`.
    SampleWeighted,
}

impl std::str::FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "A" | "batch_balanced" => Ok(TrainingMode::BatchBalanced),
            "b" | "B" | "sample_weighted" => Ok(TrainingMode::SampleWeighted),
            _ => Err(Error::Unknown {
                kind: "training mode",
                name: s.to_string(),
            }),
        }
    }
}

/// Training exposure of one `(dataset, label)` cell during an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellLog {
    pub dataset: String,
    pub label: Label,
    pub rows_seen: usize,
    pub weight_sum: f64,
    pub weighted_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_balanced_accuracy: f64,
    pub batches: usize,
    /// Rows seen per class (REAL, FAKE).
    pub exposure: [usize; 2],
    pub cells: Vec<CellLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub model: String,
    pub mode: TrainingMode,
    pub cell_weights: Vec<CellWeight>,
    pub val_weights: Vec<CellWeight>,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

fn label_ids(labels: &[Label]) -> Vec<usize> {
    labels.iter().map(|l| l.index()).collect()
}

fn require_both_classes(table: &FeatureTable, what: &str) -> Result<()> {
    let c = table.class_counts();
    for (i, &n) in c.iter().enumerate() {
        if n == 0 {
            return Err(Error::MissingClass(format!("{} in {what} split", Label::from_index(i))));
        }
    }
    Ok(())
}

fn fit<M: Trainable>(
    mut model: M,
    name: &str,
    train: &FeatureTable,
    dev: &FeatureTable,
    config: &TrainConfig,
    mode: TrainingMode,
) -> Result<(M, NormalizerSet, TrainLog)> {
    config.validate()?;
    require_both_classes(train, "train")?;
    require_both_classes(dev, "dev")?;
    let sets = model.sets();
    let normalizers = NormalizerSet::fit(train, &sets)?;
    let x_train = normalizers.apply(train, &sets)?;
    let x_dev = normalizers.apply(dev, &sets)?;
    let y_train = label_ids(&train.labels);
    let y_dev = label_ids(&dev.labels);

    let weighting = compute_sample_weights(&train.datasets, &train.labels)?;
    let train_weights = match mode {
        TrainingMode::BatchBalanced => vec![1.0; train.len()],
        TrainingMode::SampleWeighted => weighting.per_sample.clone(),
    };
    // Validation loss is class-balanced in mode A and uses w(D, L) of the dev
    // split in mode B.
    let val_weighting = match mode {
        TrainingMode::BatchBalanced => compute_sample_weights(&vec![String::from("*"); dev.len()], &dev.labels)?,
        TrainingMode::SampleWeighted => compute_sample_weights(&dev.datasets, &dev.labels)?,
    };

    let mut optimizers: Vec<_> = model.networks().iter().map(|_| config.optimizer.build()).collect();
    let mut scheduler = PlateauScheduler::new(config.lr, config.plateau_factor, config.plateau_patience, config.min_lr);
    let mut lr = config.lr;
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, M)> = None;
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        let batch_seed = derive_seed(config.seed, epoch as u64);
        let batches = match mode {
            TrainingMode::BatchBalanced => balanced_batches(&train.labels, config.batch_size, batch_seed)?,
            TrainingMode::SampleWeighted => shuffled_batches(train.len(), config.batch_size, batch_seed),
        };
        let mut cells: BTreeMap<(String, Label), CellLog> = BTreeMap::new();
        let mut exposure = [0usize; 2];
        let mut loss_sum = 0.0;
        for (b, rows) in batches.iter().enumerate() {
            let inputs: Vec<Array2<f64>> = x_train.iter().map(|x| x.select(Axis(0), rows)).collect();
            let views: Vec<_> = inputs.iter().map(|a| a.view()).collect();
            let labels: Vec<usize> = rows.iter().map(|&i| y_train[i]).collect();
            let weights: Vec<f64> = rows.iter().map(|&i| train_weights[i]).collect();
            let step_seed = derive_seed(config.seed, ((epoch as u64) << 32) | b as u64);
            let step = model.loss_and_grad(&views, &labels, &weights, step_seed)?;
            if !step.loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    msg: format!(
                        "{name}: non-finite training loss in batch {b} at lr {lr:e}; validation history {history:?}"
                    ),
                });
            }
            loss_sum += step.loss;
            for (k, &i) in rows.iter().enumerate() {
                exposure[y_train[i]] += 1;
                let cell = cells
                    .entry((train.datasets[i].clone(), train.labels[i]))
                    .or_insert_with(|| CellLog {
                        dataset: train.datasets[i].clone(),
                        label: train.labels[i],
                        rows_seen: 0,
                        weight_sum: 0.0,
                        weighted_loss: 0.0,
                    });
                cell.rows_seen += 1;
                cell.weight_sum += weights[k];
                cell.weighted_loss += weights[k] * step.per_sample[k];
            }
            for (((net, grads), cache), opt) in model
                .networks_mut()
                .into_iter()
                .zip(&step.grads)
                .zip(&step.caches)
                .zip(optimizers.iter_mut())
            {
                net.update_running_stats(cache);
                opt.step(&mut net.params, grads, lr);
            }
        }

        let dev_views: Vec<_> = x_dev.iter().map(|a| a.view()).collect();
        let probs = model.predict_proba(&dev_views)?;
        let (val_loss, _) = weighted_cross_entropy(&probs, &y_dev, &val_weighting.per_sample)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                msg: format!("{name}: non-finite validation loss at lr {lr:e}; history {history:?}"),
            });
        }
        let preds: Vec<Label> = probs.rows().into_iter().map(|r| Label::from_probs(r[0], r[1])).collect();
        let val_bacc = balanced_accuracy(&preds, &dev.labels)?;
        epochs.push(EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / batches.len() as f64,
            val_loss,
            val_balanced_accuracy: val_bacc,
            batches: batches.len(),
            exposure,
            cells: cells.into_values().collect(),
        });
        if best.as_ref().is_none_or(|(_, v, _)| val_loss < *v) {
            best = Some((epoch, val_loss, model.clone()));
        }
        history.push(val_loss);
        lr = scheduler.step(val_loss).0;
        if early_stop_check(&history, config.early_stop_patience) {
            stopped_early = true;
            break;
        }
    }

    let (best_epoch, best_val_loss, best_model) = best.expect("at least one epoch");
    let log = TrainLog {
        model: name.to_string(),
        mode,
        cell_weights: weighting.cells,
        val_weights: val_weighting.cells,
        epochs,
        best_epoch,
        best_val_loss,
        stopped_early,
    };
    Ok((best_model, normalizers, log))
}

/// End-to-end training of the three branches and the fusion head under one loss.
pub fn train_fused(train: &FeatureTable, dev: &FeatureTable, config: &TrainConfig, mode: TrainingMode) -> Result<(FusedDetector, TrainLog)> {
    let model = FusedModel::standard(&config.arch, config.seed)?;
    let (model, normalizers, log) = fit(model, "fused", train, dev, config, mode)?;
    Ok((FusedDetector { model, normalizers }, log))
}

/// Trains one feature set's full column, classification head included.
pub fn train_single_branch(
    set: FeatureSet,
    train: &FeatureTable,
    dev: &FeatureTable,
    config: &TrainConfig,
    mode: TrainingMode,
) -> Result<(BranchDetector, TrainLog)> {
    let model = SingleModel::new(set, &config.arch, derive_seed(config.seed, 100 + set as u64))?;
    let (model, mut normalizers, log) = fit(model, set.name(), train, dev, config, mode)?;
    let normalizer = normalizers.normalizers.remove(&set).expect("fitted for the model's set");
    Ok((BranchDetector { model, normalizer }, log))
}

/// Trains any [`Trainable`] model with the shared recipe.
pub fn train_model<M: Trainable>(
    model: M,
    name: &str,
    train: &FeatureTable,
    dev: &FeatureTable,
    config: &TrainConfig,
    mode: TrainingMode,
) -> Result<(M, NormalizerSet, TrainLog)> {
    fit(model, name, train, dev, config, mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            early_stop_patience: 100,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mode_names() {
        assert_eq!("a".parse::<TrainingMode>().unwrap(), TrainingMode::BatchBalanced);
        assert_eq!("sample_weighted".parse::<TrainingMode>().unwrap(), TrainingMode::SampleWeighted);
    }
}
