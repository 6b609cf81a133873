use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{train, TrainConfig, TrainError};
use crate::models::{ModelConfig, SequenceExample};
use crate::tensor::OptimizerKind;
use crate::{par, seed};

/// Cross product of hyperparameter values; every dimension must be
/// non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpace {
    pub n_layers: Vec<usize>,
    pub hidden_size: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub optimizer: Vec<OptimizerKind>,
    pub dropout_p: Vec<f64>,
    pub lr: Vec<f64>,
    pub max_sequence_length: Vec<usize>,
}

impl GridSpace {
    /// The full search ranges for large-scale runs.
    pub fn full() -> Self {
        Self {
            n_layers: vec![1, 2, 3],
            hidden_size: vec![64, 128, 256, 512],
            batch_size: vec![16, 32, 64],
            optimizer: vec![OptimizerKind::Sgd, OptimizerKind::Adam, OptimizerKind::RmsProp],
            dropout_p: vec![0.1, 0.3, 0.5],
            lr: vec![1e-2, 1e-3, 1e-4],
            max_sequence_length: vec![9, 12, 15, 20],
        }
    }

    /// A single point taken from the given configs; extend dimensions from
    /// here for a desk-scale search.
    pub fn point(model: &ModelConfig, train: &TrainConfig) -> Self {
        Self {
            n_layers: vec![model.n_layers],
            hidden_size: vec![model.hidden_size],
            batch_size: vec![train.batch_size],
            optimizer: vec![train.optimizer],
            dropout_p: vec![model.dropout_p],
            lr: vec![train.lr],
            max_sequence_length: vec![train.max_sequence_length],
        }
    }

    pub fn size(&self) -> usize {
        self.n_layers.len()
            * self.hidden_size.len()
            * self.batch_size.len()
            * self.optimizer.len()
            * self.dropout_p.len()
            * self.lr.len()
            * self.max_sequence_length.len()
    }

    /// All combinations, last dimension varying fastest.
    pub fn combinations(&self, model: &ModelConfig, train: &TrainConfig) -> Vec<(ModelConfig, TrainConfig)> {
        let mut out = Vec::with_capacity(self.size());
        for &n_layers in &self.n_layers {
            for &hidden_size in &self.hidden_size {
                for &batch_size in &self.batch_size {
                    for &optimizer in &self.optimizer {
                        for &dropout_p in &self.dropout_p {
                            for &lr in &self.lr {
                                for &max_sequence_length in &self.max_sequence_length {
                                    let m = ModelConfig {
                                        n_layers,
                                        hidden_size,
                                        dropout_p,
                                        ..*model
                                    };
                                    let t = TrainConfig {
                                        batch_size,
                                        optimizer,
                                        lr,
                                        max_sequence_length,
                                        ..*train
                                    };
                                    out.push((m, t));
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub val_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Trains every combination (concurrently, each with a seed derived from
/// `(seed, trial index)`) and returns trials sorted by validation loss.
pub fn grid_search(
    model: &ModelConfig,
    base: &TrainConfig,
    space: &GridSpace,
    train_set: &[SequenceExample],
    val_set: &[SequenceExample],
    seed_value: u64,
) -> Result<Vec<TrialResult>, TrainError> {
    if space.size() == 0 {
        return Err(TrainError::EmptySpace);
    }
    let combos: Vec<(usize, (ModelConfig, TrainConfig))> =
        space.combinations(model, base).into_iter().enumerate().collect();
    let mut results = par::try_map(&combos, |(index, (m, t))| {
        let t = TrainConfig {
            seed: seed::derive(seed_value, *index as u64),
            ..*t
        };
        let (_, history) = train(*m, train_set, val_set, &t)?;
        log::info!("trial {index}: val loss {:.5}", history.best_val_loss);
        Ok::<_, TrainError>(TrialResult {
            index: *index,
            model: *m,
            train: t,
            val_loss: history.best_val_loss,
            best_epoch: history.best_epoch,
            epochs_run: history.epochs.len(),
        })
    })?;
    results.sort_by(|a, b| a.val_loss.total_cmp(&b.val_loss).then(a.index.cmp(&b.index)));
    Ok(results)
}

pub fn render_grid_report(results: &[TrialResult]) -> String {
    let mut out = String::from("rank\ttrial\tn_layers\thidden\tbatch\toptimizer\tdropout\tlr\tmax_len\tval_loss\tbest_epoch\n");
    for (rank, r) in results.iter().enumerate() {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:?}\t{}\t{:e}\t{}\t{:.6}\t{}",
            rank + 1,
            r.index,
            r.model.n_layers,
            r.model.hidden_size,
            r.train.batch_size,
            r.train.optimizer,
            r.model.dropout_p,
            r.train.lr,
            r.train.max_sequence_length,
            r.val_loss,
            r.best_epoch
        )
        .expect("string write");
    }
    out
}
