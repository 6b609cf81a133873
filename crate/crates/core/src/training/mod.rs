//! Mini-batch training with early stopping, and grid search.
//!
//! Each dialogue of a batch is run on its own tape at its true length, and
//! the per-dialogue gradients are summed in batch order. Padding rows are
//! therefore never seen by the network, and the result does not depend on
//! how many worker threads computed the shares.

mod grid;

pub use grid::{grid_search, render_grid_report, GridSpace, TrialResult};

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::models::{loss_and_gradients, LossScale, ModelConfig, ModelError, ModelParameters, SequenceExample};
use crate::tensor::{Optimizer, OptimizerKind, Tensor, TensorError};
use crate::{par, seed};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite { epoch: usize, batch: usize, detail: String },
    #[error("search space is empty")]
    EmptySpace,
    #[error("features and corpus disagree: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// What the validation loss used for early stopping measures.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Unweighted task losses: the training objective with both noise
    /// parameters held at zero. Identical to `Objective` for single-task models.
    #[default]
    TaskLoss,
    /// The training objective with the learned noise parameters.
    Objective,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub max_sequence_length: usize,
    /// Learning-rate multiplier for the loss-noise parameters of joint models.
    pub noise_lr_scale: f64,
    pub selection: Selection,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            max_epochs: 50,
            patience: 5,
            max_sequence_length: 20,
            noise_lr_scale: 10.0,
            selection: Selection::TaskLoss,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size < 1 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        if self.patience < 1 {
            return Err(TrainError::Config("patience must be >= 1".into()));
        }
        if self.max_sequence_length < 1 {
            return Err(TrainError::Config("max_sequence_length must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config("lr must be positive".into()));
        }
        if !(self.noise_lr_scale > 0.0 && self.noise_lr_scale.is_finite()) {
            return Err(TrainError::Config("noise_lr_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Pairs each dialogue's feature matrix with its labels.
pub fn encode_examples(corpus: &Corpus, matrices: &[Tensor]) -> Result<Vec<SequenceExample>, TrainError> {
    if corpus.len() != matrices.len() {
        return Err(TrainError::Mismatch(format!(
            "{} dialogues, {} matrices",
            corpus.len(),
            matrices.len()
        )));
    }
    corpus
        .dialogues
        .iter()
        .zip(matrices)
        .map(|(d, m)| {
            if m.rows() != d.turns.len() {
                return Err(TrainError::Mismatch(format!(
                    "dialogue {} has {} turns, matrix has {} rows",
                    d.dialogue_id,
                    d.turns.len(),
                    m.rows()
                )));
            }
            let labels: Vec<f64> = d.turns.iter().map(|t| t.rq_rating.unwrap_or(0.0)).collect();
            let mask: Vec<f64> = d.turns.iter().map(|t| if t.rq_rating.is_some() { 1.0 } else { 0.0 }).collect();
            Ok(SequenceExample {
                inputs: m.clone(),
                turn_labels: Tensor::column(&labels),
                turn_mask: Tensor::column(&mask),
                dialogue_label: d.dialogue_rating,
            })
        })
        .collect()
}

/// Dialogues padded to a common length. Padding rows are zero with a zero
/// loss mask; `lengths` records the true lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub examples: Vec<SequenceExample>,
    pub lengths: Vec<usize>,
    pub padded_len: usize,
    /// Positions in the input list, in batch order.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// The unpadded dialogues.
    pub fn unpadded(&self) -> Vec<SequenceExample> {
        self.examples.iter().zip(&self.lengths).map(|(e, &n)| truncate(e, n)).collect()
    }
}

fn truncate(e: &SequenceExample, n: usize) -> SequenceExample {
    if n == e.len() {
        return e.clone();
    }
    SequenceExample {
        inputs: e.inputs.slice_rows(0, n),
        turn_labels: e.turn_labels.slice_rows(0, n),
        turn_mask: e.turn_mask.slice_rows(0, n),
        dialogue_label: e.dialogue_label,
    }
}

fn pad(e: &SequenceExample, n: usize) -> SequenceExample {
    let extra = n - e.len();
    if extra == 0 {
        return e.clone();
    }
    let grow = |t: &Tensor| {
        let mut data = t.data().to_vec();
        data.extend(std::iter::repeat_n(0.0, extra * t.cols()));
        Tensor::matrix(n, t.cols(), data).expect("padded shape")
    };
    SequenceExample {
        inputs: grow(&e.inputs),
        turn_labels: grow(&e.turn_labels),
        turn_mask: grow(&e.turn_mask),
        dialogue_label: e.dialogue_label,
    }
}

/// Shuffles by `seed`, chunks into batches and pads each to its longest
/// member, truncating anything longer than `max_len` at the tail.
pub fn make_batches(
    examples: &[SequenceExample],
    batch_size: usize,
    max_len: usize,
    seed_value: u64,
) -> Result<Vec<Batch>, TrainError> {
    if max_len < 1 {
        return Err(TrainError::Config("max_len must be >= 1".into()));
    }
    if batch_size < 1 {
        return Err(TrainError::Config("batch_size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut seed::rng(seed_value));
    let batches = order
        .chunks(batch_size)
        .map(|chunk| {
            let kept: Vec<SequenceExample> = chunk
                .iter()
                .map(|&i| {
                    let e = &examples[i];
                    if e.len() > max_len {
                        log::info!("truncating dialogue at position {i} from {} to {max_len} turns", e.len());
                        truncate(e, max_len)
                    } else {
                        e.clone()
                    }
                })
                .collect();
            let lengths: Vec<usize> = kept.iter().map(SequenceExample::len).collect();
            let padded_len = lengths.iter().copied().max().unwrap_or(0);
            Batch {
                examples: kept.iter().map(|e| pad(e, padded_len)).collect(),
                lengths,
                padded_len,
                indices: chunk.to_vec(),
            }
        })
        .collect();
    Ok(batches)
}

/// Number of dialogues longer than `max_len`.
pub fn count_truncated(examples: &[SequenceExample], max_len: usize) -> usize {
    examples.iter().filter(|e| e.len() > max_len).count()
}

/// Batch-mean loss and its gradient. `dropout_seed` switches dropout on.
pub fn batch_loss_and_gradients(
    params: &ModelParameters,
    batch: &Batch,
    dropout_seed: Option<u64>,
) -> Result<(f64, Vec<Tensor>), ModelError> {
    let dialogues = batch.unpadded();
    let refs: Vec<&SequenceExample> = dialogues.iter().collect();
    let scale = LossScale::batch(&refs);
    let idx: Vec<usize> = (0..dialogues.len()).collect();
    let shares = par::try_map(&idx, |&i| {
        let s = dropout_seed.map(|d| seed::derive(d, i as u64));
        loss_and_gradients(params, &dialogues[i], &scale, s)
    })?;
    let mut total = 0.0;
    let mut grads: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
    for (loss, g) in shares {
        total += loss;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            acc.data_mut().iter_mut().zip(gi.data()).for_each(|(a, b)| *a += b);
        }
    }
    Ok((total, grads))
}

/// Evaluation-mode loss over a whole split, with the same normalization as
/// a single batch holding every dialogue.
pub fn evaluate_loss(params: &ModelParameters, examples: &[SequenceExample]) -> Result<f64, ModelError> {
    let refs: Vec<&SequenceExample> = examples.iter().collect();
    let scale = LossScale::batch(&refs);
    let shares = par::try_map(examples, |e| {
        crate::models::example_loss_value(params, e, &scale)
    })?;
    Ok(shares.into_iter().sum())
}

/// Validation loss under the given selection rule.
pub fn selection_loss(
    params: &ModelParameters,
    examples: &[SequenceExample],
    selection: Selection,
) -> Result<f64, ModelError> {
    match (selection, params.noise()) {
        (Selection::TaskLoss, Some(_)) => {
            let mut p = params.clone();
            p.set_noise(0.0, 0.0);
            evaluate_loss(&p, examples)
        }
        _ => evaluate_loss(params, examples),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub s_t: Option<f64>,
    pub s_d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the returned parameters.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub truncated_dialogues: usize,
}

impl TrainHistory {
    /// Tab-separated per-epoch table.
    pub fn to_table(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\tval_loss\ts_t\ts_d\tbest\n");
        for r in &self.epochs {
            let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
            writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{}\t{}\t{}",
                r.epoch,
                r.train_loss,
                r.val_loss,
                opt(r.s_t),
                opt(r.s_d),
                if r.epoch == self.best_epoch { "*" } else { "" }
            )
            .expect("string write");
        }
        out
    }
}

/// Trains a freshly initialized model and returns the parameters of the
/// epoch with the lowest validation loss.
pub fn train(
    model: ModelConfig,
    train_set: &[SequenceExample],
    val_set: &[SequenceExample],
    config: &TrainConfig,
) -> Result<(ModelParameters, TrainHistory), TrainError> {
    let init = ModelParameters::init(model, seed::derive_named(config.seed, "init"))?;
    train_from(init, train_set, val_set, config)
}

/// Like [`train`], starting from given parameters.
pub fn train_from(
    mut params: ModelParameters,
    train_set: &[SequenceExample],
    val_set: &[SequenceExample],
    config: &TrainConfig,
) -> Result<(ModelParameters, TrainHistory), TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let max_len = config.max_sequence_length;
    let truncated = count_truncated(train_set, max_len);
    if truncated > 0 {
        log::info!("{truncated} training dialogues exceed {max_len} turns and will be truncated");
    }
    let val: Vec<SequenceExample> = val_set
        .iter()
        .map(|e| if e.len() > max_len { truncate(e, max_len) } else { e.clone() })
        .collect();
    // The noise parameters are laid out last; they get their own optimizer so
    // their step size can differ from the network weights'.
    let split = params.noise_offset().unwrap_or(params.tensors().len());
    let mut optimizer = Optimizer::new(config.optimizer, config.lr, &params.tensors()[..split]);
    let mut noise_optimizer = Optimizer::new(
        config.optimizer,
        config.lr * config.noise_lr_scale,
        &params.tensors()[split..],
    );
    let shuffle_seed = seed::derive_named(config.seed, "shuffle");
    let dropout_seed = seed::derive_named(config.seed, "dropout");

    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
        truncated_dialogues: truncated,
    };
    let mut best = params.clone();
    let mut since_best = 0;
    for epoch in 0..config.max_epochs {
        let batches = make_batches(train_set, config.batch_size, max_len, seed::derive(shuffle_seed, epoch as u64))?;
        let epoch_dropout = seed::derive(dropout_seed, epoch as u64);
        let mut train_loss = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let (loss, grads) = batch_loss_and_gradients(&params, batch, Some(seed::derive(epoch_dropout, b as u64)))
                .map_err(|e| non_finite_or(e, epoch, b))?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b,
                    detail: format!("loss {loss}, dialogues {:?}", batch.indices),
                });
            }
            train_loss += loss;
            let (weights, noise) = params.tensors_mut().split_at_mut(split);
            optimizer.step(weights, &grads[..split])?;
            noise_optimizer.step(noise, &grads[split..])?;
            params.clamp_noise();
            if !params.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b,
                    detail: "parameters diverged after the update".into(),
                });
            }
        }
        train_loss /= batches.len() as f64;
        let val_loss = selection_loss(&params, &val, config.selection).map_err(|e| non_finite_or(e, epoch, usize::MAX))?;
        let (s_t, s_d) = params.noise().unzip();
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            s_t,
            s_d,
        });
        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    if history.epochs.is_empty() {
        return Err(TrainError::Config("max_epochs must be >= 1".into()));
    }
    Ok((best, history))
}

fn non_finite_or(e: ModelError, epoch: usize, batch: usize) -> TrainError {
    match e {
        ModelError::Tensor(TensorError::NonFinite { op }) => TrainError::NonFinite {
            epoch,
            batch,
            detail: format!("non-finite value in {op}"),
        },
        other => other.into(),
    }
}
