//! Homoscedastic-uncertainty weighting of the turn and dialogue losses.
//!
//! With `s = log(sigma^2)` per task:
//! `L = exp(-s_t)/2 * L_t + exp(-s_d)/2 * L_d + s_t/2 + s_d/2`.

use super::{ModelError, ModelParameters, Task};
use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Log-variances are clamped to `[-NOISE_CLAMP, NOISE_CLAMP]` before use.
pub const NOISE_CLAMP: f64 = 10.0;

/// Plain-number evaluation of the weighted loss.
pub fn multitask_loss_value(turn_loss: f64, dialogue_loss: f64, s_t: f64, s_d: f64) -> f64 {
    let s_t = s_t.clamp(-NOISE_CLAMP, NOISE_CLAMP);
    let s_d = s_d.clamp(-NOISE_CLAMP, NOISE_CLAMP);
    0.5 * (-s_t).exp() * turn_loss + 0.5 * (-s_d).exp() * dialogue_loss + 0.5 * s_t + 0.5 * s_d
}

/// Weighted combination on the tape. `reg_weight` scales the `s/2` terms so
/// per-dialogue shares of a batch loss sum to the full loss.
pub fn combine_task_losses(
    tape: &mut Tape,
    turn_loss: Var,
    dialogue_loss: Var,
    s_t: Var,
    s_d: Var,
    reg_weight: f64,
) -> Result<Var, TensorError> {
    let st = tape.clamp(s_t, -NOISE_CLAMP, NOISE_CLAMP)?;
    let sd = tape.clamp(s_d, -NOISE_CLAMP, NOISE_CLAMP)?;
    let neg_t = tape.scale(st, -1.0)?;
    let neg_d = tape.scale(sd, -1.0)?;
    let prec_t = tape.exp(neg_t)?;
    let prec_d = tape.exp(neg_d)?;
    let wt = tape.mul(prec_t, turn_loss)?;
    let wd = tape.mul(prec_d, dialogue_loss)?;
    let tasks = tape.add(wt, wd)?;
    let tasks = tape.scale(tasks, 0.5)?;
    let reg = tape.add(st, sd)?;
    let reg = tape.scale(reg, 0.5 * reg_weight)?;
    tape.add(tasks, reg)
}

/// Full multi-task loss from predictions and labels of one dialogue.
#[allow(clippy::too_many_arguments)]
pub fn multitask_loss(
    tape: &mut Tape,
    turn_preds: Var,
    turn_labels: &Tensor,
    turn_mask: &Tensor,
    dialogue_pred: Var,
    dialogue_label: f64,
    s_t: Var,
    s_d: Var,
) -> Result<Var, TensorError> {
    let lt = tape.mean_squared_error(turn_preds, turn_labels, turn_mask)?;
    let ld = tape.mean_squared_error(dialogue_pred, &Tensor::scalar(dialogue_label), &Tensor::scalar(1.0))?;
    combine_task_losses(tape, lt, ld, s_t, s_d, 1.0)
}

/// Learned `sigma_d^2 / sigma_t^2 = exp(s_d - s_t)`.
pub fn noise_ratio(params: &ModelParameters) -> Result<f64, ModelError> {
    if params.config.variant.task() != Task::Joint {
        return Err(ModelError::VariantMismatch {
            variant: params.config.variant,
            what: "noise ratio",
        });
    }
    let (s_t, s_d) = params.noise().expect("joint variants carry noise parameters");
    Ok((s_d - s_t).exp())
}
