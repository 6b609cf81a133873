use rand_chacha::ChaCha8Rng;

use super::{combine_task_losses, Layout, LstmIndices, ModelConfig, ModelError, ModelParameters, Prediction, Task, Variant};
use crate::features::N_TURN_FEATURES;
use crate::seed;
use crate::tensor::gradcheck::{check_gradients, GradCheckReport, DEFAULT_EPS};
use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Dropout is active only in training mode, and draws its masks from the
/// supplied generator.
pub enum ForwardMode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl ForwardMode<'_> {
    fn dropout(&mut self, tape: &mut Tape, x: Var, p: f64) -> Result<Var, TensorError> {
        match self {
            ForwardMode::Eval => Ok(x),
            ForwardMode::Train(rng) => tape.dropout(x, p, true, &mut **rng),
        }
    }
}

/// One LSTM step: `z = x W_x + b + h W_h`, gates `i, f, o = sigmoid`,
/// candidate `g = tanh`, `c' = f*c + i*g`, `h' = o*tanh(c')`.
pub fn lstm_cell_forward(
    tape: &mut Tape,
    x: Var,
    h: Var,
    c: Var,
    w_x: Var,
    w_h: Var,
    b: Var,
) -> Result<(Var, Var), TensorError> {
    let xw = tape.matmul(x, w_x)?;
    let proj = tape.add(xw, b)?;
    cell_from_projection(tape, proj, h, c, w_h)
}

fn cell_from_projection(tape: &mut Tape, proj: Var, h: Var, c: Var, w_h: Var) -> Result<(Var, Var), TensorError> {
    let hidden = tape.value(h).cols();
    let hw = tape.matmul(h, w_h)?;
    let z = tape.add(proj, hw)?;
    let zi = tape.slice(z, 1, 0, hidden)?;
    let zf = tape.slice(z, 1, hidden, 2 * hidden)?;
    let zg = tape.slice(z, 1, 2 * hidden, 3 * hidden)?;
    let zo = tape.slice(z, 1, 3 * hidden, 4 * hidden)?;
    let i = tape.sigmoid(zi)?;
    let f = tape.sigmoid(zf)?;
    let g = tape.tanh(zg)?;
    let o = tape.sigmoid(zo)?;
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next)?;
    let h_next = tape.mul(o, tc)?;
    Ok((h_next, c_next))
}

/// Runs one layer over all rows of `x` (`N × in`) and returns the stacked
/// hidden states (`N × H`). The input projection is computed for the whole
/// sequence at once.
fn lstm_layer(tape: &mut Tape, x: Var, w: &LstmIndices, vars: &[Var], hidden: usize) -> Result<Var, TensorError> {
    let n = tape.value(x).rows();
    let xw = tape.matmul(x, vars[w.w_x])?;
    let proj = tape.add(xw, vars[w.b])?;
    let mut h = tape.constant(Tensor::zeros(&[1, hidden]))?;
    let mut c = h;
    let mut states = Vec::with_capacity(n);
    for t in 0..n {
        let p = tape.row(proj, t)?;
        (h, c) = cell_from_projection(tape, p, h, c, vars[w.w_h])?;
        states.push(h);
    }
    tape.concat(&states, 0)
}

fn lstm_stack(
    tape: &mut Tape,
    x: Var,
    layers: &[LstmIndices],
    vars: &[Var],
    config: &ModelConfig,
    mode: &mut ForwardMode,
) -> Result<Var, TensorError> {
    let mut out = x;
    for w in layers {
        out = lstm_layer(tape, out, w, vars, config.hidden_size)?;
        out = mode.dropout(tape, out, config.dropout_p)?;
    }
    Ok(out)
}

fn reverse_rows(tape: &mut Tape, x: Var) -> Result<Var, TensorError> {
    let n = tape.value(x).rows();
    let rows = (0..n).rev().map(|r| tape.row(x, r)).collect::<Result<Vec<_>, _>>()?;
    tape.concat(&rows, 0)
}

fn rating(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
    let z = tape.matmul(x, w)?;
    let z = tape.add(z, b)?;
    let s = tape.sigmoid(z)?;
    let s = tape.scale(s, 4.0)?;
    tape.add_scalar(s, 1.0)
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Outputs {
    /// `N × 1`.
    pub turn_ratings: Option<Var>,
    /// `1 × 1`.
    pub dialogue_rating: Option<Var>,
    /// `N × 1`.
    pub attention: Option<Var>,
}

/// Keeps the column block of an assembled feature matrix that the variant
/// reads.
fn select_inputs(config: &ModelConfig, x: &Tensor) -> Result<Tensor, ModelError> {
    if x.shape().len() != 2 || x.cols() != config.row_width() {
        return Err(ModelError::InputWidth {
            expected: config.row_width(),
            found: if x.shape().len() == 2 { x.cols() } else { 0 },
        });
    }
    if x.rows() == 0 {
        return Err(ModelError::EmptyInput);
    }
    let cols = config.input_columns();
    if cols.len() == x.cols() {
        return Ok(x.clone());
    }
    let data = (0..x.rows())
        .flat_map(|r| x.row(r)[cols.clone()].iter().copied())
        .collect();
    Ok(Tensor::matrix(x.rows(), cols.len(), data)?)
}

/// Forward pass over already-bound parameter handles.
pub fn forward(
    tape: &mut Tape,
    config: &ModelConfig,
    layout: &Layout,
    vars: &[Var],
    features: &Tensor,
    mut mode: ForwardMode,
) -> Result<Outputs, ModelError> {
    let input = select_inputs(config, features)?;
    let n = input.rows();
    let reversed = if config.variant.task() != Task::Turn {
        let w = input.cols();
        let data = (0..n).rev().flat_map(|r| input.row(r).iter().copied()).collect();
        Some(Tensor::matrix(n, w, data)?)
    } else {
        None
    };
    let x = tape.constant(input)?;
    let fwd = lstm_stack(tape, x, &layout.fwd, vars, config, &mut mode)?;

    let turn_ratings = match layout.turn_head {
        Some((w, b)) => Some(rating(tape, fwd, vars[w], vars[b])?),
        None => None,
    };
    let Some(reversed) = reversed else {
        return Ok(Outputs {
            turn_ratings,
            dialogue_rating: None,
            attention: None,
        });
    };

    // The backward stack runs in reversed time; its last row is the state
    // after reading the whole dialogue from the end.
    let xr = tape.constant(reversed)?;
    let bwd_rev = lstm_stack(tape, xr, &layout.bwd, vars, config, &mut mode)?;
    let h_n = {
        let f_last = tape.row(fwd, n - 1)?;
        let b_last = tape.row(bwd_rev, n - 1)?;
        tape.concat(&[f_last, b_last], 1)?
    };

    let attention = match layout.attn {
        Some((wa, ba, v)) => {
            let bwd = reverse_rows(tape, bwd_rev)?;
            let states = tape.concat(&[fwd, bwd], 1)?;
            let proj = tape.matmul(states, vars[wa])?;
            let proj = tape.add(proj, vars[ba])?;
            let act = tape.tanh(proj)?;
            let scores = tape.matmul(act, vars[v])?;
            let weights = tape.softmax(scores, 0)?;
            Some((weights, states))
        }
        None => None,
    };

    let (dw, db) = layout.dialogue_head.expect("dialogue variants carry a dialogue head");
    let head_input = match config.variant.task() {
        Task::Joint => {
            let r = turn_ratings.expect("joint variants carry a turn head");
            let pool = match attention {
                Some((weights, _)) => tape.transpose(weights)?,
                None => tape.constant(Tensor::filled(&[1, n], 1.0 / n as f64))?,
            };
            let aggregate = tape.matmul(pool, r)?;
            tape.concat(&[aggregate, h_n], 1)?
        }
        _ => match attention {
            Some((weights, states)) => {
                let wt = tape.transpose(weights)?;
                tape.matmul(wt, states)?
            }
            None => h_n,
        },
    };
    let dialogue_rating = rating(tape, head_input, vars[dw], vars[db])?;
    Ok(Outputs {
        turn_ratings,
        dialogue_rating: Some(dialogue_rating),
        attention: attention.map(|(w, _)| w),
    })
}

/// Inference on one dialogue's assembled feature matrix.
pub fn predict(params: &ModelParameters, features: &Tensor) -> Result<Prediction, ModelError> {
    let mut tape = Tape::new();
    let vars = params.bind_constant(&mut tape)?;
    let out = forward(&mut tape, &params.config, &params.layout, &vars, features, ForwardMode::Eval)?;
    Ok(Prediction {
        turn_ratings: out.turn_ratings.map(|v| tape.value(v).data().to_vec()).unwrap_or_default(),
        dialogue_rating: out.dialogue_rating.map(|v| tape.value(v).item()),
        attention_weights: out.attention.map(|v| tape.value(v).data().to_vec()),
    })
}

/// Per-turn ratings from a turn or joint variant.
pub fn turn_forward(features: &Tensor, params: &ModelParameters) -> Result<Vec<f64>, ModelError> {
    if !params.config.variant.predicts_turns() {
        return Err(ModelError::VariantMismatch {
            variant: params.config.variant,
            what: "turn ratings",
        });
    }
    Ok(predict(params, features)?.turn_ratings)
}

/// Full prediction from a dialogue or joint variant.
pub fn dialogue_forward(features: &Tensor, params: &ModelParameters) -> Result<Prediction, ModelError> {
    if !params.config.variant.predicts_dialogue() {
        return Err(ModelError::VariantMismatch {
            variant: params.config.variant,
            what: "dialogue ratings",
        });
    }
    predict(params, features)
}

/// One dialogue ready for the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceExample {
    /// Assembled feature matrix, `N × (2D + 18)`.
    pub inputs: Tensor,
    /// `N × 1`; unlabeled turns hold 0 and are masked out.
    pub turn_labels: Tensor,
    /// `N × 1` of 0/1.
    pub turn_mask: Tensor,
    pub dialogue_label: Option<f64>,
}

impl SequenceExample {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_labeled_turns(&self) -> usize {
        self.turn_mask.data().iter().filter(|m| **m > 0.0).count()
    }
}

/// Normalizers that turn per-dialogue loss shares into batch means.
///
/// Summing `example_loss` over a batch with `turn_denom` = labeled turns in
/// the batch, `dialogue_denom` = labeled dialogues and `reg_weight` =
/// 1/batch size gives exactly the batch-level loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossScale {
    pub turn_denom: f64,
    pub dialogue_denom: f64,
    pub reg_weight: f64,
}

impl LossScale {
    /// The loss of a single dialogue on its own.
    pub fn single(example: &SequenceExample) -> Self {
        Self {
            turn_denom: example.n_labeled_turns() as f64,
            dialogue_denom: 1.0,
            reg_weight: 1.0,
        }
    }

    pub fn batch(examples: &[&SequenceExample]) -> Self {
        Self {
            turn_denom: examples.iter().map(|e| e.n_labeled_turns()).sum::<usize>() as f64,
            dialogue_denom: examples.iter().filter(|e| e.dialogue_label.is_some()).count() as f64,
            reg_weight: 1.0 / examples.len().max(1) as f64,
        }
    }
}

fn task_terms(
    tape: &mut Tape,
    out: &Outputs,
    example: &SequenceExample,
    scale: &LossScale,
) -> Result<(Option<Var>, Option<Var>), TensorError> {
    let lt = match out.turn_ratings {
        Some(r) if scale.turn_denom > 0.0 => {
            Some(tape.masked_sse(r, &example.turn_labels, &example.turn_mask, scale.turn_denom)?)
        }
        Some(_) => Some(tape.constant(Tensor::scalar(0.0))?),
        None => None,
    };
    let ld = match (out.dialogue_rating, example.dialogue_label) {
        (Some(d), Some(y)) if scale.dialogue_denom > 0.0 => {
            Some(tape.masked_sse(d, &Tensor::scalar(y), &Tensor::scalar(1.0), scale.dialogue_denom)?)
        }
        (Some(_), _) => Some(tape.constant(Tensor::scalar(0.0))?),
        (None, _) => None,
    };
    Ok((lt, ld))
}

/// This dialogue's share of the training loss.
pub fn example_loss(
    tape: &mut Tape,
    config: &ModelConfig,
    layout: &Layout,
    vars: &[Var],
    example: &SequenceExample,
    scale: &LossScale,
    mode: ForwardMode,
) -> Result<Var, ModelError> {
    let out = forward(tape, config, layout, vars, &example.inputs, mode)?;
    let (lt, ld) = task_terms(tape, &out, example, scale)?;
    let loss = match (lt, ld, layout.noise) {
        (Some(lt), Some(ld), Some((st, sd))) => combine_task_losses(tape, lt, ld, vars[st], vars[sd], scale.reg_weight)?,
        (Some(lt), None, _) => lt,
        (None, Some(ld), _) => ld,
        _ => unreachable!("every variant has at least one head"),
    };
    Ok(loss)
}

/// Evaluation-mode loss share of one dialogue, without gradients.
pub fn example_loss_value(params: &ModelParameters, example: &SequenceExample, scale: &LossScale) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let vars = params.bind_constant(&mut tape)?;
    let loss = example_loss(&mut tape, &params.config, &params.layout, &vars, example, scale, ForwardMode::Eval)?;
    Ok(tape.value(loss).item())
}

/// Loss share and parameter gradients for one dialogue. `dropout_seed`
/// enables training-mode dropout.
pub fn loss_and_gradients(
    params: &ModelParameters,
    example: &SequenceExample,
    scale: &LossScale,
    dropout_seed: Option<u64>,
) -> Result<(f64, Vec<Tensor>), ModelError> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape)?;
    let mut rng = dropout_seed.map(seed::rng);
    let mode = match rng.as_mut() {
        Some(r) => ForwardMode::Train(r),
        None => ForwardMode::Eval,
    };
    let loss = example_loss(&mut tape, &params.config, &params.layout, &vars, example, scale, mode)?;
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(TensorError::NonFinite { op: "loss" }.into());
    }
    let grads = tape.backward(loss)?;
    Ok((value, vars.iter().map(|v| grads.get(*v)).collect()))
}

/// Toy-size gradient check of a variant's full loss: hidden 8, embedding
/// dimension 8, four turns, dropout on with a fixed mask, nonzero
/// log-variances for joint variants.
pub fn gradcheck_variant(variant: Variant, seed_value: u64) -> Result<GradCheckReport, ModelError> {
    use rand::Rng;
    let mut config = ModelConfig::new(variant, 8);
    config.hidden_size = 8;
    config.dropout_p = 0.1;
    let mut params = ModelParameters::init(config, seed_value)?;
    params.set_noise(0.3, -0.2);
    let mut rng = seed::rng(seed::derive(seed_value, 1));
    let n = 4;
    let width = config.row_width();
    debug_assert_eq!(width, 16 + N_TURN_FEATURES);
    let inputs = Tensor::matrix(n, width, (0..n * width).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let turn_labels = Tensor::column(&(0..n).map(|_| rng.random_range(1.0..5.0)).collect::<Vec<_>>());
    let example = SequenceExample {
        inputs,
        turn_labels,
        turn_mask: Tensor::column(&[1.0, 1.0, 0.0, 1.0]),
        dialogue_label: Some(2.5),
    };
    let scale = LossScale::single(&example);
    let layout = params.layout.clone();
    let dropout_seed = seed::derive(seed_value, 2);
    let report = check_gradients(params.tensors(), DEFAULT_EPS, |tape, vars| {
        let mut rng = seed::rng(dropout_seed);
        example_loss(tape, &config, &layout, vars, &example, &scale, ForwardMode::Train(&mut rng)).map_err(|e| match e {
            ModelError::Tensor(t) => t,
            other => TensorError::Checkpoint(other.to_string()),
        })
    })?;
    Ok(report)
}
