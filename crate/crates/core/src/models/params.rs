use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, Task};
use crate::seed;
use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Indices of one LSTM layer's weights in the flat parameter list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmIndices {
    /// `in × 4H`, gate blocks ordered input, forget, candidate, output.
    pub w_x: usize,
    /// `H × 4H`.
    pub w_h: usize,
    /// `1 × 4H`.
    pub b: usize,
}

/// Where each named parameter group lives in [`ModelParameters::tensors`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Layout {
    pub fwd: Vec<LstmIndices>,
    pub bwd: Vec<LstmIndices>,
    pub turn_head: Option<(usize, usize)>,
    /// `(W_a, b_a, v)`.
    pub attn: Option<(usize, usize, usize)>,
    pub dialogue_head: Option<(usize, usize)>,
    /// `(s_t, s_d)`.
    pub noise: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub config: ModelConfig,
    pub layout: Layout,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

/// Shape plan shared by initialization and checkpoint validation.
fn plan(config: &ModelConfig) -> (Layout, Vec<(String, Vec<usize>)>) {
    let h = config.hidden_size;
    let mut shapes: Vec<(String, Vec<usize>)> = Vec::new();
    let mut push = |name: String, shape: Vec<usize>| {
        shapes.push((name, shape));
        shapes.len() - 1
    };
    let mut layout = Layout::default();
    let task = config.variant.task();
    let stack = |dir: &str, push: &mut dyn FnMut(String, Vec<usize>) -> usize| {
        (0..config.n_layers)
            .map(|l| {
                let input = if l == 0 { config.input_width() } else { h };
                LstmIndices {
                    w_x: push(format!("{dir}.{l}.w_x"), vec![input, 4 * h]),
                    w_h: push(format!("{dir}.{l}.w_h"), vec![h, 4 * h]),
                    b: push(format!("{dir}.{l}.b"), vec![1, 4 * h]),
                }
            })
            .collect::<Vec<_>>()
    };
    layout.fwd = stack("fwd", &mut push);
    if task != Task::Turn {
        layout.bwd = stack("bwd", &mut push);
    }
    if task != Task::Dialogue {
        layout.turn_head = Some((push("turn_head.w".into(), vec![h, 1]), push("turn_head.b".into(), vec![1, 1])));
    }
    if config.uses_attention() {
        layout.attn = Some((
            push("attn.w".into(), vec![2 * h, h]),
            push("attn.b".into(), vec![1, h]),
            push("attn.v".into(), vec![h, 1]),
        ));
    }
    match task {
        Task::Turn => {}
        Task::Dialogue => {
            layout.dialogue_head = Some((push("dialogue_head.w".into(), vec![2 * h, 1]), push("dialogue_head.b".into(), vec![1, 1])));
        }
        Task::Joint => {
            layout.dialogue_head = Some((
                push("dialogue_head.w".into(), vec![2 * h + 1, 1]),
                push("dialogue_head.b".into(), vec![1, 1]),
            ));
            layout.noise = Some((push("noise.s_t".into(), vec![1, 1]), push("noise.s_d".into(), vec![1, 1])));
        }
    }
    (layout, shapes)
}

impl ModelParameters {
    /// Uniform `±1/sqrt(H)` weights, forget-gate bias 1, other biases and
    /// log-variances 0.
    pub fn init(config: ModelConfig, seed_value: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let (layout, shapes) = plan(&config);
        let bound = 1.0 / (config.hidden_size as f64).sqrt();
        let h = config.hidden_size;
        let mut rng = seed::rng(seed_value);
        let mut names = Vec::with_capacity(shapes.len());
        let mut tensors = Vec::with_capacity(shapes.len());
        for (name, shape) in shapes {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = if name.starts_with("noise.") {
                vec![0.0; n]
            } else if name.ends_with(".b") && (name.starts_with("fwd.") || name.starts_with("bwd.")) {
                (0..n).map(|j| if (h..2 * h).contains(&j) { 1.0 } else { 0.0 }).collect()
            } else if name.ends_with(".b") {
                vec![0.0; n]
            } else {
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            };
            names.push(name);
            tensors.push(Tensor::new(shape, data)?);
        }
        Ok(Self {
            config,
            layout,
            names,
            tensors,
        })
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.tensors[i])
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Puts every tensor on the tape as a gradient-tracking leaf.
    pub fn bind(&self, tape: &mut Tape) -> Result<Vec<Var>, TensorError> {
        self.tensors.iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Puts every tensor on the tape as a constant (inference).
    pub fn bind_constant(&self, tape: &mut Tape) -> Result<Vec<Var>, TensorError> {
        self.tensors.iter().map(|t| tape.constant(t.clone())).collect()
    }

    /// `(s_t, s_d)` for joint variants.
    pub fn noise(&self) -> Option<(f64, f64)> {
        self.layout
            .noise
            .map(|(t, d)| (self.tensors[t].item(), self.tensors[d].item()))
    }

    pub fn set_noise(&mut self, s_t: f64, s_d: f64) {
        if let Some((t, d)) = self.layout.noise {
            self.tensors[t] = Tensor::matrix(1, 1, vec![s_t]).expect("1x1");
            self.tensors[d] = Tensor::matrix(1, 1, vec![s_d]).expect("1x1");
        }
    }

    /// Keeps the log-variances inside the range the loss clamps to, so that
    /// they never drift where their gradient vanishes.
    /// Index of the first noise tensor; the noise tensors are always last.
    pub fn noise_offset(&self) -> Option<usize> {
        self.layout.noise.map(|(t, _)| t)
    }

    pub fn clamp_noise(&mut self) {
        if let Some((s_t, s_d)) = self.noise() {
            let c = super::NOISE_CLAMP;
            self.set_noise(s_t.clamp(-c, c), s_d.clamp(-c, c));
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn to_named(&self) -> Vec<(String, Tensor)> {
        self.names.iter().cloned().zip(self.tensors.iter().cloned()).collect()
    }

    /// Rebuilds parameters from checkpoint tensors, checking names and shapes
    /// against `config`.
    pub fn from_named(config: ModelConfig, named: Vec<(String, Tensor)>) -> Result<Self, ModelError> {
        config.validate()?;
        let (layout, shapes) = plan(&config);
        if named.len() != shapes.len() {
            return Err(ModelError::Parameters(format!(
                "expected {} tensors, found {}",
                shapes.len(),
                named.len()
            )));
        }
        let mut names = Vec::with_capacity(named.len());
        let mut tensors = Vec::with_capacity(named.len());
        for ((name, t), (want, shape)) in named.into_iter().zip(shapes) {
            if name != want || t.shape() != shape.as_slice() {
                return Err(ModelError::Parameters(format!(
                    "tensor {name} {:?} where {want} {shape:?} was expected",
                    t.shape()
                )));
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(Self {
            config,
            layout,
            names,
            tensors,
        })
    }
}

/// Serializable summary, used in run manifests.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParameterSummary {
    pub n_tensors: usize,
    pub n_scalars: usize,
}

impl From<&ModelParameters> for ParameterSummary {
    fn from(p: &ModelParameters) -> Self {
        Self {
            n_tensors: p.tensors.len(),
            n_scalars: p.n_scalars(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{RatingPooling, Variant};

    #[test]
    fn shapes_follow_config() {
        let mut cfg = ModelConfig::new(Variant::JointEmbeddingsFeaturesAttn, 4);
        cfg.hidden_size = 3;
        cfg.n_layers = 2;
        let p = ModelParameters::init(cfg, 1).unwrap();
        assert_eq!(p.get("fwd.0.w_x").unwrap().shape(), &[26, 12]);
        assert_eq!(p.get("fwd.1.w_x").unwrap().shape(), &[3, 12]);
        assert_eq!(p.get("bwd.1.w_h").unwrap().shape(), &[3, 12]);
        assert_eq!(p.get("attn.w").unwrap().shape(), &[6, 3]);
        assert_eq!(p.get("dialogue_head.w").unwrap().shape(), &[7, 1]);
        assert_eq!(p.noise(), Some((0.0, 0.0)));
        let b = p.get("fwd.0.b").unwrap().data();
        assert_eq!(b, &[0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0.]);

        let turn = ModelParameters::init(ModelConfig::new(Variant::LstmEmbedding, 4), 1).unwrap();
        assert!(turn.get("bwd.0.w_x").is_none());
        assert!(turn.get("dialogue_head.w").is_none());
        assert_eq!(turn.get("fwd.0.w_x").unwrap().shape(), &[8, 128]);

        cfg.pooling = RatingPooling::UniformMean;
        let ablation = ModelParameters::init(cfg, 1).unwrap();
        assert!(ablation.get("attn.w").is_none());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = ModelConfig::new(Variant::BilstmFeaturesAttn, 4);
        let a = ModelParameters::init(cfg, 5).unwrap();
        assert_eq!(a, ModelParameters::init(cfg, 5).unwrap());
        assert_ne!(a, ModelParameters::init(cfg, 6).unwrap());
        let bound = 1.0 / 32f64.sqrt();
        assert!(a.get("fwd.0.w_x").unwrap().data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn named_round_trip_and_rejection() {
        let cfg = ModelConfig::new(Variant::JointEmbeddingsAttn, 2);
        let p = ModelParameters::init(cfg, 0).unwrap();
        let back = ModelParameters::from_named(cfg, p.to_named()).unwrap();
        assert_eq!(p, back);
        let mut other = cfg;
        other.hidden_size = 8;
        assert!(ModelParameters::from_named(other, p.to_named()).is_err());
    }

    #[test]
    fn noise_clamping() {
        let p = ModelParameters::init(ModelConfig::new(Variant::JointEmbeddingsAttn, 2), 0).unwrap();
        let mut p = p;
        p.set_noise(-30.0, 12.0);
        p.clamp_noise();
        assert_eq!(p.noise(), Some((-10.0, 10.0)));
    }
}
