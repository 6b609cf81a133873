//! Turn-level LSTM, dialogue-level BiLSTM and joint models.
//!
//! All variants share one building block: a stack of LSTM layers run over
//! the rows of a dialogue's feature matrix. Bidirectional variants run two
//! independent stacks, one over the turns in order and one in reverse, and
//! concatenate their outputs at the top. The forward stack therefore never
//! sees later turns, which keeps the joint model's turn head causal.

mod loss;
mod network;
mod params;

pub use loss::{combine_task_losses, multitask_loss, multitask_loss_value, noise_ratio, NOISE_CLAMP};
pub use network::{
    dialogue_forward, forward, Outputs, example_loss, example_loss_value, gradcheck_variant, loss_and_gradients, lstm_cell_forward, predict,
    turn_forward, ForwardMode, LossScale, SequenceExample,
};
pub use params::{Layout, LstmIndices, ModelParameters, ParameterSummary};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::N_TURN_FEATURES;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("variant {variant:?} does not support {what}")]
    VariantMismatch { variant: Variant, what: &'static str },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("input has {found} columns, model expects {expected}")]
    InputWidth { expected: usize, found: usize },
    #[error("empty dialogue")]
    EmptyInput,
    #[error("parameters do not match config: {0}")]
    Parameters(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    LstmEmbedding,
    LstmEmbeddingFeatures,
    BilstmFeatures,
    BilstmEmbeddingsFeatures,
    BilstmFeaturesAttn,
    BilstmEmbeddingsFeaturesAttn,
    JointEmbeddingsAttn,
    JointEmbeddingsFeaturesAttn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Turn,
    Dialogue,
    Joint,
}

/// Which block of an assembled feature row a variant reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inputs {
    Embeddings,
    Features,
    Both,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::LstmEmbedding,
        Variant::LstmEmbeddingFeatures,
        Variant::BilstmFeatures,
        Variant::BilstmEmbeddingsFeatures,
        Variant::BilstmFeaturesAttn,
        Variant::BilstmEmbeddingsFeaturesAttn,
        Variant::JointEmbeddingsAttn,
        Variant::JointEmbeddingsFeaturesAttn,
    ];

    pub fn task(self) -> Task {
        use Variant::*;
        match self {
            LstmEmbedding | LstmEmbeddingFeatures => Task::Turn,
            JointEmbeddingsAttn | JointEmbeddingsFeaturesAttn => Task::Joint,
            _ => Task::Dialogue,
        }
    }

    pub fn inputs(self) -> Inputs {
        use Variant::*;
        match self {
            LstmEmbedding | JointEmbeddingsAttn => Inputs::Embeddings,
            BilstmFeatures | BilstmFeaturesAttn => Inputs::Features,
            _ => Inputs::Both,
        }
    }

    pub fn has_attention(self) -> bool {
        use Variant::*;
        matches!(
            self,
            BilstmFeaturesAttn | BilstmEmbeddingsFeaturesAttn | JointEmbeddingsAttn | JointEmbeddingsFeaturesAttn
        )
    }

    pub fn predicts_turns(self) -> bool {
        self.task() != Task::Dialogue
    }

    pub fn predicts_dialogue(self) -> bool {
        self.task() != Task::Turn
    }

    pub fn name(self) -> &'static str {
        use Variant::*;
        match self {
            LstmEmbedding => "LSTM_embedding",
            LstmEmbeddingFeatures => "LSTM_embedding_features",
            BilstmFeatures => "BiLSTM_features",
            BilstmEmbeddingsFeatures => "BiLSTM_embeddings_features",
            BilstmFeaturesAttn => "BiLSTM_features_attn",
            BilstmEmbeddingsFeaturesAttn => "BiLSTM_embeddings_features_attn",
            JointEmbeddingsAttn => "Joint_embeddings_attn",
            JointEmbeddingsFeaturesAttn => "Joint_embeddings_features_attn",
        }
    }
}

/// How the joint model pools predicted turn ratings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingPooling {
    /// Learned attention weights.
    #[default]
    Attention,
    /// Arithmetic mean; the ablation without attention.
    UniformMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub hidden_size: usize,
    pub n_layers: usize,
    pub dropout_p: f64,
    pub embedding_dim: usize,
    #[serde(default)]
    pub pooling: RatingPooling,
}

impl ModelConfig {
    pub fn new(variant: Variant, embedding_dim: usize) -> Self {
        Self {
            variant,
            hidden_size: 32,
            n_layers: 1,
            dropout_p: 0.1,
            embedding_dim,
            pooling: RatingPooling::Attention,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_size < 1 {
            return Err(ModelError::Config("hidden_size must be >= 1".into()));
        }
        if !(1..=3).contains(&self.n_layers) {
            return Err(ModelError::Config("n_layers must be 1, 2 or 3".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(ModelError::Config("dropout_p must be in [0, 1)".into()));
        }
        if self.embedding_dim < 1 {
            return Err(ModelError::Config("embedding_dim must be >= 1".into()));
        }
        if self.pooling == RatingPooling::UniformMean && self.variant.task() != Task::Joint {
            return Err(ModelError::Config("uniform_mean pooling applies to joint variants only".into()));
        }
        Ok(())
    }

    /// Width of a full assembled feature row.
    pub fn row_width(&self) -> usize {
        2 * self.embedding_dim + N_TURN_FEATURES
    }

    /// Column range of the assembled row this variant consumes.
    pub fn input_columns(&self) -> std::ops::Range<usize> {
        let d2 = 2 * self.embedding_dim;
        match self.variant.inputs() {
            Inputs::Embeddings => 0..d2,
            Inputs::Features => d2..d2 + N_TURN_FEATURES,
            Inputs::Both => 0..d2 + N_TURN_FEATURES,
        }
    }

    pub fn input_width(&self) -> usize {
        self.input_columns().len()
    }

    /// Whether the model has learned attention parameters.
    pub fn uses_attention(&self) -> bool {
        self.variant.has_attention() && self.pooling == RatingPooling::Attention
    }
}

/// Model outputs for one dialogue.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// One rating per turn in (1, 5); empty for dialogue-only variants.
    pub turn_ratings: Vec<f64>,
    pub dialogue_rating: Option<f64>,
    /// One weight per turn, summing to 1; attention variants only.
    pub attention_weights: Option<Vec<f64>>,
}
