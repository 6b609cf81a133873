//! Run configuration and the orchestration behind each CLI command.
//!
//! A single master seed is fanned out to per-stage seeds with
//! [`seed::derive_named`], so one number reproduces a whole experiment.
//! Artifacts live under one output directory:
//!
//! ```text
//! <out>/corpus.jsonl                      generate
//! <out>/{train,val,test}.jsonl            split
//! <out>/features/<split>.tsv              features
//! <out>/features/state.json
//! <out>/model/{checkpoint.txt,manifest.json,history.tsv}   train
//! <out>/reports/*.tsv, *.txt              evaluate, score, gridsearch, analyze
//! ```

mod commands;

pub use commands::{
    analyze, evaluate, evaluate_models, features, generate, gradcheck, gridsearch, load_model, save_model, score,
    split, train, train_model, CommandOutput, ModelManifest, TrainedModel,
};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::corpus::{CorpusError, SyntheticConfig};
use crate::embedding::{EmbeddingError, ProviderSpec};
use crate::features::FeatureError;
use crate::metrics::MetricError;
use crate::models::{ModelConfig, ModelError, RatingPooling, Variant};
use crate::tensor::TensorError;
use crate::training::{GridSpace, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad configuration or input data; the command did not start.
    #[error("{0}")]
    Validation(String),
    /// The command started and failed.
    #[error("{0}")]
    Runtime(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<CorpusError> for PipelineError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => PipelineError::Runtime(e.to_string()),
            _ => PipelineError::Validation(e.to_string()),
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                PipelineError::Runtime(e.to_string())
            }
        }
    )*};
}
runtime_from!(EmbeddingError, FeatureError, ModelError, TensorError, MetricError, AnalysisError);

impl From<TrainError> for PipelineError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::EmptySplit(_) | TrainError::EmptySpace => {
                PipelineError::Validation(e.to_string())
            }
            _ => PipelineError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Input corpus for `split`; defaults to the generated one.
    pub corpus: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Embedding table; when set it replaces the configured provider.
    pub embeddings: Option<PathBuf>,
    /// Model directory for `evaluate`, `score` and `analyze`.
    pub model: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: None,
            train: None,
            val: None,
            test: None,
            embeddings: None,
            model: None,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub ratios: (f64, f64, f64),
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { ratios: (0.8, 0.1, 0.1) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub variant: Variant,
    pub hidden_size: usize,
    pub n_layers: usize,
    pub dropout_p: f64,
    pub pooling: RatingPooling,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            variant: Variant::JointEmbeddingsFeaturesAttn,
            hidden_size: 32,
            n_layers: 1,
            dropout_p: 0.1,
            pooling: RatingPooling::Attention,
        }
    }
}

impl ModelSection {
    pub fn to_config(&self, embedding_dim: usize) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            hidden_size: self.hidden_size,
            n_layers: self.n_layers,
            dropout_p: self.dropout_p,
            embedding_dim,
            pooling: self.pooling,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub bootstrap_resamples: usize,
    pub level: f64,
    /// Dialogues shown in the attention report.
    pub attention_dialogues: usize,
    /// Training-subset fractions for the coverage / PMI-cosine table.
    pub subset_fractions: Vec<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            bootstrap_resamples: 1000,
            level: 0.95,
            attention_dialogues: 5,
            subset_fractions: vec![0.05, 0.1, 0.25, 0.5, 1.0],
        }
    }
}

/// Everything a run needs, read from one JSON file. Every section and
/// field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    /// The generator's own `seed` field is replaced by one derived from
    /// the master seed.
    pub synthetic: SyntheticConfig,
    pub split: SplitSection,
    pub embedding: ProviderSpec,
    pub model: ModelSection,
    /// Its `seed` field is likewise derived from the master seed.
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub grid: Option<GridSpace>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: Paths::default(),
            synthetic: SyntheticConfig::default(),
            split: SplitSection::default(),
            embedding: ProviderSpec::Hashed { dimension: 32, seed: 0 },
            model: ModelSection::default(),
            train: TrainConfig::default(),
            eval: EvalSection::default(),
            grid: None,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::parse(&text).map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let v = |m: String| Err(PipelineError::Validation(m));
        self.synthetic.validate()?;
        self.train.validate()?;
        if let ProviderSpec::Hashed { dimension: 0, .. } = self.embedding {
            return v("embedding.dimension must be >= 1".into());
        }
        self.model
            .to_config(1)
            .validate()
            .map_err(|e| PipelineError::Validation(format!("model: {e}")))?;
        if self.eval.bootstrap_resamples < 2 {
            return v("eval.bootstrap_resamples must be >= 2".into());
        }
        if !(self.eval.level > 0.0 && self.eval.level < 1.0) {
            return v("eval.level must be in (0, 1)".into());
        }
        if self.eval.subset_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return v("eval.subset_fractions must lie in (0, 1]".into());
        }
        Ok(())
    }

    pub fn out_dir(&self) -> &Path {
        &self.paths.out
    }

    pub(crate) fn split_path(&self, name: &str) -> PathBuf {
        let explicit = match name {
            "train" => &self.paths.train,
            "val" => &self.paths.val,
            "test" => &self.paths.test,
            _ => &None,
        };
        explicit.clone().unwrap_or_else(|| self.paths.out.join(format!("{name}.jsonl")))
    }

    pub(crate) fn corpus_path(&self) -> PathBuf {
        self.paths.corpus.clone().unwrap_or_else(|| self.paths.out.join("corpus.jsonl"))
    }

    pub(crate) fn model_dir(&self) -> PathBuf {
        self.paths.model.clone().unwrap_or_else(|| self.paths.out.join("model"))
    }

    pub(crate) fn provider_spec(&self) -> ProviderSpec {
        match &self.paths.embeddings {
            Some(path) => ProviderSpec::Table {
                path: path.clone(),
                fallback_seed: None,
            },
            None => self.embedding.clone(),
        }
    }
}
