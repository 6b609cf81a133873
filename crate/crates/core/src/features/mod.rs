//! Per-turn features and model-input assembly.
//!
//! Every turn yields 15 scalars, 3 boundary/availability masks and the
//! embeddings of the user request and system response. Features for turn `n`
//! read only turns `n - 1`, `n` and `n + 1`.

mod normalize;
mod popularity;

pub use normalize::FeatureNormalizer;
pub use popularity::{compute_popularity_tables, PopularityTables};

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::{Corpus, Dialogue, DialogueSystem};
use crate::embedding::{cosine_similarity, EmbeddingError, EmbeddingProvider, EmbeddingVector};
use crate::tensor::Tensor;
use crate::{par, Scored};

pub const N_SCALARS: usize = 15;
pub const N_MASKS: usize = 3;
/// Width of the non-embedding block of a model input row.
pub const N_TURN_FEATURES: usize = N_SCALARS + N_MASKS;

pub const SCALAR_NAMES: [&str; N_SCALARS] = [
    "asr_conf",
    "nlu_conf",
    "barge_in",
    "intent_similarity",
    "sem_paraphrase",
    "syn_paraphrase",
    "sem_coherence",
    "syn_coherence",
    "sem_repetition",
    "syn_repetition",
    "len_user",
    "len_resp",
    "duration_next",
    "domain_pop",
    "intent_pop",
];
pub const MASK_NAMES: [&str; N_MASKS] = ["has_prev", "has_next", "has_nlu"];

pub mod idx {
    pub const ASR_CONF: usize = 0;
    pub const NLU_CONF: usize = 1;
    pub const BARGE_IN: usize = 2;
    pub const INTENT_SIMILARITY: usize = 3;
    pub const SEM_PARAPHRASE: usize = 4;
    pub const SYN_PARAPHRASE: usize = 5;
    pub const SEM_COHERENCE: usize = 6;
    pub const SYN_COHERENCE: usize = 7;
    pub const SEM_REPETITION: usize = 8;
    pub const SYN_REPETITION: usize = 9;
    pub const LEN_USER: usize = 10;
    pub const LEN_RESP: usize = 11;
    pub const DURATION_NEXT: usize = 12;
    pub const DOMAIN_POP: usize = 13;
    pub const INTENT_POP: usize = 14;
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("turn index {index} out of range for dialogue {dialogue_id} with {len} turns")]
    IndexOutOfRange {
        dialogue_id: String,
        index: usize,
        len: usize,
    },
    #[error("feature normalizer has not been fitted")]
    NotFitted,
    #[error("cannot fit on an empty set of turns")]
    EmptyTraining,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Lowercases, splits on whitespace, strips leading/trailing punctuation
/// (any non-alphanumeric character) and drops empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Jaccard similarity of token sets; two empty sets give 0 flagged degenerate.
pub fn jaccard_similarity<S: AsRef<str>>(a: &[S], b: &[S]) -> Scored {
    let sa: HashSet<&str> = a.iter().map(|s| s.as_ref()).collect();
    let sb: HashSet<&str> = b.iter().map(|s| s.as_ref()).collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return Scored::degenerate(0.0);
    }
    Scored::new(sa.intersection(&sb).count() as f64 / union as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnFeatures {
    pub scalars: [f64; N_SCALARS],
    pub has_prev: bool,
    pub has_next: bool,
    pub has_nlu: bool,
    pub e_usr: EmbeddingVector,
    pub e_sys: EmbeddingVector,
}

impl TurnFeatures {
    pub fn masks(&self) -> [f64; N_MASKS] {
        [self.has_prev, self.has_next, self.has_nlu].map(|b| if b { 1.0 } else { 0.0 })
    }
}

fn has_nlu(dialogue: &Dialogue, n: usize) -> bool {
    dialogue.system == DialogueSystem::A && dialogue.turns[n].has_nlu()
}

/// Features for turn `n` given precomputed per-turn embeddings.
fn features_with(
    dialogue: &Dialogue,
    n: usize,
    user_emb: &[EmbeddingVector],
    sys_emb: &[EmbeddingVector],
    tables: &PopularityTables,
) -> Result<TurnFeatures, FeatureError> {
    let turns = &dialogue.turns;
    let t = &turns[n];
    let has_prev = n > 0;
    let has_next = n + 1 < turns.len();
    let nlu = has_nlu(dialogue, n);
    let u_tok = tokenize(&t.user_text);
    let s_tok = tokenize(&t.system_text);

    let mut s = [0.0; N_SCALARS];
    s[idx::ASR_CONF] = t.asr_confidence;
    s[idx::BARGE_IN] = if t.barge_in { 1.0 } else { 0.0 };
    s[idx::SEM_COHERENCE] = cosine_similarity(&user_emb[n], &sys_emb[n])?.value;
    s[idx::SYN_COHERENCE] = jaccard_similarity(&u_tok, &s_tok).value;
    s[idx::LEN_USER] = u_tok.len() as f64;
    s[idx::LEN_RESP] = s_tok.len() as f64;
    if nlu {
        s[idx::NLU_CONF] = t.nlu_confidence.unwrap_or(0.0);
        s[idx::DOMAIN_POP] = t.nlu_domain.as_deref().map_or(0.0, |d| tables.domain(d));
        s[idx::INTENT_POP] = t.nlu_intent.as_deref().map_or(0.0, |i| tables.intent(i));
    }
    if has_next {
        let next = &turns[n + 1];
        if nlu {
            let same = matches!((&t.nlu_intent, &next.nlu_intent), (Some(a), Some(b)) if a == b);
            s[idx::INTENT_SIMILARITY] = if same { 1.0 } else { 0.0 };
        }
        s[idx::SEM_PARAPHRASE] = cosine_similarity(&user_emb[n], &user_emb[n + 1])?.value;
        s[idx::SYN_PARAPHRASE] = jaccard_similarity(&u_tok, &tokenize(&next.user_text)).value;
        s[idx::DURATION_NEXT] = (next.user_timestamp - t.user_timestamp).max(0.0);
    }
    if has_prev {
        let prev_tok = tokenize(&turns[n - 1].system_text);
        s[idx::SEM_REPETITION] = cosine_similarity(&sys_emb[n], &sys_emb[n - 1])?.value;
        s[idx::SYN_REPETITION] = jaccard_similarity(&s_tok, &prev_tok).value;
    }
    Ok(TurnFeatures {
        scalars: s,
        has_prev,
        has_next,
        has_nlu: nlu,
        e_usr: user_emb[n].clone(),
        e_sys: sys_emb[n].clone(),
    })
}

/// Features for a single turn.
pub fn extract_turn_features(
    dialogue: &Dialogue,
    n: usize,
    provider: &EmbeddingProvider,
    tables: &PopularityTables,
) -> Result<TurnFeatures, FeatureError> {
    let len = dialogue.turns.len();
    if n >= len {
        return Err(FeatureError::IndexOutOfRange {
            dialogue_id: dialogue.dialogue_id.clone(),
            index: n,
            len,
        });
    }
    // only the window n-1..=n+1 is embedded; other slots are placeholders
    let lo = n.saturating_sub(1);
    let hi = (n + 1).min(len - 1);
    let dim = provider.dimension();
    let mut user = vec![EmbeddingVector::zeros(dim); len];
    let mut sys = vec![EmbeddingVector::zeros(dim); len];
    for k in lo..=hi {
        user[k] = provider.embed_text(&dialogue.turns[k].user_text)?;
        sys[k] = provider.embed_text(&dialogue.turns[k].system_text)?;
    }
    features_with(dialogue, n, &user, &sys, tables)
}

/// Features for every turn of a dialogue, embedding each text once.
pub fn extract_dialogue_features(
    dialogue: &Dialogue,
    provider: &EmbeddingProvider,
    tables: &PopularityTables,
) -> Result<Vec<TurnFeatures>, FeatureError> {
    let user: Vec<_> = dialogue
        .turns
        .iter()
        .map(|t| provider.embed_text(&t.user_text))
        .collect::<Result<_, _>>()?;
    let sys: Vec<_> = dialogue
        .turns
        .iter()
        .map(|t| provider.embed_text(&t.system_text))
        .collect::<Result<_, _>>()?;
    (0..dialogue.turns.len())
        .map(|n| features_with(dialogue, n, &user, &sys, tables))
        .collect()
}

/// Width of an assembled input row for embedding dimension `d`.
pub fn row_width(d: usize) -> usize {
    2 * d + N_TURN_FEATURES
}

/// Rows of `concat(e_usr, e_sys, normalized scalars, masks)`.
pub fn assemble_rows(
    features: &[TurnFeatures],
    normalizer: &FeatureNormalizer,
) -> Result<Tensor, FeatureError> {
    if !normalizer.is_fitted() {
        return Err(FeatureError::NotFitted);
    }
    let d = features.first().map_or(0, |f| f.e_usr.dimension());
    let width = row_width(d);
    let mut data = Vec::with_capacity(features.len() * width);
    for f in features {
        data.extend_from_slice(f.e_usr.as_slice());
        data.extend_from_slice(f.e_sys.as_slice());
        data.extend_from_slice(&normalizer.normalize(&f.scalars));
        data.extend_from_slice(&f.masks());
    }
    Ok(Tensor::new(vec![features.len(), width], data).expect("row layout"))
}

pub fn assemble_feature_matrix(
    dialogue: &Dialogue,
    provider: &EmbeddingProvider,
    tables: &PopularityTables,
    normalizer: &FeatureNormalizer,
) -> Result<Tensor, FeatureError> {
    if !normalizer.is_fitted() {
        return Err(FeatureError::NotFitted);
    }
    let features = extract_dialogue_features(dialogue, provider, tables)?;
    assemble_rows(&features, normalizer)
}

/// Everything needed to turn dialogues into model inputs, fitted on train.
#[derive(Debug, Clone)]
pub struct FeaturePipeline {
    pub provider: EmbeddingProvider,
    pub tables: PopularityTables,
    pub normalizer: FeatureNormalizer,
}

impl FeaturePipeline {
    /// Fits popularity tables and the scalar normalizer on `train` only.
    pub fn fit(train: &Corpus, provider: EmbeddingProvider) -> Result<Self, FeatureError> {
        let tables = compute_popularity_tables(train);
        let per_dialogue = par::try_map(&train.dialogues, |d| {
            extract_dialogue_features(d, &provider, &tables)
        })?;
        let all: Vec<TurnFeatures> = per_dialogue.into_iter().flatten().collect();
        let normalizer = FeatureNormalizer::fit(&all)?;
        Ok(Self {
            provider,
            tables,
            normalizer,
        })
    }

    pub fn row_width(&self) -> usize {
        row_width(self.provider.dimension())
    }

    pub fn matrix(&self, dialogue: &Dialogue) -> Result<Tensor, FeatureError> {
        assemble_feature_matrix(dialogue, &self.provider, &self.tables, &self.normalizer)
    }

    pub fn matrices(&self, corpus: &Corpus) -> Result<Vec<Tensor>, FeatureError> {
        par::try_map(&corpus.dialogues, |d| self.matrix(d))
    }
}

/// Column names of an assembled row, in order.
pub fn column_names(d: usize) -> Vec<String> {
    let mut cols: Vec<String> = (0..d).map(|i| format!("e_usr_{i}")).collect();
    cols.extend((0..d).map(|i| format!("e_sys_{i}")));
    cols.extend(SCALAR_NAMES.iter().map(|s| s.to_string()));
    cols.extend(MASK_NAMES.iter().map(|s| s.to_string()));
    cols
}

/// Tab-separated export: header, then one row per turn prefixed by ids.
pub fn feature_table(corpus: &Corpus, matrices: &[Tensor], d: usize) -> String {
    let mut out = String::from("dialogue_id\tturn_id");
    for c in column_names(d) {
        out.push('\t');
        out.push_str(&c);
    }
    out.push('\n');
    for (dialogue, m) in corpus.dialogues.iter().zip(matrices) {
        for (turn, row) in dialogue.turns.iter().zip(m.data().chunks(m.cols())) {
            write!(out, "{}\t{}", dialogue.dialogue_id, turn.turn_id).expect("string write");
            for x in row {
                write!(out, "\t{x}").expect("string write");
            }
            out.push('\n');
        }
    }
    out
}
