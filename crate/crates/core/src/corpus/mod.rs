//! Dialogue data model, serialization, splitting and synthetic generation.

mod io;
mod split;
pub mod synthetic;

pub use io::{load_corpus, parse_corpus, save_corpus, write_corpus};
pub use split::split_corpus;
pub use synthetic::{generate_synthetic, Aggregation, SyntheticConfig};

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("dialogue {dialogue_id}: invalid {field}: {message}")]
    Invalid {
        dialogue_id: String,
        field: String,
        message: String,
    },
    #[error("invalid split: {0}")]
    Split(String),
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub slot_type: String,
    pub slot_value: String,
}

/// One user request and the system response to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Turn {
    pub turn_id: String,
    pub user_text: String,
    pub system_text: String,
    pub asr_confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nlu_confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nlu_intent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nlu_domain: Option<String>,
    pub barge_in: bool,
    /// Seconds since the start of the dialogue.
    pub user_timestamp: f64,
    #[serde(default)]
    pub slots: Vec<Slot>,
    /// Expert response-quality label on the 1..=5 scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rq_rating: Option<f64>,
}

impl Turn {
    pub fn has_nlu(&self) -> bool {
        self.nlu_confidence.is_some() || self.nlu_intent.is_some() || self.nlu_domain.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DialogueSystem {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserGroup {
    Novice,
    SomeExperience,
    Experienced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub system: DialogueSystem,
    pub user_group: UserGroup,
    pub turns: Vec<Turn>,
    /// End-user rating of the whole dialogue on the 1..=5 scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue_rating: Option<f64>,
    /// Free-form annotations; the synthetic generator stores latent values here.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub dialogues: Vec<Dialogue>,
    pub metadata: BTreeMap<String, String>,
}

/// Summary counts in the shape of a per-system corpus statistics table.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub n_dialogues: usize,
    pub n_turns: usize,
    pub avg_turns: f64,
}

fn invalid(d: &Dialogue, field: &str, message: impl Into<String>) -> CorpusError {
    CorpusError::Invalid {
        dialogue_id: d.dialogue_id.clone(),
        field: field.to_string(),
        message: message.into(),
    }
}

fn check_unit(d: &Dialogue, field: &str, v: f64) -> Result<(), CorpusError> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(d, field, format!("{v} outside [0, 1]")))
    }
}

pub(crate) fn check_rating(d: &Dialogue, field: &str, v: f64) -> Result<(), CorpusError> {
    if v.is_finite() && (1.0..=5.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(d, field, format!("{v} outside [1, 5]")))
    }
}

impl Dialogue {
    /// Checks every per-dialogue invariant.
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.turns.is_empty() {
            return Err(invalid(self, "turns", "dialogue has no turns"));
        }
        if let Some(r) = self.dialogue_rating {
            check_rating(self, "dialogue_rating", r)?;
        }
        let mut ids = HashSet::new();
        let mut last_ts = f64::NEG_INFINITY;
        for t in &self.turns {
            if !ids.insert(t.turn_id.as_str()) {
                return Err(invalid(self, "turn_id", format!("duplicate turn id {}", t.turn_id)));
            }
            check_unit(self, "asr_confidence", t.asr_confidence)?;
            if let Some(c) = t.nlu_confidence {
                check_unit(self, "nlu_confidence", c)?;
            }
            if let Some(r) = t.rq_rating {
                check_rating(self, "rq_rating", r)?;
            }
            if !t.user_timestamp.is_finite() {
                return Err(invalid(self, "user_timestamp", "non-finite timestamp"));
            }
            if t.user_timestamp < last_ts {
                return Err(invalid(
                    self,
                    "user_timestamp",
                    format!("turn {} goes back in time", t.turn_id),
                ));
            }
            last_ts = t.user_timestamp;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }
}

impl Corpus {
    pub fn new(dialogues: Vec<Dialogue>) -> Self {
        Self {
            dialogues,
            metadata: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut ids = HashSet::new();
        for d in &self.dialogues {
            if !ids.insert(d.dialogue_id.as_str()) {
                return Err(invalid(d, "dialogue_id", "duplicate dialogue id"));
            }
            d.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn n_turns(&self) -> usize {
        self.dialogues.iter().map(|d| d.turns.len()).sum()
    }

    pub fn stats(&self) -> CorpusStats {
        let n_turns = self.n_turns();
        CorpusStats {
            n_dialogues: self.len(),
            n_turns,
            avg_turns: if self.is_empty() { 0.0 } else { n_turns as f64 / self.len() as f64 },
        }
    }

    /// Sub-corpus holding the dialogues at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Corpus {
        Corpus {
            dialogues: indices.iter().map(|&i| self.dialogues[i].clone()).collect(),
            metadata: self.metadata.clone(),
        }
    }
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;

    pub fn turn(id: &str, user: &str, system: &str, ts: f64) -> Turn {
        Turn {
            turn_id: id.to_string(),
            user_text: user.to_string(),
            system_text: system.to_string(),
            asr_confidence: 0.9,
            nlu_confidence: Some(0.8),
            nlu_intent: Some("PlayMusic".into()),
            nlu_domain: Some("Music".into()),
            barge_in: false,
            user_timestamp: ts,
            slots: vec![],
            rq_rating: Some(4.0),
        }
    }

    pub fn dialogue(id: &str, turns: Vec<Turn>) -> Dialogue {
        Dialogue {
            dialogue_id: id.to_string(),
            system: DialogueSystem::A,
            user_group: UserGroup::Novice,
            turns,
            dialogue_rating: Some(3.0),
            metadata: BTreeMap::new(),
        }
    }
}
