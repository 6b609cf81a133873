//! Line-delimited JSON corpus files.
//!
//! One dialogue object per line. An optional first line of the form
//! `{"corpus_metadata": {...}}` carries corpus-level metadata; it is written
//! only when the metadata map is nonempty.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::Value;

use super::{Corpus, CorpusError, Dialogue};

const HEADER_KEY: &str = "corpus_metadata";

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_corpus(&text)
}

/// Parses and validates corpus text.
pub fn parse_corpus(text: &str) -> Result<Corpus, CorpusError> {
    let mut corpus = Corpus::default();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| CorpusError::Parse { line: lineno, message };
        let value: Value = serde_json::from_str(line).map_err(|e| parse(e.to_string()))?;
        if let Some(meta) = value.get(HEADER_KEY) {
            if !corpus.dialogues.is_empty() || !corpus.metadata.is_empty() {
                return Err(parse("corpus_metadata must be the first record".into()));
            }
            corpus.metadata = serde_json::from_value::<BTreeMap<String, String>>(meta.clone())
                .map_err(|e| parse(e.to_string()))?;
            continue;
        }
        let dialogue: Dialogue = serde_json::from_value(value).map_err(|e| parse(e.to_string()))?;
        dialogue.validate()?;
        if !seen.insert(dialogue.dialogue_id.clone()) {
            return Err(CorpusError::Invalid {
                dialogue_id: dialogue.dialogue_id,
                field: "dialogue_id".into(),
                message: format!("duplicate dialogue id (line {lineno})"),
            });
        }
        corpus.dialogues.push(dialogue);
    }
    Ok(corpus)
}

/// Serializes a corpus to its line-delimited text form.
pub fn write_corpus(corpus: &Corpus, mut out: impl Write) -> std::io::Result<()> {
    if !corpus.metadata.is_empty() {
        let header = serde_json::json!({ HEADER_KEY: corpus.metadata });
        writeln!(out, "{header}")?;
    }
    for d in &corpus.dialogues {
        let line = serde_json::to_string(d).map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_corpus(corpus, &mut buf).map_err(|e| io_err(path, e))?;
    fs::write(path, buf).map_err(|e| io_err(path, e))
}
