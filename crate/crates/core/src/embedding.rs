//! Sentence-embedding providers and vector similarity.
//!
//! Two providers sit behind [`EmbeddingProvider`]: a lookup table loaded from
//! a text file (for precomputed encoder outputs) and a deterministic hashed
//! n-gram encoder used when no table is available.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::tokenize;
use crate::Scored;

pub const DEFAULT_DIMENSION: usize = 512;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("no embedding for text {0:?}")]
    Miss(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("line {line}: key {key:?} has dimension {found}, expected {expected}")]
    InconsistentRow {
        line: usize,
        key: String,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dimension must be >= 1")]
    ZeroDimension,
    #[error("non-finite value for key {0:?}")]
    NonFinite(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn zeros(dimension: usize) -> Self {
        Self(vec![0.0; dimension])
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Cosine similarity; zero-norm inputs give 0 flagged degenerate.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<Scored, EmbeddingError> {
    cosine_slices(a.as_slice(), b.as_slice())
}

pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<Scored, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(Scored::degenerate(0.0));
    }
    Ok(Scored::new((dot / (na * nb)).clamp(-1.0, 1.0)))
}

/// Signed feature hashing of word 1- to 3-grams, L2-normalized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashedEncoder {
    pub dimension: usize,
    pub seed: u64,
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    // final avalanche so low bits depend on every byte
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^ (h >> 33)
}

impl HashedEncoder {
    pub fn new(dimension: usize, seed: u64) -> Result<Self, EmbeddingError> {
        if dimension == 0 {
            return Err(EmbeddingError::ZeroDimension);
        }
        Ok(Self { dimension, seed })
    }

    pub fn encode(&self, text: &str) -> EmbeddingVector {
        let tokens = tokenize(text);
        let mut v = vec![0.0; self.dimension];
        for n in 1..=3 {
            for gram in tokens.windows(n) {
                let h = fnv1a(self.seed, gram.join(" ").as_bytes());
                let bucket = (h % self.dimension as u64) as usize;
                v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        EmbeddingVector(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    rows: HashMap<String, EmbeddingVector>,
    source: Option<PathBuf>,
    fallback: Option<HashedEncoder>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Result<Self, EmbeddingError> {
        if dimension == 0 {
            return Err(EmbeddingError::ZeroDimension);
        }
        Ok(Self {
            dimension,
            rows: HashMap::new(),
            source: None,
            fallback: None,
        })
    }

    pub fn insert(&mut self, key: String, v: EmbeddingVector) -> Result<(), EmbeddingError> {
        if v.dimension() != self.dimension {
            return Err(EmbeddingError::InconsistentRow {
                line: 0,
                key,
                expected: self.dimension,
                found: v.dimension(),
            });
        }
        if v.0.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite(key));
        }
        if self.rows.contains_key(&key) {
            return Err(EmbeddingError::DuplicateKey { line: 0, key });
        }
        self.rows.insert(key, v);
        Ok(())
    }

    /// Serves misses from a hashed encoder with the same dimension.
    pub fn with_fallback(mut self, seed: u64) -> Self {
        self.fallback = Some(HashedEncoder {
            dimension: self.dimension,
            seed,
        });
        self
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, text: &str) -> Option<&EmbeddingVector> {
        self.rows.get(text)
    }

    /// Writes the table in `key<TAB>v1 v2 ... vD` form, keys sorted.
    pub fn export(&self, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
        let path = path.as_ref();
        let mut keys: Vec<&String> = self.rows.keys().collect();
        keys.sort();
        let mut out = String::new();
        for k in keys {
            out.push_str(k);
            out.push('\t');
            for (i, x) in self.rows[k].0.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write!(out, "{x}").expect("string write");
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Serializable identity of a provider, recorded next to checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderSpec {
    Hashed {
        dimension: usize,
        seed: u64,
    },
    Table {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fallback_seed: Option<u64>,
    },
}

impl ProviderSpec {
    pub fn build(&self) -> Result<EmbeddingProvider, EmbeddingError> {
        match self {
            ProviderSpec::Hashed { dimension, seed } => {
                Ok(EmbeddingProvider::Hashed(HashedEncoder::new(*dimension, *seed)?))
            }
            ProviderSpec::Table { path, fallback_seed } => {
                let mut provider = load_embedding_table(path)?;
                if let (EmbeddingProvider::Table(t), Some(seed)) = (&mut provider, fallback_seed) {
                    *t = t.clone().with_fallback(*seed);
                }
                Ok(provider)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingProvider {
    Table(EmbeddingTable),
    Hashed(HashedEncoder),
}

impl EmbeddingProvider {
    pub fn hashed(dimension: usize, seed: u64) -> Result<Self, EmbeddingError> {
        Ok(Self::Hashed(HashedEncoder::new(dimension, seed)?))
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::Table(t) => t.dimension,
            Self::Hashed(h) => h.dimension,
        }
    }

    /// Identity for manifests. Tables built in memory have no path and
    /// record an empty one.
    pub fn spec(&self) -> ProviderSpec {
        match self {
            Self::Hashed(h) => ProviderSpec::Hashed {
                dimension: h.dimension,
                seed: h.seed,
            },
            Self::Table(t) => ProviderSpec::Table {
                path: t.source.clone().unwrap_or_default(),
                fallback_seed: t.fallback.as_ref().map(|f| f.seed),
            },
        }
    }

    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        match self {
            Self::Hashed(h) => Ok(h.encode(text)),
            Self::Table(t) => match (t.rows.get(text), &t.fallback) {
                (Some(v), _) => Ok(v.clone()),
                (None, Some(f)) => Ok(f.encode(text)),
                (None, None) => Err(EmbeddingError::Miss(text.to_string())),
            },
        }
    }
}

pub fn embed_text(provider: &EmbeddingProvider, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
    provider.embed_text(text)
}

/// Loads a `key<TAB>v1 ... vD` table. All rows must share one dimension.
pub fn load_embedding_table(path: impl AsRef<Path>) -> Result<EmbeddingProvider, EmbeddingError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut table = parse_embedding_table(&text)?;
    table.source = Some(path.to_path_buf());
    Ok(EmbeddingProvider::Table(table))
}

pub fn parse_embedding_table(text: &str) -> Result<EmbeddingTable, EmbeddingError> {
    let mut rows = HashMap::new();
    let mut dimension = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let (key, values) = line.split_once('\t').ok_or_else(|| EmbeddingError::Parse {
            line: lineno,
            message: "missing tab separator".into(),
        })?;
        let v: Vec<f64> = values
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| EmbeddingError::Parse {
                line: lineno,
                message: format!("key {key:?}: {e}"),
            })?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite(key.to_string()));
        }
        let expected = *dimension.get_or_insert(v.len());
        if v.len() != expected || expected == 0 {
            return Err(EmbeddingError::InconsistentRow {
                line: lineno,
                key: key.to_string(),
                expected,
                found: v.len(),
            });
        }
        if rows.insert(key.to_string(), EmbeddingVector(v)).is_some() {
            return Err(EmbeddingError::DuplicateKey {
                line: lineno,
                key: key.to_string(),
            });
        }
    }
    let dimension = dimension.ok_or(EmbeddingError::ZeroDimension)?;
    Ok(EmbeddingTable {
        dimension,
        rows,
        source: None,
        fallback: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hashed_is_deterministic_unit_norm_and_zero_for_empty() {
        let p = EmbeddingProvider::hashed(64, 3).unwrap();
        let a = p.embed_text("play music now").unwrap();
        assert_eq!(a, p.embed_text("play music now").unwrap());
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert_eq!(p.embed_text("").unwrap(), EmbeddingVector::zeros(64));
        assert_eq!(p.embed_text("  !! ").unwrap(), EmbeddingVector::zeros(64));
        let other_seed = EmbeddingProvider::hashed(64, 4).unwrap();
        assert_ne!(a, other_seed.embed_text("play music now").unwrap());
    }

    #[test]
    fn cosine_anchors() {
        let v = |x: &[f64]| EmbeddingVector(x.to_vec());
        let a = v(&[1.0, 2.0, 2.0]);
        assert!((cosine_similarity(&a, &a).unwrap().value - 1.0).abs() < 1e-12);
        let e1 = v(&[1.0, 0.0]);
        let e2 = v(&[0.0, 1.0]);
        assert_eq!(cosine_similarity(&e1, &e2).unwrap().value, 0.0);
        let c = cosine_similarity(&a, &v(&[2.0, 1.0, 2.0])).unwrap();
        assert!((c.value - 8.0 / 9.0).abs() < 1e-12);
        let z = cosine_similarity(&a, &v(&[0.0, 0.0, 0.0])).unwrap();
        assert!(z.degenerate && z.value == 0.0);
        assert!(cosine_similarity(&a, &e1).is_err());
    }

    #[test]
    fn table_load_lookup_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.tsv");
        fs::write(&path, "hello\t1 0 0 0\nplay music\t0 1 0 0.5\n\t0 0 1 0\n").unwrap();
        let p = load_embedding_table(&path).unwrap();
        assert_eq!(p.dimension(), 4);
        assert_eq!(p.embed_text("play music").unwrap().0, vec![0.0, 1.0, 0.0, 0.5]);
        assert_eq!(p.embed_text("").unwrap().0, vec![0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(p.embed_text("absent"), Err(EmbeddingError::Miss(_))));

        let EmbeddingProvider::Table(t) = &p else { panic!() };
        let out = dir.path().join("out.tsv");
        t.export(&out).unwrap();
        let back = load_embedding_table(&out).unwrap();
        for k in ["hello", "play music", ""] {
            assert_eq!(back.embed_text(k).unwrap(), p.embed_text(k).unwrap());
        }

        let with_fb = t.clone().with_fallback(1);
        let fb = EmbeddingProvider::Table(with_fb);
        assert_eq!(fb.embed_text("absent").unwrap().dimension(), 4);

        let mixed = parse_embedding_table("a\t1 2\nbad key\t1 2 3\n").unwrap_err();
        assert!(mixed.to_string().contains("bad key"), "{mixed}");
        let dup = parse_embedding_table("a\t1 2\na\t3 4\n").unwrap_err();
        assert!(matches!(dup, EmbeddingError::DuplicateKey { .. }));
    }

    #[test]
    fn spec_round_trip_builds_same_provider() {
        let p = EmbeddingProvider::hashed(16, 9).unwrap();
        let spec = p.spec();
        let json = serde_json::to_string(&spec).unwrap();
        let back: ProviderSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.build().unwrap(), p);
    }

    proptest! {
        #[test]
        fn cosine_symmetric_scale_invariant_bounded(
            a in proptest::collection::vec(-10.0f64..10.0, 6),
            b in proptest::collection::vec(-10.0f64..10.0, 6),
            lambda in 0.01f64..100.0,
        ) {
            let ab = cosine_slices(&a, &b).unwrap().value;
            let ba = cosine_slices(&b, &a).unwrap().value;
            prop_assert_eq!(ab, ba);
            let scaled: Vec<f64> = a.iter().map(|x| x * lambda).collect();
            prop_assert!((cosine_slices(&scaled, &b).unwrap().value - ab).abs() < 1e-12);
            prop_assert!(ab.abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn hashed_is_pure(text in "[a-z ]{0,40}", seed in any::<u64>()) {
            let h = HashedEncoder::new(32, seed).unwrap();
            prop_assert_eq!(h.encode(&text), h.encode(&text));
        }
    }
}
