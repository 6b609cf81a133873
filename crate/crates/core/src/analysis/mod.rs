//! Post-hoc analyses: PMI between slot types and rating labels, slot-value
//! coverage of training subsets, and attention-weight reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Dialogue};
use crate::embedding::cosine_slices;
use crate::models::{predict, ModelError, ModelParameters};
use crate::tensor::Tensor;
use crate::Scored;

pub use crate::models::noise_ratio;

pub const N_LABELS: usize = 5;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no observations")]
    Empty,
    #[error("tables have different slot-type axes")]
    AxisMismatch,
    #[error("reference corpus has no slot values")]
    NoSlotValues,
    #[error("model variant {0} has no attention")]
    NoAttention(&'static str),
    #[error("dialogue has {turns} turns, feature matrix has {rows} rows")]
    Shape { turns: usize, rows: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Nearest integer label on the 1..=5 scale.
pub fn rating_category(r: f64) -> usize {
    (r.round() as i64).clamp(1, N_LABELS as i64) as usize
}

/// Slot type × rating label contingency table with PMI values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmiTable {
    pub slot_types: Vec<String>,
    /// `counts[s][label - 1]`.
    pub counts: Vec<[u64; N_LABELS]>,
    /// `None` where the joint count is zero.
    pub pmi: Vec<[Option<f64>; N_LABELS]>,
}

impl PmiTable {
    /// PMI of `(slot type, label)` from counts, natural log.
    pub fn from_counts(slot_types: Vec<String>, counts: Vec<[u64; N_LABELS]>) -> Result<Self, AnalysisError> {
        let total: u64 = counts.iter().flatten().sum();
        if total == 0 {
            return Err(AnalysisError::Empty);
        }
        let n = total as f64;
        let row: Vec<f64> = counts.iter().map(|r| r.iter().sum::<u64>() as f64 / n).collect();
        let col: Vec<f64> = (0..N_LABELS)
            .map(|l| counts.iter().map(|r| r[l]).sum::<u64>() as f64 / n)
            .collect();
        let pmi = counts
            .iter()
            .zip(&row)
            .map(|(r, px)| {
                let mut out = [None; N_LABELS];
                for l in 0..N_LABELS {
                    if r[l] > 0 {
                        out[l] = Some((r[l] as f64 / n / (px * col[l])).ln());
                    }
                }
                out
            })
            .collect();
        Ok(Self { slot_types, counts, pmi })
    }

    /// Table over the given slot-type axis; observations with other slot
    /// types are ignored.
    pub fn with_axis<S: AsRef<str>>(observations: &[(S, f64)], axis: &[String]) -> Result<Self, AnalysisError> {
        let pos: BTreeMap<&str, usize> = axis.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut counts = vec![[0u64; N_LABELS]; axis.len()];
        for (s, r) in observations {
            if let Some(&i) = pos.get(s.as_ref()) {
                counts[i][rating_category(*r) - 1] += 1;
            }
        }
        Self::from_counts(axis.to_vec(), counts)
    }

    /// Table whose axis is the sorted set of observed slot types.
    pub fn from_observations<S: AsRef<str>>(observations: &[(S, f64)]) -> Result<Self, AnalysisError> {
        let axis: Vec<String> = observations
            .iter()
            .map(|(s, _)| s.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Self::with_axis(observations, &axis)
    }

    /// Flattened row-major vector with undefined cells as 0.
    pub fn flatten(&self) -> Vec<f64> {
        self.pmi.iter().flat_map(|r| r.iter().map(|v| v.unwrap_or(0.0))).collect()
    }

    pub fn n_undefined(&self) -> usize {
        self.pmi.iter().flatten().filter(|v| v.is_none()).count()
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("slot_type");
        for l in 1..=N_LABELS {
            write!(out, "\tpmi_{l}").expect("string write");
        }
        for l in 1..=N_LABELS {
            write!(out, "\tcount_{l}").expect("string write");
        }
        out.push('\n');
        for (i, s) in self.slot_types.iter().enumerate() {
            out.push_str(s);
            for v in &self.pmi[i] {
                match v {
                    Some(x) => write!(out, "\t{x:.4}").expect("string write"),
                    None => out.push_str("\tundefined"),
                }
            }
            for c in &self.counts[i] {
                write!(out, "\t{c}").expect("string write");
            }
            out.push('\n');
        }
        out
    }
}

/// `(slot type, rq label)` for every slot of every labeled turn.
pub fn slot_label_observations(corpus: &Corpus) -> Vec<(String, f64)> {
    corpus
        .dialogues
        .iter()
        .flat_map(|d| &d.turns)
        .filter_map(|t| t.rq_rating.map(|r| (t, r)))
        .flat_map(|(t, r)| t.slots.iter().map(move |s| (s.slot_type.clone(), r)))
        .collect()
}

/// PMI of slot types against the corpus' rq labels.
pub fn pmi_table(corpus: &Corpus) -> Result<PmiTable, AnalysisError> {
    PmiTable::from_observations(&slot_label_observations(corpus))
}

/// Cosine of two flattened PMI tables on the same axes.
pub fn pmi_cosine(subset: &PmiTable, full: &PmiTable) -> Result<Scored, AnalysisError> {
    if subset.slot_types != full.slot_types {
        return Err(AnalysisError::AxisMismatch);
    }
    Ok(cosine_slices(&subset.flatten(), &full.flatten()).expect("equal lengths"))
}

fn slot_pairs(corpus: &Corpus) -> BTreeSet<(&str, &str)> {
    corpus
        .dialogues
        .iter()
        .flat_map(|d| &d.turns)
        .flat_map(|t| &t.slots)
        .map(|s| (s.slot_type.as_str(), s.slot_value.as_str()))
        .collect()
}

/// Share of the full corpus' unique (slot type, value) pairs present in
/// the subset.
pub fn slot_value_coverage(subset: &Corpus, full: &Corpus) -> Result<f64, AnalysisError> {
    let all = slot_pairs(full);
    if all.is_empty() {
        return Err(AnalysisError::NoSlotValues);
    }
    let sub = slot_pairs(subset);
    Ok(sub.intersection(&all).count() as f64 / all.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRow {
    pub turn_id: String,
    pub user_text: String,
    pub system_text: String,
    pub weight: f64,
    pub predicted: Option<f64>,
    pub label: Option<f64>,
    /// Weight at or above the dialogue's median weight.
    pub top_half: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionReport {
    pub dialogue_id: String,
    pub rows: Vec<AttentionRow>,
    pub predicted_rating: Option<f64>,
    pub dialogue_rating: Option<f64>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Flags the weights at or above the median.
pub fn top_half_flags(weights: &[f64]) -> Vec<bool> {
    if weights.is_empty() {
        return Vec::new();
    }
    let m = median(weights);
    weights.iter().map(|w| *w >= m).collect()
}

/// Per-turn attention weights, predicted and labeled ratings.
pub fn attention_report(
    params: &ModelParameters,
    dialogue: &Dialogue,
    features: &Tensor,
) -> Result<AttentionReport, AnalysisError> {
    if !params.config.uses_attention() {
        return Err(AnalysisError::NoAttention(params.config.variant.name()));
    }
    if features.rows() != dialogue.turns.len() {
        return Err(AnalysisError::Shape {
            turns: dialogue.turns.len(),
            rows: features.rows(),
        });
    }
    let pred = predict(params, features)?;
    let weights = pred.attention_weights.expect("attention variant");
    let flags = top_half_flags(&weights);
    let rows = dialogue
        .turns
        .iter()
        .enumerate()
        .map(|(i, t)| AttentionRow {
            turn_id: t.turn_id.clone(),
            user_text: t.user_text.clone(),
            system_text: t.system_text.clone(),
            weight: weights[i],
            predicted: pred.turn_ratings.get(i).copied(),
            label: t.rq_rating,
            top_half: flags[i],
        })
        .collect();
    Ok(AttentionReport {
        dialogue_id: dialogue.dialogue_id.clone(),
        rows,
        predicted_rating: pred.dialogue_rating,
        dialogue_rating: dialogue.dialogue_rating,
    })
}

impl AttentionReport {
    /// Transcript rendering; top-half weights are marked with `*`.
    pub fn render_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
        let mut out = format!(
            "dialogue {}  rating {}  predicted {}\n",
            self.dialogue_id,
            opt(self.dialogue_rating),
            opt(self.predicted_rating)
        );
        out.push_str("  w_attn   r_hat  rq    turn\n");
        for r in &self.rows {
            let mark = if r.top_half { '*' } else { ' ' };
            writeln!(
                out,
                "{mark} {:.3}   {:>5}  {:>4}  U: {}\n                         S: {}",
                r.weight,
                opt(r.predicted),
                opt(r.label),
                r.user_text,
                r.system_text
            )
            .expect("string write");
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("dialogue_id\tturn_id\tw_attn\tr_hat\trq\ttop_half\tuser_text\tsystem_text\n");
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
            writeln!(
                out,
                "{}\t{}\t{:.4}\t{}\t{}\t{}\t{}\t{}",
                self.dialogue_id,
                r.turn_id,
                r.weight,
                opt(r.predicted),
                opt(r.label),
                r.top_half,
                r.user_text.replace('\t', " "),
                r.system_text.replace('\t', " ")
            )
            .expect("string write");
        }
        out
    }
}

/// Mean attention weight on dissatisfactory (rq < 3) and satisfactory turns
/// over a set of reports; `None` where a class is absent.
pub fn attention_by_class(reports: &[AttentionReport]) -> (Option<f64>, Option<f64>) {
    let mut sums = [(0.0, 0usize); 2];
    for r in reports.iter().flat_map(|r| &r.rows) {
        if let Some(label) = r.label {
            let k = usize::from(label >= 3.0);
            sums[k].0 += r.weight;
            sums[k].1 += 1;
        }
    }
    let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
    (mean(sums[0]), mean(sums[1]))
}
