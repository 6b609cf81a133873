use rand::seq::SliceRandom;

use super::{Corpus, CorpusError};
use crate::seed;

/// Partitions dialogues into (train, validation, test).
///
/// Val and test sizes are `floor(n * ratio)`; the remainder goes to train.
/// Whole dialogues move together, so no dialogue's turns straddle splits.
pub fn split_corpus(
    corpus: &Corpus,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus), CorpusError> {
    let (rt, rv, rs) = ratios;
    let all = [rt, rv, rs];
    if all.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(CorpusError::Split(format!("ratios must be nonnegative: {ratios:?}")));
    }
    if ((rt + rv + rs) - 1.0).abs() > 1e-9 {
        return Err(CorpusError::Split(format!("ratios must sum to 1: {ratios:?}")));
    }
    let n = corpus.len();
    let buckets = all.iter().filter(|r| **r > 0.0).count();
    if n < buckets {
        return Err(CorpusError::Split(format!(
            "{n} dialogues cannot fill {buckets} nonempty splits"
        )));
    }
    let n_val = (n as f64 * rv).floor() as usize;
    let n_test = (n as f64 * rs).floor() as usize;
    let n_train = n - n_val - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let (train, rest) = order.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    Ok((corpus.select(train), corpus.select(val), corpus.select(test)))
}
