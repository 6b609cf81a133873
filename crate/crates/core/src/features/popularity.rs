use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DialogueSystem};

/// Average number of requests per user for each NLU domain and intent.
///
/// Users are approximated by dialogues, since the corpus carries no user id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PopularityTables {
    pub domain_popularity: BTreeMap<String, f64>,
    pub intent_popularity: BTreeMap<String, f64>,
    pub default: f64,
}

impl PopularityTables {
    pub fn domain(&self, d: &str) -> f64 {
        self.domain_popularity.get(d).copied().unwrap_or(self.default)
    }

    pub fn intent(&self, i: &str) -> f64 {
        self.intent_popularity.get(i).copied().unwrap_or(self.default)
    }
}

/// Builds popularity tables; call on the training split only.
pub fn compute_popularity_tables(train: &Corpus) -> PopularityTables {
    let mut domains: BTreeMap<String, f64> = BTreeMap::new();
    let mut intents: BTreeMap<String, f64> = BTreeMap::new();
    for d in train.dialogues.iter().filter(|d| d.system == DialogueSystem::A) {
        for t in &d.turns {
            if let Some(x) = &t.nlu_domain {
                *domains.entry(x.clone()).or_default() += 1.0;
            }
            if let Some(x) = &t.nlu_intent {
                *intents.entry(x.clone()).or_default() += 1.0;
            }
        }
    }
    let users = train.len().max(1) as f64;
    domains.values_mut().for_each(|v| *v /= users);
    intents.values_mut().for_each(|v| *v /= users);
    PopularityTables {
        domain_popularity: domains,
        intent_popularity: intents,
        default: 0.0,
    }
}
