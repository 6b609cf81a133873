//! Synthetic multi-domain dialogues with planted ground truth.
//!
//! Each turn gets a latent quality `q` in [1, 5]. Everything observable is
//! drawn conditionally on `q`: ASR/NLU confidences, barge-in, the kind of
//! system response (fulfilled, partial, failed, garbage), whether the next
//! user request rephrases the current one, and which slot types appear.
//! Labels are the latent values plus Gaussian noise, clamped to [1, 5].
//! Latent values are kept in dialogue metadata and never surface as features.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Dialogue, DialogueSystem, Slot, Turn, UserGroup};
use crate::{par, seed};

pub const LATENT_Q_KEY: &str = "latent_q";
pub const LATENT_RATING_KEY: &str = "latent_rating";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    UniformMean,
    FailureWeighted,
}

impl Aggregation {
    /// Latent dialogue rating from latent turn qualities.
    ///
    /// `FailureWeighted` gives turns with `q < 3` weight `failure_weight`
    /// relative to the rest, normalized.
    pub fn aggregate(self, q: &[f64], failure_weight: f64) -> f64 {
        match self {
            Aggregation::UniformMean => q.iter().sum::<f64>() / q.len() as f64,
            Aggregation::FailureWeighted => {
                let w = |x: f64| if x < 3.0 { failure_weight } else { 1.0 };
                let total: f64 = q.iter().map(|&x| w(x)).sum();
                q.iter().map(|&x| w(x) * x).sum::<f64>() / total
            }
        }
    }
}

fn default_failure_weight() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_dialogues: usize,
    pub domains: Vec<String>,
    pub avg_turns: f64,
    /// Std of the noise added to latent turn quality to form `rq_rating`.
    pub sigma_turn: f64,
    /// Std of the noise added to the latent dialogue rating.
    pub sigma_dialogue: f64,
    pub aggregation: Aggregation,
    pub seed: u64,
    #[serde(default = "default_failure_weight")]
    pub failure_weight: f64,
    /// Fraction of dialogues routed through system B, which has no NLU.
    #[serde(default)]
    pub system_b_fraction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_dialogues: 500,
            domains: DOMAINS.iter().map(|d| d.name.to_string()).collect(),
            avg_turns: 5.0,
            sigma_turn: 0.3,
            sigma_dialogue: 0.6,
            aggregation: Aggregation::UniformMean,
            seed: 0,
            failure_weight: default_failure_weight(),
            system_b_fraction: 0.0,
        }
    }
}

impl SyntheticConfig {
    // Negated comparisons so that NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::Config(m.to_string()));
        if self.n_dialogues < 1 {
            return bad("n_dialogues must be >= 1");
        }
        if !(self.avg_turns >= 1.0) || !self.avg_turns.is_finite() {
            return bad("avg_turns must be >= 1");
        }
        if !(self.sigma_turn >= 0.0) || !(self.sigma_dialogue >= 0.0) {
            return bad("noise std must be >= 0");
        }
        if self.domains.is_empty() {
            return bad("domains must be nonempty");
        }
        if !(self.failure_weight > 0.0) {
            return bad("failure_weight must be > 0");
        }
        if !(0.0..=1.0).contains(&self.system_b_fraction) {
            return bad("system_b_fraction must be in [0, 1]");
        }
        Ok(())
    }
}

struct SlotKind {
    name: &'static str,
    values: &'static [&'static str],
    /// How strongly this slot type is over-represented on failed turns.
    failure_affinity: f64,
}

const SLOT_KINDS: &[SlotKind] = &[
    SlotKind {
        name: "theater",
        values: &[
            "amc empire", "regal union square", "cinemark plaza", "alamo drafthouse",
            "landmark sunshine", "ipic fulton", "amc lincoln square", "village east",
            "nitehawk prospect", "angelika film center",
        ],
        failure_affinity: 1.0,
    },
    SlotKind {
        name: "number",
        values: &["the fourth one", "the second one", "number three", "the first one", "two", "five", "the last one"],
        failure_affinity: 0.7,
    },
    SlotKind {
        name: "movie_name",
        values: &[
            "joker", "frozen two", "parasite", "little women", "star wars", "knives out",
            "ford v ferrari", "the irishman", "jojo rabbit", "nineteen seventeen",
        ],
        failure_affinity: 0.1,
    },
    SlotKind {
        name: "time",
        values: &["seven pm", "noon", "eight thirty", "tomorrow morning", "nine pm", "six fifteen", "ten am"],
        failure_affinity: 0.2,
    },
    SlotKind {
        name: "city",
        values: &["seattle", "boston", "austin", "denver", "chicago", "miami", "portland", "atlanta"],
        failure_affinity: 0.0,
    },
    SlotKind {
        name: "artist",
        values: &["taylor swift", "miles davis", "the beatles", "adele", "drake", "queen", "beyonce", "nina simone"],
        failure_affinity: 0.1,
    },
    SlotKind {
        name: "genre",
        values: &["jazz", "rock", "classical", "pop", "hip hop", "country", "comedy", "drama"],
        failure_affinity: 0.0,
    },
    SlotKind {
        name: "date",
        values: &["today", "tomorrow", "this weekend", "friday", "next monday", "saturday"],
        failure_affinity: 0.0,
    },
    SlotKind {
        name: "cuisine",
        values: &["thai", "italian", "sushi", "mexican", "indian", "korean"],
        failure_affinity: 0.0,
    },
    SlotKind {
        name: "restaurant",
        values: &["olive garden", "nobu", "shake shack", "the grill", "blue hill", "carbone"],
        failure_affinity: 0.5,
    },
    SlotKind {
        name: "party_size",
        values: &["two people", "four people", "a party of six", "three of us"],
        failure_affinity: 0.3,
    },
    SlotKind {
        name: "item",
        values: &["batteries", "paper towels", "headphones", "coffee beans", "dog food", "light bulbs"],
        failure_affinity: 0.2,
    },
    SlotKind {
        name: "topic",
        values: &["sports", "politics", "technology", "business", "science"],
        failure_affinity: 0.0,
    },
    SlotKind {
        name: "duration",
        values: &["ten minutes", "an hour", "thirty seconds", "five minutes", "twenty minutes"],
        failure_affinity: 0.0,
    },
];

struct IntentSpec {
    name: &'static str,
    phrases: &'static [&'static str],
}

struct DomainSpec {
    name: &'static str,
    intents: &'static [IntentSpec],
    slot_types: &'static [&'static str],
    success: &'static [&'static str],
}

const DOMAINS: &[DomainSpec] = &[
    DomainSpec {
        name: "Music",
        intents: &[
            IntentSpec { name: "PlayMusic", phrases: &["play", "put on", "i want to hear", "play some"] },
            IntentSpec { name: "ShuffleMusic", phrases: &["shuffle", "shuffle songs by"] },
        ],
        slot_types: &["artist", "genre"],
        success: &["playing", "here is", "now playing music by"],
    },
    DomainSpec {
        name: "Weather",
        intents: &[IntentSpec {
            name: "GetWeather",
            phrases: &["what is the weather in", "weather forecast for", "will it rain in"],
        }],
        slot_types: &["city", "date"],
        success: &["here is the forecast for", "it will be sunny and mild in"],
    },
    DomainSpec {
        name: "Movies",
        intents: &[
            IntentSpec { name: "FindShowtimes", phrases: &["show times for", "when is the movie playing at", "movies at"] },
            IntentSpec { name: "BuyTickets", phrases: &["buy tickets for", "book seats at", "get me tickets to"] },
        ],
        slot_types: &["theater", "movie_name", "time", "number", "date", "party_size", "city", "genre"],
        success: &["today at", "i booked your tickets for", "here are the show times for"],
    },
    DomainSpec {
        name: "Restaurants",
        intents: &[
            IntentSpec { name: "BookTable", phrases: &["book a table at", "reserve a table at"] },
            IntentSpec { name: "FindRestaurant", phrases: &["find a restaurant serving", "where can i get"] },
        ],
        slot_types: &["restaurant", "cuisine", "time", "party_size"],
        success: &["your table is booked at", "i found a great place for"],
    },
    DomainSpec {
        name: "Cab",
        intents: &[IntentSpec { name: "BookCab", phrases: &["get me a cab to", "book a ride to", "call a taxi to"] }],
        slot_types: &["city", "time"],
        success: &["your ride is on the way to", "a driver will pick you up for"],
    },
    DomainSpec {
        name: "Shopping",
        intents: &[IntentSpec { name: "AddToCart", phrases: &["add to my cart", "order", "buy"] }],
        slot_types: &["item", "number"],
        success: &["i added", "your order includes"],
    },
    DomainSpec {
        name: "News",
        intents: &[IntentSpec { name: "GetNews", phrases: &["read me the news about", "what is new in"] }],
        slot_types: &["topic"],
        success: &["here are the top headlines about", "in"],
    },
    DomainSpec {
        name: "Timer",
        intents: &[IntentSpec { name: "SetTimer", phrases: &["set a timer for", "start a timer for"] }],
        slot_types: &["duration"],
        success: &["timer set for", "okay starting a timer for"],
    },
];

const GENERIC_INTENT_PHRASES: &[&str] = &["i need help with", "can you do", "show me"];
const GENERIC_SLOTS: &[&str] = &["item", "number"];
const GENERIC_SUCCESS: &[&str] = &["here you go", "done"];

const PARTIAL: &[&str] = &[
    "i found a few options for",
    "you can finish that in the app for",
    "here is some information related to",
    "i can help with part of that for",
];
const FAILED: &[&str] = &[
    "sorry i could not find",
    "i understood but i cannot help with",
    "that is not available right now for",
];
const GARBAGE: &[&str] = &[
    "sorry i don't know that",
    "i am not sure what you mean",
    "here is a fun fact about penguins",
    "a tuesday is a day of the week",
];
const REPHRASE_PREFIX: &[&str] = &["no", "i said", "no i said", "please", "again"];

/// Resolved view of a domain, built-in or generic.
struct Domain<'a> {
    name: &'a str,
    intents: Vec<(String, &'static [&'static str])>,
    slot_types: Vec<&'static SlotKind>,
    success: &'static [&'static str],
}

fn slot_kind(name: &str) -> &'static SlotKind {
    SLOT_KINDS.iter().find(|k| k.name == name).expect("slot kind in catalog")
}

fn resolve_domain(name: &str) -> Domain<'_> {
    match DOMAINS.iter().find(|d| d.name.eq_ignore_ascii_case(name)) {
        Some(spec) => Domain {
            name,
            intents: spec.intents.iter().map(|i| (i.name.to_string(), i.phrases)).collect(),
            slot_types: spec.slot_types.iter().map(|s| slot_kind(s)).collect(),
            success: spec.success,
        },
        None => Domain {
            name,
            intents: vec![(format!("{name}Request"), GENERIC_INTENT_PHRASES)],
            slot_types: GENERIC_SLOTS.iter().map(|s| slot_kind(s)).collect(),
            success: GENERIC_SUCCESS,
        },
    }
}

fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

fn gauss(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, std).expect("finite std").sample(rng)
}

/// A user request before it is attached to a turn.
#[derive(Clone)]
struct Request {
    domain: usize,
    intent: usize,
    slots: Vec<Slot>,
    text: String,
}

fn join_values(slots: &[Slot]) -> String {
    slots.iter().map(|s| s.slot_value.as_str()).collect::<Vec<_>>().join(" and ")
}

fn new_request(rng: &mut ChaCha8Rng, domains: &[Domain], domain: usize, q: f64) -> Request {
    let d = &domains[domain];
    let intent = rng.random_range(0..d.intents.len());
    let failing = if q < 3.0 { 1.0 } else { 0.0 };
    let weights: Vec<f64> = d
        .slot_types
        .iter()
        .map(|k| 1.0 + 4.0 * k.failure_affinity * failing)
        .collect();
    let n_slots = if d.slot_types.len() > 1 && rng.random_bool(0.3) { 2 } else { 1 };
    let mut slots = Vec::with_capacity(n_slots);
    let mut used = Vec::new();
    for _ in 0..n_slots {
        let total: f64 = weights
            .iter()
            .enumerate()
            .filter(|(i, _)| !used.contains(i))
            .map(|(_, w)| w)
            .sum();
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = 0;
        for (i, w) in weights.iter().enumerate() {
            if used.contains(&i) {
                continue;
            }
            chosen = i;
            if pick < *w {
                break;
            }
            pick -= w;
        }
        used.push(chosen);
        let kind = d.slot_types[chosen];
        slots.push(Slot {
            slot_type: kind.name.to_string(),
            slot_value: kind.values.choose(rng).expect("values").to_string(),
        });
    }
    let phrase = d.intents[intent].1.choose(rng).expect("phrases");
    let text = format!("{phrase} {}", join_values(&slots));
    Request {
        domain,
        intent,
        slots,
        text,
    }
}

fn rephrase(rng: &mut ChaCha8Rng, prev: &Request) -> Request {
    let mut r = prev.clone();
    if rng.random_bool(0.7) {
        let prefix = REPHRASE_PREFIX.choose(rng).expect("prefix");
        r.text = format!("{prefix} {}", prev.text);
    }
    r
}

fn system_response(
    rng: &mut ChaCha8Rng,
    domains: &[Domain],
    req: &Request,
    q: f64,
    prev_response: Option<&str>,
) -> String {
    let perceived = q + gauss(rng, 0.35);
    let values = join_values(&req.slots);
    if perceived >= 3.8 {
        let lead = domains[req.domain].success.choose(rng).expect("success");
        if perceived < 4.4 {
            format!("{lead} {values} and here are a few more details you did not ask for")
        } else {
            format!("{lead} {values}")
        }
    } else if perceived >= 2.8 {
        format!("{} {values}", PARTIAL.choose(rng).expect("partial"))
    } else if perceived >= 1.8 {
        format!("{} {values}", FAILED.choose(rng).expect("failed"))
    } else {
        match rng.random_range(0..4) {
            0 => String::new(),
            1 => match prev_response {
                Some(p) if !p.is_empty() => p.to_string(),
                _ => GARBAGE.choose(rng).expect("garbage").to_string(),
            },
            _ => GARBAGE.choose(rng).expect("garbage").to_string(),
        }
    }
}

fn turn_count(rng: &mut ChaCha8Rng, avg_turns: f64) -> usize {
    let extra = avg_turns - 1.0;
    if extra <= 0.0 {
        return 1;
    }
    1 + Poisson::new(extra).expect("positive rate").sample(rng) as usize
}

fn latent_qualities(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..=5.0)).collect();
    (0..n)
        .map(|i| if i == 0 { raw[0] } else { 0.5 * raw[i] + 0.5 * raw[i - 1] })
        .collect()
}

fn format_reals(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn generate_dialogue(config: &SyntheticConfig, domains: &[Domain], index: usize) -> Dialogue {
    let mut rng = seed::rng(seed::derive(config.seed, index as u64));
    let system = if rng.random_bool(config.system_b_fraction) {
        DialogueSystem::B
    } else {
        DialogueSystem::A
    };
    let user_group = *[UserGroup::Novice, UserGroup::SomeExperience, UserGroup::Experienced]
        .choose(&mut rng)
        .expect("groups");
    let n = turn_count(&mut rng, config.avg_turns);
    let q = latent_qualities(&mut rng, n);

    let mut turns = Vec::with_capacity(n);
    let mut prev_request: Option<Request> = None;
    let mut prev_response: Option<String> = None;
    let mut timestamp = 0.0;
    for (i, &qn) in q.iter().enumerate() {
        let request = match (&prev_request, i) {
            (Some(prev), _) if q[i - 1] < 3.0 && rng.random_bool(0.65) => rephrase(&mut rng, prev),
            (Some(prev), _) if rng.random_bool(0.6) => new_request(&mut rng, domains, prev.domain, qn),
            _ => {
                let d = rng.random_range(0..domains.len());
                new_request(&mut rng, domains, d, qn)
            }
        };
        let response = system_response(&mut rng, domains, &request, qn, prev_response.as_deref());
        let asr = clamp(0.35 + 0.12 * qn + gauss(&mut rng, 0.01), 0.0, 1.0);
        let nlu_conf = clamp(0.3 + 0.13 * qn + gauss(&mut rng, 0.015), 0.0, 1.0);
        let barge_p = 0.05 + 0.6 * ((5.0 - qn) / 4.0).powi(2);
        let barge_in = rng.random_bool(barge_p);
        let rq = clamp(qn + gauss(&mut rng, config.sigma_turn), 1.0, 5.0);

        let d = &domains[request.domain];
        let with_nlu = system == DialogueSystem::A;
        turns.push(Turn {
            turn_id: format!("t{i}"),
            user_text: request.text.clone(),
            system_text: response.clone(),
            asr_confidence: asr,
            nlu_confidence: with_nlu.then_some(nlu_conf),
            nlu_intent: with_nlu.then(|| d.intents[request.intent].0.clone()),
            nlu_domain: with_nlu.then(|| d.name.to_string()),
            barge_in,
            user_timestamp: timestamp,
            slots: request.slots.clone(),
            rq_rating: Some(rq),
        });

        let resp_tokens = response.split_whitespace().count() as f64;
        let mut gap = 2.0 + 0.35 * resp_tokens + gauss(&mut rng, 0.4);
        if barge_in {
            gap *= 0.4;
        }
        timestamp += gap.max(0.3);
        prev_request = Some(request);
        prev_response = Some(response);
    }

    let latent = config.aggregation.aggregate(&q, config.failure_weight);
    let rating = clamp(latent + gauss(&mut rng, config.sigma_dialogue), 1.0, 5.0);
    let mut metadata = BTreeMap::new();
    metadata.insert(LATENT_Q_KEY.to_string(), format_reals(&q));
    metadata.insert(LATENT_RATING_KEY.to_string(), latent.to_string());
    Dialogue {
        dialogue_id: format!("d{index:06}"),
        system,
        user_group,
        turns,
        dialogue_rating: Some(rating),
        metadata,
    }
}

/// Generates a corpus; a pure function of `config`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Corpus, CorpusError> {
    config.validate()?;
    let domains: Vec<Domain> = config.domains.iter().map(|d| resolve_domain(d)).collect();
    let dialogues = par::map_range(config.n_dialogues, |i| generate_dialogue(config, &domains, i));
    let mut metadata = BTreeMap::new();
    metadata.insert("generator".to_string(), "synthetic".to_string());
    metadata.insert(
        "config".to_string(),
        serde_json::to_string(config).expect("config serializes"),
    );
    Ok(Corpus { dialogues, metadata })
}

/// Latent per-turn quality stored by the generator.
pub fn latent_turn_quality(d: &Dialogue) -> Option<Vec<f64>> {
    d.metadata
        .get(LATENT_Q_KEY)?
        .split(',')
        .map(|s| s.parse().ok())
        .collect()
}

/// Latent (noise-free) dialogue rating stored by the generator.
pub fn latent_dialogue_rating(d: &Dialogue) -> Option<f64> {
    d.metadata.get(LATENT_RATING_KEY)?.parse().ok()
}
