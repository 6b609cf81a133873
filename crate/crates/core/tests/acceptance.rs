//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run all: `cargo test --release --test acceptance`.
//! Run a subset: `cargo test --release --test acceptance -- 5 6`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use dialsat_core::analysis::{self, PmiTable};
use dialsat_core::corpus::{generate_synthetic, split_corpus, Aggregation, Corpus, SyntheticConfig};
use dialsat_core::embedding::{cosine_slices, EmbeddingProvider, ProviderSpec};
use dialsat_core::features::{jaccard_similarity, FeaturePipeline};
use dialsat_core::metrics::{f_dissatisfactory, pearson_r, skewness};
use dialsat_core::models::{
    gradcheck_variant, multitask_loss_value, noise_ratio, predict, turn_forward, ModelConfig, ModelParameters,
    RatingPooling, SequenceExample, Variant,
};
use dialsat_core::pipeline::{self, RunConfig};
use dialsat_core::tensor::{Tape, Tensor};
use dialsat_core::training::{encode_examples, train, TrainConfig};
use dialsat_core::{seed, Scored};
use rand::seq::SliceRandom;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

// ---------------------------------------------------------------- data

struct Prepared {
    train: Vec<SequenceExample>,
    val: Vec<SequenceExample>,
    test: Vec<SequenceExample>,
    test_corpus: Corpus,
}

fn prepare(synth: &SyntheticConfig, ratios: (f64, f64, f64), dim: usize, seed_value: u64) -> Prepared {
    let corpus = generate_synthetic(synth).expect("valid synthetic config");
    let (tr, va, te) = split_corpus(&corpus, ratios, seed::derive_named(seed_value, "split")).expect("split");
    let provider = EmbeddingProvider::hashed(dim, seed::derive_named(seed_value, "embedding")).expect("provider");
    let pipe = FeaturePipeline::fit(&tr, provider).expect("fit");
    let enc = |c: &Corpus| encode_examples(c, &pipe.matrices(c).expect("features")).expect("encode");
    Prepared {
        train: enc(&tr),
        val: enc(&va),
        test: enc(&te),
        test_corpus: te,
    }
}

fn model(variant: Variant, dim: usize, hidden: usize) -> ModelConfig {
    let mut m = ModelConfig::new(variant, dim);
    m.hidden_size = hidden;
    m
}

// ------------------------------------------------------------ criterion 1

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for v in Variant::ALL {
        let r = gradcheck_variant(v, 1).expect("gradcheck runs");
        worst = worst.max(r.max_rel_error);
        parts.push(format!("{}={:.1e}", v.name(), r.max_rel_error));
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-4 && within(t, 30),
        format!("max rel error {worst:.2e} (< 1e-4), {:.1}s (< 30s); {}", t.as_secs_f64(), parts.join(" ")),
    )
}

// ------------------------------------------------------------ criterion 2
// References are written from the textbook definitions, independently of
// the library code paths.

fn ref_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|a| a * a).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt()
}

fn ref_f(p: &[f64], y: &[f64]) -> f64 {
    let mut tp = 0.0;
    let mut pred_pos = 0.0;
    let mut true_pos = 0.0;
    for i in 0..p.len() {
        let a = p[i] < 3.0;
        let b = y[i] < 3.0;
        if a {
            pred_pos += 1.0;
        }
        if b {
            true_pos += 1.0;
        }
        if a && b {
            tp += 1.0;
        }
    }
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (pred_pos + true_pos)
    }
}

fn ref_jaccard(a: &[String], b: &[String]) -> f64 {
    let mut ua: Vec<&String> = a.iter().collect();
    ua.sort();
    ua.dedup();
    let mut ub: Vec<&String> = b.iter().collect();
    ub.sort();
    ub.dedup();
    let inter = ua.iter().filter(|x| ub.contains(x)).count();
    let union = ua.len() + ub.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn ref_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

fn ref_skew(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m: f64 = v.iter().sum::<f64>() / n;
    let m2: f64 = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    let m3: f64 = v.iter().map(|x| (x - m) * (x - m) * (x - m)).sum::<f64>() / n;
    m3 / (m2 * m2.sqrt())
}

fn ref_pmi(obs: &[(String, usize)], x: &str, label: usize) -> Option<f64> {
    let n = obs.len() as f64;
    let joint = obs.iter().filter(|(s, l)| s == x && *l == label).count() as f64;
    if joint == 0.0 {
        return None;
    }
    let px = obs.iter().filter(|(s, _)| s == x).count() as f64 / n;
    let py = obs.iter().filter(|(_, l)| *l == label).count() as f64 / n;
    Some((joint / n / (px * py)).ln())
}

fn metric_oracles() -> Outcome {
    let mut rng = seed::rng(2024);
    let mut max_err: f64 = 0.0;
    let mut track = |a: f64, b: f64| max_err = max_err.max((a - b).abs());
    let vocab = ["play", "the", "song", "stop", "weather", "in", "boston", "movie", "tickets", "two"];
    let slot_names = ["theater", "number", "city", "genre", "time", "artist", "date", "item"];
    for _ in 0..100 {
        let n = rng.random_range(5..40);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
        track(pearson_r(&p, &y).unwrap(), ref_pearson(&p, &y));
        track(f_dissatisfactory(&p, &y, 3.0).unwrap().value, ref_f(&p, &y));
        track(skewness(&p).unwrap(), ref_skew(&p));

        let words = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<String> {
            (0..rng.random_range(1..8)).map(|_| vocab[rng.random_range(0..vocab.len())].to_string()).collect()
        };
        let (a, b) = (words(&mut rng), words(&mut rng));
        track(jaccard_similarity(&a, &b).value, ref_jaccard(&a, &b));

        let d = rng.random_range(2..20);
        let u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        track(cosine_slices(&u, &v).unwrap().value, ref_cosine(&u, &v));

        let obs: Vec<(String, usize)> = (0..rng.random_range(5..80))
            .map(|_| (slot_names[rng.random_range(0..slot_names.len())].to_string(), rng.random_range(1..=5)))
            .collect();
        let as_ratings: Vec<(String, f64)> = obs.iter().map(|(s, l)| (s.clone(), *l as f64)).collect();
        let table = PmiTable::from_observations(&as_ratings).unwrap();
        for (i, s) in table.slot_types.iter().enumerate() {
            for l in 1..=5 {
                match (table.pmi[i][l - 1], ref_pmi(&obs, s, l)) {
                    (Some(a), Some(b)) => track(a, b),
                    (None, None) => {}
                    _ => track(0.0, f64::INFINITY),
                }
            }
        }
    }
    let anchors = [
        (pearson_r(&[2., 4., 5., 1.], &[1., 5., 4., 2.]).unwrap(), 0.8, 1e-12),
        (f_dissatisfactory(&[2.5, 4.1, 3.2, 4.4], &[1., 5., 2., 4.], 3.0).unwrap().value, 2.0 / 3.0, 1e-12),
        (skewness(&[1., 1., 1., 5.]).unwrap(), 1.1547, 1e-4),
        (
            {
                let t = PmiTable::from_counts(vec!["numeric".into(), "theater".into()], vec![[1, 0, 0, 0, 4], [4, 0, 0, 0, 1]]).unwrap();
                t.pmi[1][0].unwrap()
            },
            1.6f64.ln(),
            1e-12,
        ),
    ];
    let anchors_ok = anchors.iter().all(|(a, b, tol)| (a - b).abs() < *tol);
    outcome(
        max_err < 1e-9 && anchors_ok,
        format!("max deviation {max_err:.2e} over 100 instances x 6 metrics (< 1e-9); anchors {}", if anchors_ok { "ok" } else { "FAILED" }),
    )
}

// ------------------------------------------------------------ criterion 3

fn loss_anchor() -> Outcome {
    let a = multitask_loss_value(2.0, 4.0, 0.0, 0.0);
    let b = multitask_loss_value(2.0, 4.0, 2f64.ln(), 0.0);
    // Same values through the tape.
    let on_tape = |st: f64| {
        let mut t = Tape::new();
        let lt = t.constant(Tensor::scalar(2.0)).unwrap();
        let ld = t.constant(Tensor::scalar(4.0)).unwrap();
        let s_t = t.constant(Tensor::scalar(st)).unwrap();
        let s_d = t.constant(Tensor::scalar(0.0)).unwrap();
        let l = dialsat_core::models::combine_task_losses(&mut t, lt, ld, s_t, s_d, 1.0).unwrap();
        t.value(l).item()
    };
    let pass = a == 3.0 && (b - 2.8466).abs() < 1e-4 && on_tape(0.0) == 3.0 && (on_tape(2f64.ln()) - 2.8466).abs() < 1e-4;
    outcome(pass, format!("L(2,4,0,0) = {a} (exactly 3); L(2,4,ln2,0) = {b:.6} (2.8466 ± 1e-4)"))
}

// ------------------------------------------------------------ criterion 4

fn overfit_sanity() -> Outcome {
    let start = Instant::now();
    let synth = SyntheticConfig {
        n_dialogues: 8,
        sigma_turn: 0.0,
        sigma_dialogue: 0.0,
        seed: 44,
        ..Default::default()
    };
    let corpus = generate_synthetic(&synth).unwrap();
    let pipe = FeaturePipeline::fit(&corpus, EmbeddingProvider::hashed(16, 4).unwrap()).unwrap();
    let ex = encode_examples(&corpus, &pipe.matrices(&corpus).unwrap()).unwrap();
    let mut m = model(Variant::JointEmbeddingsFeaturesAttn, 16, 16);
    m.dropout_p = 0.0;
    let cfg = TrainConfig {
        max_epochs: 500,
        patience: usize::MAX,
        lr: 1e-2,
        batch_size: 8,
        seed: 4,
        ..Default::default()
    };
    let (params, _) = train(m, &ex, &ex, &cfg).unwrap();
    let (mut tp, mut tl, mut dse) = (Vec::new(), Vec::new(), 0.0);
    for e in &ex {
        let pred = predict(&params, &e.inputs).unwrap();
        for (i, r) in pred.turn_ratings.iter().enumerate() {
            if e.turn_mask.data()[i] > 0.0 {
                tp.push(*r);
                tl.push(e.turn_labels.data()[i]);
            }
        }
        dse += (pred.dialogue_rating.unwrap() - e.dialogue_label.unwrap()).powi(2);
    }
    let r = pearson_r(&tp, &tl).unwrap();
    let mse = dse / ex.len() as f64;
    let t = start.elapsed();
    outcome(
        r >= 0.95 && mse < 0.05 && within(t, 120),
        format!("turn r {r:.4} (>= 0.95), dialogue MSE {mse:.4} (< 0.05), {:.1}s (< 120s)", t.as_secs_f64()),
    )
}

// ------------------------------------------------------------ criterion 5

const NOISE_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn noise_run(seed_value: u64) -> f64 {
    let synth = SyntheticConfig {
        n_dialogues: 500,
        sigma_turn: 0.3,
        sigma_dialogue: 0.6,
        aggregation: Aggregation::UniformMean,
        seed: seed::derive_named(seed_value, "generate"),
        ..Default::default()
    };
    let data = prepare(&synth, (0.8, 0.1, 0.1), 16, seed_value);
    let m = model(Variant::JointEmbeddingsFeaturesAttn, 16, 16);
    let cfg = TrainConfig {
        max_epochs: 100,
        patience: 10,
        seed: seed_value,
        ..Default::default()
    };
    let (params, _) = train(m, &data.train, &data.val, &cfg).unwrap();
    noise_ratio(&params).unwrap()
}

// The band applies to the typical (median) seed; the per-seed clause is the
// separate "exceeds 1 in at least 4 of 5" condition.
fn noise_ratio_recovery() -> Outcome {
    let start = Instant::now();
    let ratios: Vec<f64> = NOISE_SEEDS.iter().map(|&s| noise_run(s)).collect();
    let med = median(ratios.clone());
    let all_in_band = ratios.iter().all(|r| (2.0..=8.0).contains(r));
    let above_one = ratios.iter().filter(|r| **r > 1.0).count();
    let t = start.elapsed();
    outcome(
        (2.0..=8.0).contains(&med) && above_one >= 4 && within(t, 900),
        format!(
            "ratios {:?}; median {med:.3} (in [2, 8]; every seed in band: {all_in_band}); {above_one}/5 > 1 (>= 4); {:.0}s (< 900s)",
            ratios.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            t.as_secs_f64()
        ),
    )
}

// ------------------------------------------------------------ criteria 6, 8

struct WeightingRun {
    pearson_attn: f64,
    pearson_mean: f64,
    /// (mean weight on rq < 3 turns, on rq >= 3 turns) over test dialogues.
    class_weights: (f64, f64),
    /// Attention weights of every evaluated test dialogue.
    weights: Vec<Vec<f64>>,
}

fn dialogue_pearson(params: &ModelParameters, test: &[SequenceExample]) -> f64 {
    let (p, y): (Vec<f64>, Vec<f64>) = test
        .iter()
        .map(|e| (predict(params, &e.inputs).unwrap().dialogue_rating.unwrap(), e.dialogue_label.unwrap()))
        .unzip();
    pearson_r(&p, &y).unwrap()
}

fn weighting_run(seed_value: u64) -> WeightingRun {
    let synth = SyntheticConfig {
        n_dialogues: 1500,
        sigma_dialogue: 0.3,
        aggregation: Aggregation::FailureWeighted,
        seed: seed::derive_named(seed_value, "generate"),
        ..Default::default()
    };
    let data = prepare(&synth, (0.6, 0.1, 0.3), 16, seed_value);
    let cfg = TrainConfig {
        max_epochs: 100,
        patience: 10,
        seed: seed_value,
        ..Default::default()
    };
    let mut attn = model(Variant::JointEmbeddingsFeaturesAttn, 16, 16);
    attn.dropout_p = 0.3;
    let mean = ModelConfig {
        pooling: RatingPooling::UniformMean,
        ..attn
    };
    let (pa, _) = train(attn, &data.train, &data.val, &cfg).unwrap();
    let (pm, _) = train(mean, &data.train, &data.val, &cfg).unwrap();

    let mut reports = Vec::new();
    let mut weights = Vec::new();
    for (d, e) in data.test_corpus.dialogues.iter().zip(&data.test) {
        let r = analysis::attention_report(&pa, d, &e.inputs).unwrap();
        weights.push(r.rows.iter().map(|row| row.weight).collect());
        reports.push(r);
    }
    let (dis, sat) = analysis::attention_by_class(&reports);
    WeightingRun {
        pearson_attn: dialogue_pearson(&pa, &data.test),
        pearson_mean: dialogue_pearson(&pm, &data.test),
        class_weights: (dis.unwrap_or(f64::NAN), sat.unwrap_or(f64::NAN)),
        weights,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn unequal_weighting(runs: &[WeightingRun]) -> Outcome {
    let diffs: Vec<f64> = runs.iter().map(|r| r.pearson_attn - r.pearson_mean).collect();
    let med_attn = median(runs.iter().map(|r| r.pearson_attn).collect());
    let med_mean = median(runs.iter().map(|r| r.pearson_mean).collect());
    let dis: f64 = runs.iter().map(|r| r.class_weights.0).sum::<f64>() / runs.len() as f64;
    let sat: f64 = runs.iter().map(|r| r.class_weights.1).sum::<f64>() / runs.len() as f64;
    outcome(
        med_attn > med_mean && dis > sat,
        format!(
            "median test dialogue r: attention {med_attn:.4} vs uniform mean {med_mean:.4} (per-seed diffs {:?}); mean weight rq<3 {dis:.4} vs rq>=3 {sat:.4}",
            diffs.iter().map(|d| (d * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    )
}

fn attention_normalization(runs: &[WeightingRun]) -> Outcome {
    let mut n = 0;
    let mut worst: f64 = 0.0;
    let mut negative = 0;
    for w in runs.iter().flat_map(|r| &r.weights) {
        n += 1;
        worst = worst.max((w.iter().sum::<f64>() - 1.0).abs());
        negative += w.iter().filter(|x| **x < 0.0).count();
    }
    outcome(
        n > 0 && worst < 1e-6 && negative == 0,
        format!("{n} dialogues; max |sum - 1| = {worst:.2e} (< 1e-6); {negative} negative weights"),
    )
}

// ------------------------------------------------------------ criterion 7

fn causality() -> Outcome {
    let mut rng = seed::rng(77);
    let variants = [
        Variant::LstmEmbedding,
        Variant::LstmEmbeddingFeatures,
        Variant::JointEmbeddingsAttn,
        Variant::JointEmbeddingsFeaturesAttn,
    ];
    let dim = 8;
    let width = 2 * dim + 18;
    let mut violations = 0;
    for trial in 0..100 {
        let v = variants[trial % variants.len()];
        let mut m = model(v, dim, 8);
        m.n_layers = 1 + trial % 3;
        let params = ModelParameters::init(m, trial as u64).unwrap();
        let len = rng.random_range(2..12);
        let x = Tensor::matrix(len, width, (0..len * width).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let n = rng.random_range(1..len);
        let mut y = x.clone();
        for r in n..len {
            for c in 0..width {
                if rng.random_bool(0.5) {
                    y.data_mut()[r * width + c] += rng.random_range(-5.0..5.0);
                }
            }
        }
        let a = turn_forward(&x, &params).unwrap();
        let b = turn_forward(&y, &params).unwrap();
        if a[..n].iter().zip(&b[..n]).any(|(p, q)| p.to_bits() != q.to_bits()) {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("{violations}/100 perturbations changed a prefix output"))
}

// ------------------------------------------------------------ criterion 9

fn pipeline_run(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut cfg = RunConfig {
        seed: 99,
        ..Default::default()
    };
    cfg.paths.out = dir.to_path_buf();
    cfg.synthetic.n_dialogues = 80;
    cfg.embedding = ProviderSpec::Hashed { dimension: 8, seed: 3 };
    cfg.model.hidden_size = 8;
    cfg.train.max_epochs = 4;
    cfg.eval.bootstrap_resamples = 200;
    pipeline::generate(&cfg).unwrap();
    pipeline::split(&cfg).unwrap();
    pipeline::features(&cfg).unwrap();
    pipeline::train(&cfg).unwrap();
    pipeline::evaluate(&cfg, &[]).unwrap();
    pipeline::score(&cfg, None).unwrap();
    pipeline::analyze(&cfg).unwrap();
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                files.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = pipeline_run(a.path());
    let fb = pipeline_run(b.path());
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    let reports = fa.keys().filter(|k| k.starts_with("reports")).count();
    outcome(
        fa.len() == fb.len() && differing.is_empty() && reports > 0,
        format!("{} files ({reports} reports) compared byte-for-byte; {} differ {:?}", fa.len(), differing.len(), differing),
    )
}

// ----------------------------------------------------------- criterion 10

fn pmi_trend() -> Outcome {
    let fractions = [0.1, 0.5, 0.9];
    let mut per_fraction: Vec<Vec<f64>> = vec![Vec::new(); fractions.len()];
    for s in 0..10u64 {
        let corpus = generate_synthetic(&SyntheticConfig {
            n_dialogues: 500,
            seed: seed::derive_named(s, "generate"),
            ..Default::default()
        })
        .unwrap();
        let full_obs = analysis::slot_label_observations(&corpus);
        let full = PmiTable::from_observations(&full_obs).unwrap();
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut seed::rng(seed::derive_named(s, "subsets")));
        for (i, f) in fractions.iter().enumerate() {
            let k = (corpus.len() as f64 * f).round() as usize;
            let sub = corpus.select(&order[..k]);
            let table = PmiTable::with_axis(&analysis::slot_label_observations(&sub), &full.slot_types).unwrap();
            let c: Scored = analysis::pmi_cosine(&table, &full).unwrap();
            per_fraction[i].push(c.value);
        }
    }
    let medians: Vec<f64> = per_fraction.into_iter().map(median).collect();
    let nondecreasing = medians.windows(2).all(|w| w[0] <= w[1]);
    outcome(
        nondecreasing,
        format!(
            "median cosine at 10/50/90%: {:?} (nondecreasing)",
            medians.iter().map(|m| (m * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    )
}

// ------------------------------------------------------------------ main

fn main() {
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |id: usize| args.is_empty() || args.iter().any(|a| a == &id.to_string());
    let names = [
        "gradient fidelity",
        "metric oracle equivalence",
        "loss closed-form anchor",
        "overfit sanity",
        "noise-ratio recovery",
        "unequal-weighting benefit",
        "causality",
        "attention normalization",
        "determinism",
        "PMI-coverage trend",
    ];
    let weighting: Vec<WeightingRun> = if selected(6) || selected(8) {
        NOISE_SEEDS.iter().map(|&s| weighting_run(s)).collect()
    } else {
        Vec::new()
    };
    let mut failed = 0;
    for id in 1..=10 {
        if !selected(id) {
            continue;
        }
        let start = Instant::now();
        let o = match id {
            1 => gradient_fidelity(),
            2 => metric_oracles(),
            3 => loss_anchor(),
            4 => overfit_sanity(),
            5 => noise_ratio_recovery(),
            6 => unequal_weighting(&weighting),
            7 => causality(),
            8 => attention_normalization(&weighting),
            9 => determinism(),
            _ => pmi_trend(),
        };
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} criterion {id:>2} {}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            names[id - 1],
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
