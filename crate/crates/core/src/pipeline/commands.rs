use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{PipelineError, RunConfig};
use crate::analysis::{self, attention_by_class, attention_report, PmiTable};
use crate::corpus::{generate_synthetic, load_corpus, save_corpus, split_corpus, Corpus, SyntheticConfig};
use crate::embedding::ProviderSpec;
use crate::features::{feature_table, FeatureNormalizer, FeaturePipeline, PopularityTables};
use crate::metrics::{bootstrap_ci, paired_significance, EvalReport, EvalRow, Metric, SignificanceRow};
use crate::models::{gradcheck_variant, noise_ratio, predict, ModelConfig, ModelParameters, Prediction, Variant};
use crate::tensor::{load_checkpoint, save_checkpoint};
use crate::training::{self, encode_examples, grid_search, render_grid_report, GridSpace, TrainConfig, TrainHistory};
use crate::{par, seed};

/// What a command produced.
#[derive(Debug, Clone, Default)]
pub struct CommandOutput {
    /// Human-readable summary for stdout.
    pub summary: String,
    pub files: Vec<PathBuf>,
    /// False when the command ran but its check failed.
    pub success: bool,
}

impl CommandOutput {
    fn ok(summary: String, files: Vec<PathBuf>) -> Self {
        Self {
            summary,
            files,
            success: true,
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<PathBuf, PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| PipelineError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn load_existing(path: &Path, hint: &str) -> Result<Corpus, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::Validation(format!("{} not found ({hint})", path.display())));
    }
    Ok(load_corpus(path)?)
}

fn load_split(cfg: &RunConfig, name: &str) -> Result<Corpus, PipelineError> {
    let corpus = load_existing(&cfg.split_path(name), "run `split` first or set paths.")?;
    if corpus.is_empty() {
        return Err(PipelineError::Validation(format!("{name} split is empty")));
    }
    Ok(corpus)
}

fn reports_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir().join("reports")
}

pub fn generate(cfg: &RunConfig) -> Result<CommandOutput, PipelineError> {
    cfg.validate()?;
    let synth = SyntheticConfig {
        seed: seed::derive_named(cfg.seed, "generate"),
        ..cfg.synthetic.clone()
    };
    let corpus = generate_synthetic(&synth)?;
    let path = cfg.out_dir().join("corpus.jsonl");
    fs::create_dir_all(cfg.out_dir()).map_err(|e| PipelineError::io(cfg.out_dir(), e))?;
    save_corpus(&corpus, &path)?;
    let s = corpus.stats();
    Ok(CommandOutput::ok(
        format!("generated {} dialogues, {} turns ({:.2} per dialogue)\n", s.n_dialogues, s.n_turns, s.avg_turns),
        vec![path],
    ))
}

pub fn split(cfg: &RunConfig) -> Result<CommandOutput, PipelineError> {
    cfg.validate()?;
    let corpus = load_existing(&cfg.corpus_path(), "run `generate` first or set paths.corpus")?;
    let (tr, va, te) = split_corpus(&corpus, cfg.split.ratios, seed::derive_named(cfg.seed, "split"))?;
    let mut files = Vec::new();
    let mut summary = String::new();
    for (name, c) in [("train", &tr), ("val", &va), ("test", &te)] {
        let path = cfg.out_dir().join(format!("{name}.jsonl"));
        fs::create_dir_all(cfg.out_dir()).map_err(|e| PipelineError::io(cfg.out_dir(), e))?;
        save_corpus(c, &path)?;
        writeln!(summary, "{name}: {} dialogues", c.len()).expect("string write");
        files.push(path);
    }
    Ok(CommandOutput::ok(summary, files))
}

fn fit_pipeline(cfg: &RunConfig, train: &Corpus) -> Result<FeaturePipeline, PipelineError> {
    let provider = cfg.provider_spec().build()?;
    Ok(FeaturePipeline::fit(train, provider)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FeatureState {
    provider: ProviderSpec,
    normalizer: FeatureNormalizer,
    popularity: PopularityTables,
}

pub fn features(cfg: &RunConfig) -> Result<CommandOutput, PipelineError> {
    cfg.validate()?;
    let train = load_split(cfg, "train")?;
    let pipe = fit_pipeline(cfg, &train)?;
    let dir = cfg.out_dir().join("features");
    let mut files = Vec::new();
    for name in ["train", "val", "test"] {
        let path = cfg.split_path(name);
        if !path.exists() {
            continue;
        }
        let corpus = load_corpus(&path)?;
        let m = pipe.matrices(&corpus)?;
        files.push(write_file(
            &dir.join(format!("{name}.tsv")),
            &feature_table(&corpus, &m, pipe.provider.dimension()),
        )?);
    }
    let state = FeatureState {
        provider: pipe.provider.spec(),
        normalizer: pipe.normalizer.clone(),
        popularity: pipe.tables.clone(),
    };
    files.push(write_file(&dir.join("state.json"), &serde_json::to_string_pretty(&state).expect("serializes"))?);
    Ok(CommandOutput::ok(format!("wrote {} feature files\n", files.len() - 1), files))
}

/// Sidecar written next to a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub variant: String,
    pub model: ModelConfig,
    pub provider: ProviderSpec,
    pub normalizer: FeatureNormalizer,
    pub popularity: PopularityTables,
    pub train: TrainConfig,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: ModelParameters,
    pub pipeline: FeaturePipeline,
    pub manifest: ModelManifest,
}

impl TrainedModel {
    pub fn predict_corpus(&self, corpus: &Corpus) -> Result<Vec<Prediction>, PipelineError> {
        let m = self.pipeline.matrices(corpus)?;
        Ok(par::try_map(&m, |x| predict(&self.params, x))?)
    }

    pub fn name(&self) -> String {
        let n = self.manifest.variant.clone();
        if self.params.config.variant.task() == crate::models::Task::Joint && !self.params.config.uses_attention() {
            format!("{n}_uniform_mean")
        } else {
            n
        }
    }
}

pub fn save_model(dir: &Path, model: &TrainedModel, history: Option<&TrainHistory>) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let ckpt = dir.join("checkpoint.txt");
    save_checkpoint(&ckpt, &model.params.to_named())?;
    let mut files = vec![ckpt];
    files.push(write_file(
        &dir.join("manifest.json"),
        &serde_json::to_string_pretty(&model.manifest).expect("serializes"),
    )?);
    if let Some(h) = history {
        files.push(write_file(&dir.join("history.tsv"), &h.to_table())?);
    }
    Ok(files)
}

pub fn load_model(dir: &Path) -> Result<TrainedModel, PipelineError> {
    let mpath = dir.join("manifest.json");
    if !mpath.exists() {
        return Err(PipelineError::Validation(format!(
            "{} not found (run `train` first or set paths.model)",
            mpath.display()
        )));
    }
    let text = fs::read_to_string(&mpath).map_err(|e| PipelineError::io(&mpath, e))?;
    let manifest: ModelManifest =
        serde_json::from_str(&text).map_err(|e| PipelineError::Validation(format!("{}: {e}", mpath.display())))?;
    let named = load_checkpoint(dir.join("checkpoint.txt"))?;
    let params = ModelParameters::from_named(manifest.model, named)?;
    let provider = manifest.provider.build()?;
    if provider.dimension() != manifest.model.embedding_dim {
        return Err(PipelineError::Validation(format!(
            "embedding provider has dimension {}, model expects {}",
            provider.dimension(),
            manifest.model.embedding_dim
        )));
    }
    let pipeline = FeaturePipeline {
        provider,
        tables: manifest.popularity.clone(),
        normalizer: manifest.normalizer.clone(),
    };
    Ok(TrainedModel {
        params,
        pipeline,
        manifest,
    })
}

fn train_seeded(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        seed: seed::derive_named(cfg.seed, "train"),
        ..cfg.train
    }
}

/// Fits features on `train`, trains on it with early stopping on `val`.
pub fn train_model(
    cfg: &RunConfig,
    train_set: &Corpus,
    val_set: &Corpus,
) -> Result<(TrainedModel, TrainHistory), PipelineError> {
    let pipe = fit_pipeline(cfg, train_set)?;
    let model = cfg.model.to_config(pipe.provider.dimension());
    model.validate().map_err(|e| PipelineError::Validation(e.to_string()))?;
    let tr = encode_examples(train_set, &pipe.matrices(train_set)?)?;
    let va = encode_examples(val_set, &pipe.matrices(val_set)?)?;
    let tc = train_seeded(cfg);
    let (params, history) = training::train(model, &tr, &va, &tc)?;
    let manifest = ModelManifest {
        variant: model.variant.name().to_string(),
        model,
        provider: pipe.provider.spec(),
        normalizer: pipe.normalizer.clone(),
        popularity: pipe.tables.clone(),
        train: tc,
        best_epoch: history.best_epoch,
        best_val_loss: history.best_val_loss,
        noise_ratio: noise_ratio(&params).ok(),
    };
    Ok((
        TrainedModel {
            params,
            pipeline: pipe,
            manifest,
        },
        history,
    ))
}

pub fn train(cfg: &RunConfig) -> Result<CommandOutput, PipelineError> {
    cfg.validate()?;
    let tr = load_split(cfg, "train")?;
    let va = load_split(cfg, "val")?;
    let (model, history) = train_model(cfg, &tr, &va)?;
    let files = save_model(&cfg.model_dir(), &model, Some(&history))?;
    let mut summary = format!(
        "{}: {} epochs, best epoch {} with val loss {:.5}\n",
        model.name(),
        history.epochs.len(),
        history.best_epoch,
        history.best_val_loss
    );
    if let Some(r) = model.manifest.noise_ratio {
        writeln!(summary, "learned noise ratio sigma_d^2/sigma_t^2 = {r:.3}").expect("string write");
    }
    Ok(CommandOutput::ok(summary, files))
}

/// Flat (prediction, label, dialogue index) rows at one level.
struct Rows {
    preds: Vec<f64>,
    labels: Vec<f64>,
    units: Vec<usize>,
}

fn turn_rows(corpus: &Corpus, preds: &[Prediction]) -> Rows {
    let mut r = Rows {
        preds: Vec::new(),
        labels: Vec::new(),
        units: Vec::new(),
    };
    for (i, (d, p)) in corpus.dialogues.iter().zip(preds).enumerate() {
        for (t, rq) in d.turns.iter().zip(&p.turn_ratings) {
            if let Some(y) = t.rq_rating {
                r.preds.push(*rq);
                r.labels.push(y);
                r.units.push(i);
            }
        }
    }
    r
}

fn dialogue_rows(corpus: &Corpus, preds: &[Prediction]) -> Rows {
    let mut r = Rows {
        preds: Vec::new(),
        labels: Vec::new(),
        units: Vec::new(),
    };
    for (i, (d, p)) in corpus.dialogues.iter().zip(preds).enumerate() {
        if let (Some(y), Some(yh)) = (d.dialogue_rating, p.dialogue_rating) {
            r.preds.push(yh);
            r.labels.push(y);
            r.units.push(i);
        }
    }
    r
}

const METRICS: [Metric; 2] = [Metric::Pearson, Metric::FDissatisfactory];

/// Bootstrap evaluation of trained models on one corpus. The first model is
/// compared against each of the others.
pub fn evaluate_models(cfg: &RunConfig, models: &[TrainedModel], test: &Corpus) -> Result<EvalReport, PipelineError> {
    let b = cfg.eval.bootstrap_resamples;
    let level = cfg.eval.level;
    let boot_seed = seed::derive_named(cfg.seed, "bootstrap");
    let mut report = EvalReport::default();
    let mut all_rows: Vec<Vec<(&str, Rows)>> = Vec::new();
    for m in models {
        let preds = m.predict_corpus(test)?;
        let v = m.params.config.variant;
        let mut levels = Vec::new();
        if v.predicts_turns() {
            levels.push(("turn", turn_rows(test, &preds)));
        }
        if v.predicts_dialogue() {
            levels.push(("dialogue", dialogue_rows(test, &preds)));
        }
        for (level_name, rows) in &levels {
            let mut metrics = Vec::new();
            for metric in METRICS {
                let ci = bootstrap_ci(|p, y| metric.compute(p, y), &rows.preds, &rows.labels, &rows.units, b, level, boot_seed)?;
                metrics.push((metric, ci));
            }
            report.rows.push(EvalRow {
                model: m.name(),
                level: level_name.to_string(),
                metrics,
            });
        }
        all_rows.push(levels);
    }
    for (j, other) in all_rows.iter().enumerate().skip(1) {
        for (level_name, ra) in &all_rows[0] {
            let Some((_, rb)) = other.iter().find(|(l, _)| l == level_name) else {
                continue;
            };
            if ra.units != rb.units || ra.labels != rb.labels {
                continue;
            }
            for metric in METRICS {
                let res = paired_significance(
                    |p, y| metric.compute(p, y),
                    &ra.preds,
                    &rb.preds,
                    &ra.labels,
                    &ra.units,
                    b,
                    level,
                    boot_seed,
                )?;
                report.significance.push(SignificanceRow {
                    model_a: models[0].name(),
                    model_b: models[j].name(),
                    level: level_name.to_string(),
                    metric,
                    difference: res.difference,
                    significant: res.significant,
                });
            }
        }
    }
    Ok(report)
}

pub fn evaluate(cfg: &RunConfig, model_dirs: &[PathBuf]) -> Result<CommandOutput, PipelineError> {
    cfg.validate()?;
    let test = load_split(cfg, "test")?;
    let dirs = if model_dirs.is_empty() {
        vec![cfg.model_dir()]
    } else {
        model_dirs.to_vec()
    };
    let models = dirs.iter().map(|d| load_model(d)).collect::<Result<Vec<_>, _>>()?;
    let report = evaluate_models(cfg, &models, &test)?;
    let table = report.to_table();
    let dir = reports_dir(cfg);
    let files = vec![
        write_file(&dir.join("eval.tsv"), &table)?,
        write_file(&dir.join("eval.json"), &serde_json::to_string_pretty(&report).expect("serializes"))?,
    ];
    Ok(CommandOutput::ok(table, files))
}

pub fn score(cfg: &RunConfig, input: Option<&Path>) -> Result<CommandOutput, PipelineError> {
    cfg.validate()?;
    let corpus = match input {
        Some(p) => load_existing(p, "input corpus")?,
        None => load_split(cfg, "test")?,
    };
    let model = load_model(&cfg.model_dir())?;
    let preds = model.predict_corpus(&corpus)?;
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    let mut table = String::from("dialogue_id\tturn_id\trq_pred\trq_label\tw_attn\tdialogue_pred\tdialogue_label\n");
    for (d, p) in corpus.dialogues.iter().zip(&preds) {
        for (i, t) in d.turns.iter().enumerate() {
            writeln!(
                table,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                d.dialogue_id,
                t.turn_id,
                opt(p.turn_ratings.get(i).copied()),
                opt(t.rq_rating),
                opt(p.attention_weights.as_ref().map(|w| w[i])),
                opt(p.dialogue_rating),
                opt(d.dialogue_rating)
            )
            .expect("string write");
        }
    }
    let path = write_file(&reports_dir(cfg).join("scores.tsv"), &table)?;
    Ok(CommandOutput::ok(format!("scored {} dialogues\n", corpus.len()), vec![path]))
}

pub fn gridsearch(cfg: &RunConfig) -> Result<CommandOutput, PipelineError> {
    cfg.validate()?;
    let tr = load_split(cfg, "train")?;
    let va = load_split(cfg, "val")?;
    let pipe = fit_pipeline(cfg, &tr)?;
    let model = cfg.model.to_config(pipe.provider.dimension());
    let train_ex = encode_examples(&tr, &pipe.matrices(&tr)?)?;
    let val_ex = encode_examples(&va, &pipe.matrices(&va)?)?;
    let base = train_seeded(cfg);
    let space = cfg.grid.clone().unwrap_or_else(|| GridSpace::point(&model, &base));
    for m in space.combinations(&model, &base) {
        m.0.validate().map_err(|e| PipelineError::Validation(format!("grid: {e}")))?;
        m.1.validate()?;
    }
    let results = grid_search(&model, &base, &space, &train_ex, &val_ex, seed::derive_named(cfg.seed, "grid"))?;
    let table = render_grid_report(&results);
    let path = write_file(&reports_dir(cfg).join("grid.tsv"), &table)?;
    Ok(CommandOutput::ok(table, vec![path]))
}

/// Training-prefix table of slot-value coverage and PMI cosine to the full
/// training PMI table.
fn subset_table(cfg: &RunConfig, train: &Corpus) -> Result<String, PipelineError> {
    let full_obs = analysis::slot_label_observations(train);
    let full = PmiTable::from_observations(&full_obs)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut seed::rng(seed::derive_named(cfg.seed, "subsets")));
    let mut out = String::from("fraction\tdialogues\tcoverage\tpmi_cosine\n");
    for &f in &cfg.eval.subset_fractions {
        let k = ((train.len() as f64 * f).ceil() as usize).clamp(1, train.len());
        let sub = train.select(&order[..k]);
        let coverage = analysis::slot_value_coverage(&sub, train)?;
        let cos = match PmiTable::with_axis(&analysis::slot_label_observations(&sub), &full.slot_types) {
            Ok(t) => analysis::pmi_cosine(&t, &full)?.value,
            Err(_) => 0.0,
        };
        writeln!(out, "{f}\t{k}\t{coverage:.4}\t{cos:.4}").expect("string write");
    }
    Ok(out)
}

pub fn analyze(cfg: &RunConfig) -> Result<CommandOutput, PipelineError> {
    cfg.validate()?;
    let train = load_split(cfg, "train")?;
    let dir = reports_dir(cfg);
    let mut files = Vec::new();
    let mut summary = String::new();

    let gold = analysis::pmi_table(&train)?;
    files.push(write_file(&dir.join("pmi_train.tsv"), &gold.to_table())?);
    files.push(write_file(&dir.join("coverage.tsv"), &subset_table(cfg, &train)?)?);

    let model_dir = cfg.model_dir();
    if model_dir.join("manifest.json").exists() {
        let model = load_model(&model_dir)?;
        let test = load_split(cfg, "test")?;
        let preds = model.predict_corpus(&test)?;
        if model.params.config.variant.predicts_turns() {
            let obs: Vec<(String, f64)> = test
                .dialogues
                .iter()
                .zip(&preds)
                .flat_map(|(d, p)| d.turns.iter().zip(p.turn_ratings.clone()))
                .flat_map(|(t, r)| t.slots.iter().map(move |s| (s.slot_type.clone(), r)))
                .collect();
            if let Ok(pred_table) = PmiTable::from_observations(&obs) {
                files.push(write_file(&dir.join("pmi_predicted.tsv"), &pred_table.to_table())?);
            }
        }
        if let Ok(r) = noise_ratio(&model.params) {
            writeln!(summary, "learned noise ratio sigma_d^2/sigma_t^2 = {r:.3}").expect("string write");
        }
        if model.params.config.uses_attention() {
            let matrices = model.pipeline.matrices(&test)?;
            let reports = test
                .dialogues
                .iter()
                .zip(&matrices)
                .map(|(d, m)| attention_report(&model.params, d, m))
                .collect::<Result<Vec<_>, _>>()?;
            let mut text = String::new();
            for r in reports.iter().take(cfg.eval.attention_dialogues) {
                text.push_str(&r.render_text());
                text.push('\n');
            }
            let (dis, sat) = attention_by_class(&reports);
            let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
            writeln!(
                summary,
                "mean attention weight: rq < 3 {}, rq >= 3 {}",
                opt(dis),
                opt(sat)
            )
            .expect("string write");
            files.push(write_file(&dir.join("attention.txt"), &text)?);
            let table: String = reports
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let t = r.to_table();
                    if i == 0 {
                        t
                    } else {
                        t.lines().skip(1).map(|l| format!("{l}\n")).collect()
                    }
                })
                .collect();
            files.push(write_file(&dir.join("attention.tsv"), &table)?);
        }
    }
    writeln!(summary, "wrote {} report files", files.len()).expect("string write");
    Ok(CommandOutput::ok(summary, files))
}

/// Finite-difference check of every variant at toy size.
pub fn gradcheck(seed_value: u64) -> Result<CommandOutput, PipelineError> {
    let mut out = String::from("variant\tmax_rel_error\tstatus\n");
    let mut success = true;
    for v in Variant::ALL {
        let r = gradcheck_variant(v, seed_value)?;
        let pass = r.max_rel_error < 1e-4;
        success &= pass;
        writeln!(out, "{}\t{:.3e}\t{}", v.name(), r.max_rel_error, if pass { "ok" } else { "FAIL" }).expect("string write");
    }
    Ok(CommandOutput {
        summary: out,
        files: Vec::new(),
        success,
    })
}
