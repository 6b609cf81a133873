use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dialsat(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dialsat"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    fs::write(
        &path,
        r#"{
            "seed": 3,
            "synthetic": {"n_dialogues": 60},
            "embedding": {"kind": "hashed", "dimension": 8, "seed": 1},
            "model": {"variant": "joint_embeddings_features_attn", "hidden_size": 8},
            "train": {"max_epochs": 3},
            "eval": {"bootstrap_resamples": 50, "attention_dialogues": 2},
            "grid": {"n_layers": [1], "hidden_size": [4, 8], "batch_size": [16], "optimizer": ["adam"],
                     "dropout_p": [0.0], "lr": [0.001], "max_sequence_length": [20]}
        }"#,
    )
    .unwrap();
    path.display().to_string()
}

fn ok(o: &Output) -> String {
    assert!(
        o.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        o.status,
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn full_pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = small_config(dir);
    for cmd in ["generate", "split", "features", "train"] {
        ok(&dialsat(dir, &["--config", &cfg, cmd]));
    }
    let eval = ok(&dialsat(dir, &["--config", &cfg, "evaluate"]));
    let header = eval.lines().next().unwrap();
    assert_eq!(header, "model\tlevel\tCorrelation\tF-dissatisfactory");
    assert!(eval.lines().nth(1).unwrap().contains(" ± "));
    assert_eq!(eval.lines().filter(|l| l.starts_with("Joint_embeddings_features_attn\t")).count(), 2);

    ok(&dialsat(dir, &["--config", &cfg, "score"]));
    let scores = fs::read_to_string(dir.join("reports/scores.tsv")).unwrap();
    assert!(scores.starts_with("dialogue_id\tturn_id\trq_pred"));

    let analysis = ok(&dialsat(dir, &["--config", &cfg, "analyze"]));
    assert!(analysis.contains("noise ratio"));
    assert!(dir.join("reports/attention.txt").exists());
    assert!(dir.join("reports/pmi_train.tsv").exists());

    let grid = ok(&dialsat(dir, &["--config", &cfg, "gridsearch"]));
    assert_eq!(grid.lines().count(), 3);

    // Inputs are never modified by later commands.
    let before = fs::read(dir.join("train.jsonl")).unwrap();
    ok(&dialsat(dir, &["--config", &cfg, "features"]));
    assert_eq!(before, fs::read(dir.join("train.jsonl")).unwrap());
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small_config(a.path());
    ok(&dialsat(a.path(), &["--config", &cfg, "generate"]));
    ok(&dialsat(b.path(), &["--config", &cfg, "generate"]));
    assert_eq!(fs::read(a.path().join("corpus.jsonl")).unwrap(), fs::read(b.path().join("corpus.jsonl")).unwrap());
    let c = tempfile::tempdir().unwrap();
    ok(&dialsat(c.path(), &["--config", &cfg, "--seed", "4", "generate"]));
    assert_ne!(fs::read(a.path().join("corpus.jsonl")).unwrap(), fs::read(c.path().join("corpus.jsonl")).unwrap());
}

#[test]
fn gradcheck_passes_every_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&dialsat(tmp.path(), &["gradcheck"]));
    assert_eq!(out.lines().filter(|l| l.ends_with("\tok")).count(), 8);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let bad = dir.join("bad.json");
    fs::write(&bad, r#"{"train": {"epochs": 3}}"#).unwrap();
    let o = dialsat(dir, &["--config", bad.to_str().unwrap(), "generate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epochs"));

    let o = dialsat(dir, &["split"]);
    assert_eq!(o.status.code(), Some(1), "missing corpus is a validation error");

    let o = dialsat(dir, &["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));

    fs::write(dir.join("corpus.jsonl"), "{not json\n").unwrap();
    let o = dialsat(dir, &["split"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}
