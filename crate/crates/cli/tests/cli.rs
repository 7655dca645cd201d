//! Command-line behavior: exit codes, stage chaining, manifest handling.

use std::path::{Path, PathBuf};
use std::process::Command;

use satd_core::corpus::{write_dataset, DatasetFormat};
use satd_core::synthetic;

fn satd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_satd"))
}

fn write_tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        r#"
[identifier]
widths = [10, 6, 10, 10]
max_len = 10
embedding_dim = 12
batch_size = 32
max_epochs = 2
patience = 2

[categorizer]
hidden_size = 16
num_layers = 1
num_heads = 2
ffn_size = 32
head_hidden = 8
max_len = 12
batch_size = 16
max_epochs = 1
learning_rate = 1e-3

[augment]
concurrency = 2
"#,
    )
    .unwrap();
    path
}

fn write_corpus(dir: &Path, seed: u64, total: usize) -> PathBuf {
    let corpus = synthetic::demo_corpus(seed, total);
    let path = dir.join("corpus.jsonl");
    write_dataset(&path, DatasetFormat::Jsonl, &corpus).unwrap();
    path
}

#[test]
fn unknown_subcommand_fails_with_usage() {
    let output = satd().arg("frobnicate").output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "stderr: {stderr}");
}

#[test]
fn missing_dataset_is_a_clean_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = satd()
        .args(["ingest", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("dataset"), "stderr: {stderr}");
}

#[test]
fn tables_writes_published_plan_reproduction() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = satd().args(["tables", "--out"]).arg(&out).status().unwrap();
    assert!(status.success());

    let tables: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("tables.json")).unwrap()).unwrap();
    let cm = tables["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .find(|a| a["source"] == "CM")
        .unwrap();
    assert_eq!(cm["plan"]["multipliers"]["DOCUMENTATION"], 4);
    assert_eq!(cm["plan"]["multipliers"]["TEST"], 8);
    assert_eq!(cm["plan"]["multipliers"]["REQUIREMENT"], 18);
    assert_eq!(cm["augmented"]["DOCUMENTATION"], 490);
    assert_eq!(cm["augmented"]["TEST"], 522);
    assert_eq!(cm["augmented"]["REQUIREMENT"], 513);

    // The manifest references the emitted file.
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
            .unwrap();
    let event = manifest["events"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["stage"] == "tables")
        .unwrap();
    assert_eq!(event["status"], "completed");
    assert!(event["outputs"]
        .as_object()
        .unwrap()
        .keys()
        .any(|k| k.ends_with("tables.json")));
}

#[test]
fn staged_run_produces_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let corpus = write_corpus(dir.path(), 5, 240);
    let out = dir.path().join("out");

    let base = |cmd: &str| {
        let mut c = satd();
        c.arg(cmd)
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--seed", "9", "--client", "mock"]);
        c
    };

    let status = base("ingest").arg("--dataset").arg(&corpus).status().unwrap();
    assert!(status.success());
    assert!(out.join("dataset.jsonl").exists());

    assert!(base("split").status().unwrap().success());
    for part in ["train", "validation", "test"] {
        assert!(out.join("split").join(format!("{part}.jsonl")).exists());
    }

    assert!(base("augment").status().unwrap().success());
    assert!(out.join("augmented.jsonl").exists());
    assert!(out.join("augment/plan.json").exists());

    assert!(base("train-identify").status().unwrap().success());
    assert!(out.join("checkpoints/identifier/model.json").exists());

    assert!(base("train-categorize").status().unwrap().success());
    assert!(out.join("checkpoints/categorizer/model.json").exists());

    assert!(base("evaluate").status().unwrap().success());
    assert!(out.join("metrics.json").exists());
    assert!(out.join("report.md").exists());

    assert!(base("keywords").status().unwrap().success());
    assert!(out.join("keywords.csv").exists());

    // Every stage completed in one shared manifest.
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
            .unwrap();
    let events = manifest["events"].as_array().unwrap();
    for stage in [
        "ingest",
        "split",
        "augment",
        "train-identify",
        "train-categorize",
        "evaluate",
        "keywords",
    ] {
        assert!(
            events
                .iter()
                .any(|e| e["stage"] == stage && e["status"] == "completed"),
            "missing completed event for {stage}"
        );
    }

    // metrics.json carries all three report sections.
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap())
            .unwrap();
    assert!(metrics["identification"]["macro_f1"].is_f64());
    assert!(metrics["categorization"]["macro_f1"].is_f64());
    assert!(metrics["two_step"]["macro_f1"].is_f64());
    assert_eq!(
        metrics["two_step"]["per_class"].as_array().unwrap().len(),
        5
    );
}

#[test]
fn augment_rejects_heldout_ids_and_marks_the_stage_failed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let corpus = write_corpus(dir.path(), 6, 200);
    let out = dir.path().join("out");

    let base = |cmd: &str| {
        let mut c = satd();
        c.arg(cmd)
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--seed", "4", "--client", "mock"]);
        c
    };
    assert!(base("ingest").arg("--dataset").arg(&corpus).status().unwrap().success());
    assert!(base("split").status().unwrap().success());

    // Poison the augmentation input with a test-split instance.
    let train = std::fs::read_to_string(out.join("split/train.jsonl")).unwrap();
    let test = std::fs::read_to_string(out.join("split/test.jsonl")).unwrap();
    let poisoned_path = dir.path().join("poisoned.jsonl");
    std::fs::write(
        &poisoned_path,
        format!("{train}{}\n", test.lines().next().unwrap()),
    )
    .unwrap();

    let output = base("augment").arg("--input").arg(&poisoned_path).output().unwrap();
    assert!(!output.status.success(), "poisoned augment must abort");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("held-out"), "stderr: {stderr}");
    assert!(!out.join("augmented.jsonl").exists());

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
            .unwrap();
    assert!(manifest["events"]
        .as_array()
        .unwrap()
        .iter()
        .any(|e| e["stage"] == "augment" && e["status"] == "failed"));
}

#[test]
fn keywords_rejects_augmented_input_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let corpus = write_corpus(dir.path(), 7, 160);
    let out = dir.path().join("out");

    let base = |cmd: &str| {
        let mut c = satd();
        c.arg(cmd)
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--seed", "2", "--client", "mock"]);
        c
    };
    assert!(base("ingest").arg("--dataset").arg(&corpus).status().unwrap().success());
    assert!(base("split").status().unwrap().success());
    assert!(base("augment").status().unwrap().success());

    let output = base("keywords")
        .arg("--input")
        .arg(out.join("augmented.jsonl"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("original data only"), "stderr: {stderr}");
}
