//! Dataset-file behavior at the published commit-message scale: counting,
//! binary merging, and format round-trips on a corpus-shaped file.

use satd_core::corpus::{
    class_counts, load_dataset, to_binary, write_dataset, ArtifactSource, BinaryLabel,
    DatasetFormat, SatdLabel,
};
use satd_core::synthetic;

/// Commit-message class profile of the published benchmark.
fn cm_shaped_corpus() -> Vec<satd_core::corpus::LabeledInstance> {
    synthetic::generate(
        17,
        &[
            (ArtifactSource::CommitMessage, SatdLabel::CodeDesign, 522),
            (ArtifactSource::CommitMessage, SatdLabel::Documentation, 98),
            (ArtifactSource::CommitMessage, SatdLabel::Test, 58),
            (ArtifactSource::CommitMessage, SatdLabel::Requirement, 27),
            (ArtifactSource::CommitMessage, SatdLabel::NotSatd, 4295),
        ],
    )
}

#[test]
fn cm_shaped_file_loads_with_published_class_counts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cm.csv");
    let corpus = cm_shaped_corpus();
    write_dataset(&path, DatasetFormat::Csv, &corpus).unwrap();

    let loaded: Vec<satd_core::corpus::LabeledInstance> =
        load_dataset(&path, DatasetFormat::Csv).unwrap();
    assert_eq!(loaded, corpus, "file order preserved");

    let counts = class_counts(&loaded);
    assert_eq!(counts["CODE_DESIGN"], 522);
    assert_eq!(counts["DOCUMENTATION"], 98);
    assert_eq!(counts["TEST"], 58);
    assert_eq!(counts["REQUIREMENT"], 27);
    assert_eq!(counts["NOT_SATD"], 4295);

    // Binary merge: SATD = 522 + 98 + 58 + 27.
    let binary = to_binary(&loaded);
    let counts = class_counts(&binary);
    assert_eq!(counts["SATD"], 705);
    assert_eq!(counts["NOT_SATD"], 4295);
}

#[test]
fn csv_and_jsonl_agree_on_the_same_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthetic::demo_corpus(23, 120);
    let csv = dir.path().join("data.csv");
    let jsonl = dir.path().join("data.jsonl");
    write_dataset(&csv, DatasetFormat::Csv, &corpus).unwrap();
    write_dataset(&jsonl, DatasetFormat::Jsonl, &corpus).unwrap();
    let from_csv: Vec<satd_core::corpus::LabeledInstance> =
        load_dataset(&csv, DatasetFormat::Csv).unwrap();
    let from_jsonl: Vec<satd_core::corpus::LabeledInstance> =
        load_dataset(&jsonl, DatasetFormat::Jsonl).unwrap();
    assert_eq!(from_csv, from_jsonl);
}

#[test]
fn binary_dataset_files_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = to_binary(&synthetic::demo_corpus(29, 60));
    let path = dir.path().join("binary.jsonl");
    write_dataset(&path, DatasetFormat::Jsonl, &corpus).unwrap();
    let loaded: Vec<satd_core::corpus::Instance<BinaryLabel>> =
        load_dataset(&path, DatasetFormat::Jsonl).unwrap();
    assert_eq!(loaded, corpus);
}
