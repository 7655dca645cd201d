//! Dataset schema, ingestion, label algebra, and stratified splitting.
//!
//! A dataset is an ordered list of [`Instance`]s read from CSV or JSONL.
//! Labels come in two alphabets: the five-way [`SatdLabel`] used by the
//! categorization step and the two-way [`BinaryLabel`] used by the
//! identification step; [`to_binary`] maps between them.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while loading, validating, or splitting datasets.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("unknown label {value:?} at row {row}")]
    UnknownLabel { row: usize, value: String },
    #[error("duplicate id {id:?} at row {row}")]
    DuplicateId { row: usize, id: String },
    #[error("class {label} has {count} instances; a three-way stratified split needs at least {needed}")]
    ClassTooSmall {
        label: String,
        count: usize,
        needed: usize,
    },
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    InvalidRatios([f64; 3]),
}

/// The five labels of the multi-type dataset. The four debt types collapse
/// to [`BinaryLabel::Satd`] under [`to_binary`].
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SatdLabel {
    NotSatd,
    CodeDesign,
    Documentation,
    Test,
    Requirement,
}

impl SatdLabel {
    /// All five labels, in canonical order.
    pub const ALL: [SatdLabel; 5] = [
        SatdLabel::NotSatd,
        SatdLabel::CodeDesign,
        SatdLabel::Documentation,
        SatdLabel::Test,
        SatdLabel::Requirement,
    ];

    /// The four debt types, in the order used for reports and model heads.
    pub const DEBT_TYPES: [SatdLabel; 4] = [
        SatdLabel::CodeDesign,
        SatdLabel::Documentation,
        SatdLabel::Test,
        SatdLabel::Requirement,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SatdLabel::NotSatd => "NOT_SATD",
            SatdLabel::CodeDesign => "CODE_DESIGN",
            SatdLabel::Documentation => "DOCUMENTATION",
            SatdLabel::Test => "TEST",
            SatdLabel::Requirement => "REQUIREMENT",
        }
    }

    pub fn is_debt(&self) -> bool {
        !matches!(self, SatdLabel::NotSatd)
    }
}

impl fmt::Display for SatdLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SatdLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NOT_SATD" => Ok(SatdLabel::NotSatd),
            "CODE_DESIGN" => Ok(SatdLabel::CodeDesign),
            "DOCUMENTATION" => Ok(SatdLabel::Documentation),
            "TEST" => Ok(SatdLabel::Test),
            "REQUIREMENT" => Ok(SatdLabel::Requirement),
            other => Err(other.to_string()),
        }
    }
}

/// Binary alphabet for the identification step.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BinaryLabel {
    Satd,
    NotSatd,
}

impl BinaryLabel {
    pub const ALL: [BinaryLabel; 2] = [BinaryLabel::NotSatd, BinaryLabel::Satd];

    pub fn name(&self) -> &'static str {
        match self {
            BinaryLabel::Satd => "SATD",
            BinaryLabel::NotSatd => "NOT_SATD",
        }
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BinaryLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "SATD" => Ok(BinaryLabel::Satd),
            "NOT_SATD" => Ok(BinaryLabel::NotSatd),
            other => Err(other.to_string()),
        }
    }
}

impl From<SatdLabel> for BinaryLabel {
    fn from(label: SatdLabel) -> Self {
        if label.is_debt() {
            BinaryLabel::Satd
        } else {
            BinaryLabel::NotSatd
        }
    }
}

/// Common interface over the two label alphabets.
pub trait ClassLabel:
    Clone + Copy + PartialEq + Eq + std::hash::Hash + Ord + fmt::Display + fmt::Debug
{
    fn label_name(&self) -> &'static str;
    fn parse_name(s: &str) -> Option<Self>;
}

impl ClassLabel for SatdLabel {
    fn label_name(&self) -> &'static str {
        self.name()
    }
    fn parse_name(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl ClassLabel for BinaryLabel {
    fn label_name(&self) -> &'static str {
        self.name()
    }
    fn parse_name(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

/// Where a text snippet came from.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ArtifactSource {
    CodeComment,
    IssueSection,
    PullSection,
    CommitMessage,
}

impl ArtifactSource {
    pub const ALL: [ArtifactSource; 4] = [
        ArtifactSource::CodeComment,
        ArtifactSource::IssueSection,
        ArtifactSource::PullSection,
        ArtifactSource::CommitMessage,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ArtifactSource::CodeComment => "CODE_COMMENT",
            ArtifactSource::IssueSection => "ISSUE_SECTION",
            ArtifactSource::PullSection => "PULL_SECTION",
            ArtifactSource::CommitMessage => "COMMIT_MESSAGE",
        }
    }

    /// Two-letter code used on the command line and in reports.
    pub fn code(&self) -> &'static str {
        match self {
            ArtifactSource::CodeComment => "CC",
            ArtifactSource::IssueSection => "IS",
            ArtifactSource::PullSection => "PS",
            ArtifactSource::CommitMessage => "CM",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code.to_ascii_uppercase().as_str() {
            "CC" => Some(ArtifactSource::CodeComment),
            "IS" => Some(ArtifactSource::IssueSection),
            "PS" => Some(ArtifactSource::PullSection),
            "CM" => Some(ArtifactSource::CommitMessage),
            _ => None,
        }
    }

    /// Natural-language phrase used when prompting a generation model.
    pub fn context_phrase(&self) -> &'static str {
        match self {
            ArtifactSource::CodeComment => "source code comment",
            ArtifactSource::IssueSection => "issue tracker section",
            ArtifactSource::PullSection => "pull request section",
            ArtifactSource::CommitMessage => "commit message from GitHub",
        }
    }
}

impl fmt::Display for ArtifactSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArtifactSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "CODE_COMMENT" => Ok(ArtifactSource::CodeComment),
            "ISSUE_SECTION" => Ok(ArtifactSource::IssueSection),
            "PULL_SECTION" => Ok(ArtifactSource::PullSection),
            "COMMIT_MESSAGE" => Ok(ArtifactSource::CommitMessage),
            other => Err(other.to_string()),
        }
    }
}

/// One text snippet with its source, project, and label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance<L> {
    pub id: String,
    pub source: ArtifactSource,
    #[serde(default)]
    pub project: String,
    pub text: String,
    pub label: L,
}

pub type LabeledInstance = Instance<SatdLabel>;
pub type BinaryInstance = Instance<BinaryLabel>;

impl<L> Instance<L> {
    /// Replace the label, keeping everything else.
    pub fn map_label<M>(self, f: impl FnOnce(L) -> M) -> Instance<M> {
        Instance {
            id: self.id,
            source: self.source,
            project: self.project,
            text: self.text,
            label: f(self.label),
        }
    }
}

/// Supported dataset file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Csv,
    Jsonl,
}

impl DatasetFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(DatasetFormat::Csv),
            "jsonl" | "ndjson" => Some(DatasetFormat::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DatasetFormat::Csv),
            "jsonl" | "ndjson" => Ok(DatasetFormat::Jsonl),
            other => Err(other.to_string()),
        }
    }
}

const CSV_HEADER: [&str; 5] = ["id", "source", "project", "text", "label"];

#[derive(Debug, Deserialize)]
struct RawRow {
    id: String,
    source: String,
    #[serde(default)]
    project: String,
    text: String,
    label: String,
}

fn validate_row<L: ClassLabel>(raw: RawRow, row: usize) -> Result<Instance<L>, CorpusError> {
    if raw.id.trim().is_empty() {
        return Err(CorpusError::MalformedRow {
            row,
            message: "empty id".into(),
        });
    }
    if raw.text.trim().is_empty() {
        return Err(CorpusError::MalformedRow {
            row,
            message: "empty text".into(),
        });
    }
    let source: ArtifactSource = raw.source.parse().map_err(|v| CorpusError::MalformedRow {
        row,
        message: format!("unknown artifact source {v:?}"),
    })?;
    let label = L::parse_name(&raw.label).ok_or(CorpusError::UnknownLabel {
        row,
        value: raw.label,
    })?;
    Ok(Instance {
        id: raw.id,
        source,
        project: raw.project,
        text: raw.text,
        label,
    })
}

/// Load a dataset, preserving file order and rejecting duplicate ids.
pub fn load_dataset<L: ClassLabel>(
    path: &Path,
    format: DatasetFormat,
) -> Result<Vec<Instance<L>>, CorpusError> {
    let rows = match format {
        DatasetFormat::Csv => load_csv_rows(path)?,
        DatasetFormat::Jsonl => load_jsonl_rows(path)?,
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (row, raw) in rows {
        let instance = validate_row::<L>(raw, row)?;
        if !seen.insert(instance.id.clone()) {
            return Err(CorpusError::DuplicateId {
                row,
                id: instance.id,
            });
        }
        out.push(instance);
    }
    Ok(out)
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn load_csv_rows(path: &Path) -> Result<Vec<(usize, RawRow)>, CorpusError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::MalformedRow {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(Vec::new()); // wholly empty file
    }
    if headers.iter().ne(CSV_HEADER) {
        return Err(CorpusError::MalformedRow {
            row: 0,
            message: format!("expected header {CSV_HEADER:?}, got {headers:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CorpusError::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        if record.len() != CSV_HEADER.len() {
            return Err(CorpusError::MalformedRow {
                row,
                message: format!("expected {} fields, got {}", CSV_HEADER.len(), record.len()),
            });
        }
        rows.push((
            row,
            RawRow {
                id: record[0].to_string(),
                source: record[1].to_string(),
                project: record[2].to_string(),
                text: record[3].to_string(),
                label: record[4].to_string(),
            },
        ));
    }
    Ok(rows)
}

fn load_jsonl_rows(path: &Path) -> Result<Vec<(usize, RawRow)>, CorpusError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRow = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        rows.push((row, raw));
    }
    Ok(rows)
}

/// Write a dataset in the given format. Enum values serialize as their
/// uppercase names; CSV uses RFC 4180 quoting.
pub fn write_dataset<L: ClassLabel + Serialize>(
    path: &Path,
    format: DatasetFormat,
    data: &[Instance<L>],
) -> Result<(), CorpusError> {
    match format {
        DatasetFormat::Csv => {
            let file = File::create(path).map_err(|e| io_err(path, e))?;
            let mut writer = csv::Writer::from_writer(file);
            writer
                .write_record(CSV_HEADER)
                .map_err(|e| CorpusError::MalformedRow {
                    row: 0,
                    message: e.to_string(),
                })?;
            for (i, instance) in data.iter().enumerate() {
                writer
                    .write_record([
                        instance.id.as_str(),
                        instance.source.name(),
                        instance.project.as_str(),
                        instance.text.as_str(),
                        instance.label.label_name(),
                    ])
                    .map_err(|e| CorpusError::MalformedRow {
                        row: i + 1,
                        message: e.to_string(),
                    })?;
            }
            writer.flush().map_err(|e| io_err(path, e))?;
        }
        DatasetFormat::Jsonl => {
            let mut file = File::create(path).map_err(|e| io_err(path, e))?;
            for instance in data {
                let line = serde_json::to_string(instance).expect("instance serializes");
                writeln!(file, "{line}").map_err(|e| io_err(path, e))?;
            }
        }
    }
    Ok(())
}

/// Collapse the four debt types into a single SATD class.
pub fn to_binary<L>(data: &[Instance<L>]) -> Vec<BinaryInstance>
where
    L: Clone + Into<BinaryLabel>,
{
    data.iter()
        .cloned()
        .map(|inst| inst.map_label(Into::into))
        .collect()
}

/// Count instances per label name.
pub fn class_counts<L: ClassLabel>(data: &[Instance<L>]) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for instance in data {
        *counts
            .entry(instance.label.label_name().to_string())
            .or_insert(0) += 1;
    }
    counts
}

/// A train/validation/test partition of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitBundle<L> {
    pub train: Vec<Instance<L>>,
    pub validation: Vec<Instance<L>>,
    pub test: Vec<Instance<L>>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl<L: Clone> SplitBundle<L> {
    /// Apply a label mapping to all three parts.
    pub fn map_labels<M>(&self, f: impl Fn(L) -> M + Copy) -> SplitBundle<M> {
        let map = |part: &[Instance<L>]| {
            part.iter()
                .cloned()
                .map(|inst| inst.map_label(f))
                .collect()
        };
        SplitBundle {
            train: map(&self.train),
            validation: map(&self.validation),
            test: map(&self.test),
            seed: self.seed,
            ratios: self.ratios,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub const DEFAULT_SPLIT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

/// Split per class with a seeded shuffle, slicing each class by the ratios.
/// Leftover instances go to the parts with the largest fractional remainder
/// (ties favor train, then validation), which keeps every per-class count
/// within one instance of its exact proportional share.
pub fn stratified_split<L: ClassLabel>(
    data: &[Instance<L>],
    ratios: [f64; 3],
    seed: u64,
) -> Result<SplitBundle<L>, CorpusError> {
    if ratios.iter().any(|r| *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidRatios(ratios));
    }

    let mut by_class: BTreeMap<&'static str, Vec<usize>> = BTreeMap::new();
    for (i, instance) in data.iter().enumerate() {
        by_class
            .entry(instance.label.label_name())
            .or_default()
            .push(i);
    }

    if ratios.iter().all(|r| *r > 0.0) {
        for (label, members) in &by_class {
            if members.len() < 3 {
                return Err(CorpusError::ClassTooSmall {
                    label: (*label).to_string(),
                    count: members.len(),
                    needed: 3,
                });
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut part_indices: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for members in by_class.values() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        let counts = apportion(shuffled.len(), ratios);
        let mut offset = 0;
        for (part, count) in counts.iter().enumerate() {
            part_indices[part].extend_from_slice(&shuffled[offset..offset + count]);
            offset += count;
        }
    }

    // Parts keep the original dataset order.
    let collect = |mut indices: Vec<usize>| -> Vec<Instance<L>> {
        indices.sort_unstable();
        indices.into_iter().map(|i| data[i].clone()).collect()
    };
    let [train_idx, val_idx, test_idx] = part_indices;
    let bundle = SplitBundle {
        train: collect(train_idx),
        validation: collect(val_idx),
        test: collect(test_idx),
        seed,
        ratios,
    };
    debug_assert_eq!(bundle.len(), data.len());
    Ok(bundle)
}

/// Largest-remainder apportionment of `total` items across three ratios.
fn apportion(total: usize, ratios: [f64; 3]) -> [usize; 3] {
    let targets: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut counts: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    // Sort by descending fractional remainder; ties keep part order
    // (train before validation before test).
    order.sort_by(|&a, &b| {
        let fa = targets[a] - targets[a].floor();
        let fb = targets[b] - targets[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for i in 0..(total - assigned) {
        counts[order[i % 3]] += 1;
    }
    [counts[0], counts[1], counts[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn instance(id: &str, label: SatdLabel) -> LabeledInstance {
        Instance {
            id: id.to_string(),
            source: ArtifactSource::CommitMessage,
            project: "demo".to_string(),
            text: format!("text for {id}"),
            label,
        }
    }

    fn toy_dataset(counts: &[(SatdLabel, usize)]) -> Vec<LabeledInstance> {
        let mut data = Vec::new();
        for (label, count) in counts {
            for i in 0..*count {
                data.push(instance(&format!("{}-{i}", label.name()), *label));
            }
        }
        data
    }

    #[test]
    fn csv_roundtrip_preserves_instances() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let mut data = toy_dataset(&[(SatdLabel::CodeDesign, 3), (SatdLabel::NotSatd, 2)]);
        data[0].text = "quoted, \"text\"\nwith newline".to_string();
        write_dataset(&path, DatasetFormat::Csv, &data).unwrap();
        let loaded: Vec<LabeledInstance> = load_dataset(&path, DatasetFormat::Csv).unwrap();
        assert_eq!(loaded, data);
    }

    #[test]
    fn jsonl_roundtrip_preserves_instances() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let data = toy_dataset(&[(SatdLabel::Test, 2), (SatdLabel::Requirement, 1)]);
        write_dataset(&path, DatasetFormat::Jsonl, &data).unwrap();
        let loaded: Vec<LabeledInstance> = load_dataset(&path, DatasetFormat::Jsonl).unwrap();
        assert_eq!(loaded, data);
    }

    #[test]
    fn header_only_csv_is_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "id,source,project,text,label\n").unwrap();
        let loaded: Vec<LabeledInstance> = load_dataset(&path, DatasetFormat::Csv).unwrap();
        assert!(loaded.is_empty());
    }

    #[test]
    fn duplicate_id_is_rejected_with_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.csv");
        std::fs::write(
            &path,
            "id,source,project,text,label\n\
             a,COMMIT_MESSAGE,p,first,TEST\n\
             a,COMMIT_MESSAGE,p,second,TEST\n",
        )
        .unwrap();
        let err = load_dataset::<SatdLabel>(&path, DatasetFormat::Csv).unwrap_err();
        match err {
            CorpusError::DuplicateId { row, id } => {
                assert_eq!(row, 2);
                assert_eq!(id, "a");
            }
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn unknown_label_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "id,source,project,text,label\na,COMMIT_MESSAGE,p,text,DEFECT\n",
        )
        .unwrap();
        let err = load_dataset::<SatdLabel>(&path, DatasetFormat::Csv).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownLabel { row: 1, .. }));
    }

    #[test]
    fn empty_text_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blank.csv");
        std::fs::write(
            &path,
            "id,source,project,text,label\na,COMMIT_MESSAGE,p,   ,TEST\n",
        )
        .unwrap();
        let err = load_dataset::<SatdLabel>(&path, DatasetFormat::Csv).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRow { row: 1, .. }));
    }

    #[test]
    fn to_binary_merges_debt_types() {
        let data = toy_dataset(&[
            (SatdLabel::CodeDesign, 5),
            (SatdLabel::Documentation, 4),
            (SatdLabel::Test, 3),
            (SatdLabel::Requirement, 2),
            (SatdLabel::NotSatd, 7),
        ]);
        let binary = to_binary(&data);
        let counts = class_counts(&binary);
        assert_eq!(counts["SATD"], 14);
        assert_eq!(counts["NOT_SATD"], 7);
        assert_eq!(binary.len(), data.len());
        for (a, b) in data.iter().zip(&binary) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.text, b.text);
        }
    }

    #[test]
    fn to_binary_is_idempotent_and_leaves_not_satd_alone() {
        let data = toy_dataset(&[(SatdLabel::NotSatd, 6)]);
        let once = to_binary(&data);
        assert!(once.iter().all(|i| i.label == BinaryLabel::NotSatd));
        let twice = to_binary(&once);
        assert_eq!(once, twice);
    }

    #[test]
    fn binary_satd_count_matches_debt_type_sum_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let mut data = Vec::new();
            for i in 0..rng.gen_range(1..200usize) {
                let label = SatdLabel::ALL[rng.gen_range(0..SatdLabel::ALL.len())];
                data.push(instance(&format!("r{i}"), label));
            }
            // Independent count: sum the four debt-type tallies directly.
            let debt_sum: usize = data.iter().filter(|i| i.label.is_debt()).count();
            let binary = to_binary(&data);
            let satd = binary
                .iter()
                .filter(|i| i.label == BinaryLabel::Satd)
                .count();
            assert_eq!(satd, debt_sum);
        }
    }

    #[test]
    fn stratified_split_matches_worked_example() {
        // 100 instances, two classes 90/10: exact 80/10/10 split with
        // per-class proportions preserved.
        let data = toy_dataset(&[(SatdLabel::NotSatd, 90), (SatdLabel::Test, 10)]);
        let bundle = stratified_split(&data, [0.8, 0.1, 0.1], 42).unwrap();
        assert_eq!(bundle.train.len(), 80);
        assert_eq!(bundle.validation.len(), 10);
        assert_eq!(bundle.test.len(), 10);
        let train_counts = class_counts(&bundle.train);
        assert_eq!(train_counts["NOT_SATD"], 72);
        assert_eq!(train_counts["TEST"], 8);
        let val_counts = class_counts(&bundle.validation);
        assert_eq!(val_counts["NOT_SATD"], 9);
        assert_eq!(val_counts["TEST"], 1);
        let test_counts = class_counts(&bundle.test);
        assert_eq!(test_counts["NOT_SATD"], 9);
        assert_eq!(test_counts["TEST"], 1);
    }

    #[test]
    fn degenerate_ratio_puts_everything_in_train() {
        let data = toy_dataset(&[(SatdLabel::CodeDesign, 17)]);
        let bundle = stratified_split(&data, [1.0, 0.0, 0.0], 7).unwrap();
        assert_eq!(bundle.train.len(), 17);
        assert!(bundle.validation.is_empty());
        assert!(bundle.test.is_empty());
    }

    #[test]
    fn split_is_deterministic_for_fixed_seed() {
        let data = toy_dataset(&[(SatdLabel::NotSatd, 37), (SatdLabel::Test, 13)]);
        let a = stratified_split(&data, DEFAULT_SPLIT_RATIOS, 99).unwrap();
        let b = stratified_split(&data, DEFAULT_SPLIT_RATIOS, 99).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&data, DEFAULT_SPLIT_RATIOS, 100).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn small_class_is_rejected_when_all_ratios_nonzero() {
        let data = toy_dataset(&[(SatdLabel::NotSatd, 50), (SatdLabel::Requirement, 2)]);
        let err = stratified_split(&data, DEFAULT_SPLIT_RATIOS, 1).unwrap_err();
        match err {
            CorpusError::ClassTooSmall { label, count, .. } => {
                assert_eq!(label, "REQUIREMENT");
                assert_eq!(count, 2);
            }
            other => panic!("expected ClassTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn invalid_ratios_are_rejected() {
        let data = toy_dataset(&[(SatdLabel::NotSatd, 10)]);
        assert!(matches!(
            stratified_split(&data, [0.5, 0.4, 0.2], 1),
            Err(CorpusError::InvalidRatios(_))
        ));
        assert!(matches!(
            stratified_split(&data, [1.1, -0.1, 0.0], 1),
            Err(CorpusError::InvalidRatios(_))
        ));
    }

    #[test]
    fn split_partitions_and_stratifies_random_datasets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for round in 0..30 {
            let mut data = Vec::new();
            for label in SatdLabel::ALL {
                let count = rng.gen_range(3..120usize);
                for i in 0..count {
                    data.push(instance(&format!("{round}-{}-{i}", label.name()), label));
                }
            }
            let bundle = stratified_split(&data, DEFAULT_SPLIT_RATIOS, round).unwrap();

            // Partition: every id appears exactly once across the parts.
            let mut ids = HashSet::new();
            for part in [&bundle.train, &bundle.validation, &bundle.test] {
                for inst in part {
                    assert!(ids.insert(inst.id.clone()), "id {} duplicated", inst.id);
                }
            }
            assert_eq!(ids.len(), data.len());

            // Stratification: per-class counts within one of the exact share.
            let global = class_counts(&data);
            for (part, ratio) in [
                (&bundle.train, 0.8),
                (&bundle.validation, 0.1),
                (&bundle.test, 0.1),
            ] {
                let counts = class_counts(part);
                for (label, total) in &global {
                    let got = *counts.get(label).unwrap_or(&0) as f64;
                    let want = ratio * *total as f64;
                    assert!(
                        (got - want).abs() <= 1.0 + 1e-9,
                        "class {label}: got {got}, want {want} +- 1"
                    );
                }
            }
        }
    }

    #[test]
    fn parts_preserve_dataset_order() {
        let data = toy_dataset(&[(SatdLabel::NotSatd, 20), (SatdLabel::Test, 10)]);
        let index: std::collections::HashMap<&str, usize> = data
            .iter()
            .enumerate()
            .map(|(i, inst)| (inst.id.as_str(), i))
            .collect();
        let bundle = stratified_split(&data, DEFAULT_SPLIT_RATIOS, 3).unwrap();
        for part in [&bundle.train, &bundle.validation, &bundle.test] {
            let positions: Vec<usize> = part.iter().map(|i| index[i.id.as_str()]).collect();
            let mut sorted = positions.clone();
            sorted.sort_unstable();
            assert_eq!(positions, sorted);
        }
    }
}
