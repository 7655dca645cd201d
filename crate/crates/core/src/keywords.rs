//! Embedding-similarity keyword extraction.
//!
//! Candidate n-grams from a group of documents are ranked by cosine
//! similarity between the candidate embedding and the embedding of the
//! concatenated group document (chunked to the embedder's maximum length
//! and mean-pooled). Operates on original, non-augmented data only: any
//! input carrying augmentation provenance is rejected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::augment::AugmentedInstance;
use crate::corpus::{ArtifactSource, LabeledInstance, SatdLabel};
use crate::embeddings::WordTable;
use crate::preprocess::{preprocess_text, PreprocessConfig};

#[derive(Debug, Error)]
pub enum KeywordError {
    #[error("group {group} has no usable documents")]
    EmptyGroup { group: String },
    #[error("augmented instance {id} in keyword input; extraction runs on original data only")]
    AugmentedInputRejected { id: String },
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("vector dimensions differ: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
    #[error("invalid keyword query: {0}")]
    InvalidQuery(String),
    #[error("embedding failed: {0}")]
    Embedding(String),
}

/// Cosine of the angle between two equal-length nonzero vectors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, KeywordError> {
    if a.len() != b.len() {
        return Err(KeywordError::DimensionMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm_a: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(KeywordError::ZeroVector);
    }
    Ok(dot / (norm_a * norm_b))
}

/// Sentence/phrase embedding function.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, KeywordError>;

    /// Token budget per chunk when embedding long documents.
    fn max_tokens(&self) -> usize {
        256
    }

    /// Identifier recorded in run manifests.
    fn identifier(&self) -> String;
}

/// Deterministic offline embedder: each token maps to a seeded
/// pseudo-random unit direction and a text embeds as the normalized sum
/// over token occurrences. Frequent group terms therefore dominate the
/// group direction, which is what similarity ranking needs.
pub struct HashedEmbedder {
    dim: usize,
    seed: u64,
}

impl HashedEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        HashedEmbedder { dim, seed }
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        use rand::Rng;
        use rand::SeedableRng;
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(token.as_bytes());
        let digest = hasher.finalize();
        let mut seed_bytes = [0u8; 8];
        seed_bytes.copy_from_slice(&digest[..8]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(u64::from_le_bytes(seed_bytes));
        let mut v: Vec<f64> = (0..self.dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        v
    }
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        HashedEmbedder::new(256, 0)
    }
}

impl Embedder for HashedEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, KeywordError> {
        let mut sum = vec![0.0; self.dim];
        let mut any = false;
        for token in text.split_whitespace() {
            any = true;
            for (s, v) in sum.iter_mut().zip(self.token_vector(token)) {
                *s += v;
            }
        }
        if !any {
            return Err(KeywordError::Embedding("empty text".into()));
        }
        let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(KeywordError::ZeroVector);
        }
        for x in &mut sum {
            *x /= norm;
        }
        Ok(sum)
    }

    fn identifier(&self) -> String {
        format!("hashed-bow-d{}-s{}", self.dim, self.seed)
    }
}

/// Embedder backed by a pretrained word table: mean of in-table word
/// vectors, normalized.
pub struct TableEmbedder {
    table: WordTable,
}

impl TableEmbedder {
    pub fn new(table: WordTable) -> Self {
        TableEmbedder { table }
    }
}

impl Embedder for TableEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, KeywordError> {
        let mut sum = vec![0.0; self.table.dim];
        let mut count = 0usize;
        for token in text.split_whitespace() {
            if let Some(v) = self.table.get(token) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(KeywordError::Embedding(format!(
                "no token of {text:?} is in the embedding table"
            )));
        }
        let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(KeywordError::ZeroVector);
        }
        for x in &mut sum {
            *x /= norm;
        }
        Ok(sum)
    }

    fn identifier(&self) -> String {
        format!("word-table:{}", self.table.source)
    }
}

/// What to extract for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordQuery {
    pub group: String,
    pub ngram_range: (usize, usize),
    pub top_k: usize,
    /// Maximal-marginal-relevance weight in [0, 1); 0 keeps pure
    /// similarity order.
    pub diversity: f64,
}

impl KeywordQuery {
    pub fn new(group: impl Into<String>) -> Self {
        KeywordQuery {
            group: group.into(),
            ngram_range: (1, 2),
            top_k: 10,
            diversity: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), KeywordError> {
        let (min, max) = self.ngram_range;
        if min < 1 || min > max || max > 3 {
            return Err(KeywordError::InvalidQuery(format!(
                "ngram range must satisfy 1 <= min <= max <= 3, got ({min}, {max})"
            )));
        }
        if self.top_k < 1 {
            return Err(KeywordError::InvalidQuery("top_k must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.diversity) {
            return Err(KeywordError::InvalidQuery(format!(
                "diversity must be in [0, 1), got {}",
                self.diversity
            )));
        }
        Ok(())
    }
}

/// One input document plus optional augmentation provenance. Extraction
/// rejects any document whose provenance is set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupDocument {
    pub text: String,
    pub provenance: Option<String>,
}

impl From<&LabeledInstance> for GroupDocument {
    fn from(instance: &LabeledInstance) -> Self {
        GroupDocument {
            text: instance.text.clone(),
            provenance: None,
        }
    }
}

impl From<&AugmentedInstance> for GroupDocument {
    fn from(instance: &AugmentedInstance) -> Self {
        GroupDocument {
            text: instance.text.clone(),
            provenance: Some(instance.id.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordEntry {
    pub phrase: String,
    pub score: f64,
}

/// Ranked keywords for one group, scores non-increasing, phrases unique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordResult {
    pub group: String,
    pub entries: Vec<KeywordEntry>,
    pub corpus_fingerprint: String,
}

impl KeywordResult {
    pub fn phrases(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.phrase.as_str()).collect()
    }

    pub fn contains(&self, phrase: &str) -> bool {
        self.entries.iter().any(|e| e.phrase == phrase)
    }
}

fn corpus_fingerprint(documents: &[GroupDocument]) -> String {
    let mut hasher = Sha256::new();
    for doc in documents {
        hasher.update(doc.text.as_bytes());
        hasher.update([0u8]);
    }
    format!("{:x}", hasher.finalize())
}

/// Embed a long token stream: chunk to the embedder's budget, embed each
/// chunk, mean-pool, renormalize.
fn embed_document(embedder: &dyn Embedder, tokens: &[&str]) -> Result<Vec<f64>, KeywordError> {
    let chunk_len = embedder.max_tokens().max(1);
    let mut pooled: Option<Vec<f64>> = None;
    let mut chunks = 0usize;
    for chunk in tokens.chunks(chunk_len) {
        let text = chunk.join(" ");
        let v = embedder.embed(&text)?;
        chunks += 1;
        match &mut pooled {
            Some(acc) => {
                if acc.len() != v.len() {
                    return Err(KeywordError::DimensionMismatch {
                        a: acc.len(),
                        b: v.len(),
                    });
                }
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += x;
                }
            }
            None => pooled = Some(v),
        }
    }
    let mut pooled = pooled.ok_or(KeywordError::ZeroVector)?;
    for x in &mut pooled {
        *x /= chunks as f64;
    }
    let norm = pooled.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(KeywordError::ZeroVector);
    }
    for x in &mut pooled {
        *x /= norm;
    }
    Ok(pooled)
}

/// Extract ranked keywords for one group of documents.
pub fn extract_keywords(
    documents: &[GroupDocument],
    query: &KeywordQuery,
    embedder: &dyn Embedder,
) -> Result<KeywordResult, KeywordError> {
    query.validate()?;
    for doc in documents {
        if let Some(id) = &doc.provenance {
            return Err(KeywordError::AugmentedInputRejected { id: id.clone() });
        }
    }

    let preprocess = PreprocessConfig::default();
    let token_lists: Vec<Vec<String>> = documents
        .iter()
        .map(|d| {
            preprocess_text(&d.text, &preprocess)
                .split_whitespace()
                .map(str::to_string)
                .collect()
        })
        .collect();

    let all_tokens: Vec<&str> = token_lists
        .iter()
        .flat_map(|tokens| tokens.iter().map(String::as_str))
        .collect();
    if all_tokens.is_empty() {
        return Err(KeywordError::EmptyGroup {
            group: query.group.clone(),
        });
    }

    // Candidate phrases: n-grams within each document, counted for
    // deterministic ordering. Stop words are already gone from the tokens.
    let (min_n, max_n) = query.ngram_range;
    let mut candidates: BTreeMap<String, u64> = BTreeMap::new();
    for tokens in &token_lists {
        for n in min_n..=max_n {
            if tokens.len() < n {
                continue;
            }
            for window in tokens.windows(n) {
                *candidates.entry(window.join(" ")).or_insert(0) += 1;
            }
        }
    }

    let group_vec = embed_document(embedder, &all_tokens)?;
    let mut scored: Vec<(String, f64, Vec<f64>)> = Vec::with_capacity(candidates.len());
    for phrase in candidates.keys() {
        let v = embedder.embed(phrase)?;
        let score = cosine_similarity(&v, &group_vec)?;
        scored.push((phrase.clone(), score, v));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let entries = if query.diversity == 0.0 {
        scored
            .iter()
            .take(query.top_k)
            .map(|(phrase, score, _)| KeywordEntry {
                phrase: phrase.clone(),
                score: *score,
            })
            .collect()
    } else {
        mmr_rerank(&scored, query.top_k, query.diversity)?
    };

    Ok(KeywordResult {
        group: query.group.clone(),
        entries,
        corpus_fingerprint: corpus_fingerprint(documents),
    })
}

/// Maximal-marginal-relevance selection over similarity-sorted candidates.
fn mmr_rerank(
    scored: &[(String, f64, Vec<f64>)],
    top_k: usize,
    diversity: f64,
) -> Result<Vec<KeywordEntry>, KeywordError> {
    let mut remaining: Vec<usize> = (0..scored.len()).collect();
    let mut selected: Vec<usize> = Vec::new();
    while selected.len() < top_k && !remaining.is_empty() {
        let mut best = 0usize;
        let mut best_value = f64::NEG_INFINITY;
        for (slot, &idx) in remaining.iter().enumerate() {
            let mut max_sim: f64 = 0.0;
            for &sel in &selected {
                let sim = cosine_similarity(&scored[idx].2, &scored[sel].2)?;
                max_sim = max_sim.max(sim);
            }
            let value = (1.0 - diversity) * scored[idx].1 - diversity * max_sim;
            if value > best_value {
                best_value = value;
                best = slot;
            }
        }
        selected.push(remaining.remove(best));
    }
    // Entries keep their original document similarity but are ordered by
    // selection; scores are then no longer guaranteed monotone, so re-sort
    // the selected set to honor the non-increasing contract.
    let mut entries: Vec<KeywordEntry> = selected
        .into_iter()
        .map(|idx| KeywordEntry {
            phrase: scored[idx].0.clone(),
            score: scored[idx].1,
        })
        .collect();
    entries.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then(a.phrase.cmp(&b.phrase)));
    Ok(entries)
}

/// Keyword tables per artifact source (SATD texts only) and per SATD type
/// (pooled across sources).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordTables {
    pub per_source: BTreeMap<String, KeywordResult>,
    pub per_type: BTreeMap<String, KeywordResult>,
}

/// Build both tables from an original dataset. Every group present in the
/// dataset's label universe must be non-empty; an empty group is an
/// explicit error rather than a silent omission.
pub fn keyword_tables(
    dataset: &[LabeledInstance],
    template: &KeywordQuery,
    embedder: &dyn Embedder,
) -> Result<KeywordTables, KeywordError> {
    let mut per_source = BTreeMap::new();
    for source in ArtifactSource::ALL {
        let documents: Vec<GroupDocument> = dataset
            .iter()
            .filter(|i| i.source == source && i.label.is_debt())
            .map(GroupDocument::from)
            .collect();
        if documents.is_empty() {
            return Err(KeywordError::EmptyGroup {
                group: source.code().to_string(),
            });
        }
        let query = KeywordQuery {
            group: source.code().to_string(),
            ..template.clone()
        };
        per_source.insert(
            source.code().to_string(),
            extract_keywords(&documents, &query, embedder)?,
        );
    }

    let mut per_type = BTreeMap::new();
    for label in SatdLabel::DEBT_TYPES {
        let documents: Vec<GroupDocument> = dataset
            .iter()
            .filter(|i| i.label == label)
            .map(GroupDocument::from)
            .collect();
        if documents.is_empty() {
            return Err(KeywordError::EmptyGroup {
                group: label.name().to_string(),
            });
        }
        let query = KeywordQuery {
            group: label.name().to_string(),
            ..template.clone()
        };
        per_type.insert(
            label.name().to_string(),
            extract_keywords(&documents, &query, embedder)?,
        );
    }

    Ok(KeywordTables {
        per_source,
        per_type,
    })
}

/// CSV export: group,rank,phrase,score.
pub fn write_keywords_csv(path: &Path, tables: &KeywordTables) -> std::io::Result<()> {
    use std::io::Write;
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "group,rank,phrase,score")?;
    for result in tables.per_source.values().chain(tables.per_type.values()) {
        for (rank, entry) in result.entries.iter().enumerate() {
            writeln!(
                file,
                "{},{},{},{:.6}",
                result.group,
                rank + 1,
                entry.phrase,
                entry.score
            )?;
        }
    }
    Ok(())
}
