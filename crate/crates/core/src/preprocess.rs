//! Noise-removing text normalization applied before feature extraction.
//!
//! The pipeline lowercases, strips URLs, punctuation, digits, and
//! non-ASCII characters, drops stop words and short tokens, and applies
//! dictionary lemmatization. The stop-word list and lemma table ship as
//! versioned resource files so runs are reproducible.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::{Instance, SatdLabel};

const STOPWORDS_SRC: &str = include_str!("../resources/stopwords.txt");
const LEMMAS_SRC: &str = include_str!("../resources/lemmas.txt");

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_SRC
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

fn lemmas() -> &'static HashMap<&'static str, &'static str> {
    static MAP: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    MAP.get_or_init(|| {
        LEMMAS_SRC
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .filter_map(|l| {
                let mut parts = l.split_whitespace();
                Some((parts.next()?, parts.next()?))
            })
            .collect()
    })
}

/// Check whether a token is on the shipped stop-word list.
pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

/// Look up the dictionary lemma of a lowercased token.
pub fn lemma_of(token: &str) -> &str {
    lemmas().get(token).copied().unwrap_or(token)
}

/// Switches for each normalization step. Defaults follow the standard
/// recipe: everything on, words of two letters or fewer dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub lowercase: bool,
    pub remove_stopwords: bool,
    pub remove_punctuation: bool,
    pub lemmatize: bool,
    pub min_word_length: usize,
    pub remove_numbers: bool,
    pub remove_urls: bool,
    pub ascii_only: bool,
    pub collapse_whitespace: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            lowercase: true,
            remove_stopwords: true,
            remove_punctuation: true,
            lemmatize: true,
            min_word_length: 3,
            remove_numbers: true,
            remove_urls: true,
            ascii_only: true,
            collapse_whitespace: true,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_word_length < 1 {
            return Err("min_word_length must be at least 1".into());
        }
        Ok(())
    }
}

fn url_pattern() -> &'static regex::Regex {
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    // scheme://non-space+ plus bare www.-prefixed tokens
    RE.get_or_init(|| regex::Regex::new(r"(?i)\b[a-z][a-z0-9+.-]*://\S+|\bwww\.\S+").unwrap())
}

/// Normalize one string into space-joined tokens.
pub fn preprocess_text(raw: &str, config: &PreprocessConfig) -> String {
    let mut text = if config.remove_urls {
        url_pattern().replace_all(raw, " ").into_owned()
    } else {
        raw.to_string()
    };
    if config.lowercase {
        text = text.to_lowercase();
    }
    if config.ascii_only {
        text.retain(|c| c.is_ascii());
    }

    let mut cleaned = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_alphanumeric() {
            if config.remove_numbers && c.is_ascii_digit() {
                cleaned.push(' ');
            } else {
                cleaned.push(c);
            }
        } else if config.remove_punctuation || c.is_whitespace() {
            cleaned.push(' ');
        } else {
            cleaned.push(c);
        }
    }

    let mut tokens = Vec::new();
    for token in cleaned.split_whitespace() {
        let token = if config.lemmatize {
            lemma_of(token)
        } else {
            token
        };
        if token.chars().count() < config.min_word_length {
            continue;
        }
        if config.remove_stopwords && is_stopword(token) {
            continue;
        }
        tokens.push(token);
    }
    tokens.join(" ")
}

/// Outcome of [`deduplicate`]: how many rows were dropped and which
/// normalized texts carried more than one label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupReport {
    pub removed: usize,
    /// Pairs of instance ids that share a source and normalized text but
    /// disagree on the label. Both instances are retained.
    pub label_conflicts: Vec<(String, String)>,
}

/// Keep the first instance for each (source, normalized text, label)
/// triple. Instances with identical normalized text but different labels
/// are all retained and reported as conflicts.
pub fn deduplicate(
    data: &[Instance<SatdLabel>],
    config: &PreprocessConfig,
) -> (Vec<Instance<SatdLabel>>, DedupReport) {
    let mut seen: HashMap<(crate::corpus::ArtifactSource, String, SatdLabel), usize> =
        HashMap::new();
    let mut first_for_text: HashMap<(crate::corpus::ArtifactSource, String), usize> =
        HashMap::new();
    let mut report = DedupReport::default();
    let mut kept = Vec::new();

    for (idx, instance) in data.iter().enumerate() {
        let normalized = preprocess_text(&instance.text, config);
        let triple = (instance.source, normalized.clone(), instance.label);
        if seen.contains_key(&triple) {
            report.removed += 1;
            continue;
        }
        seen.insert(triple, idx);
        let text_key = (instance.source, normalized);
        match first_for_text.get(&text_key) {
            Some(&first_idx) if data[first_idx].label != instance.label => {
                log::warn!(
                    "instances {} and {} share normalized text but disagree on label ({} vs {})",
                    data[first_idx].id,
                    instance.id,
                    data[first_idx].label,
                    instance.label
                );
                report
                    .label_conflicts
                    .push((data[first_idx].id.clone(), instance.id.clone()));
            }
            Some(_) => {}
            None => {
                first_for_text.insert(text_key, idx);
            }
        }
        kept.push(instance.clone());
    }
    (kept, report)
}
