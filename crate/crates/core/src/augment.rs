//! Class-balance planning and paraphrase augmentation.
//!
//! Minority classes are brought up to the size of the majority class by
//! generating `n_i = floor(C_max / C_i) - 1` paraphrases per original
//! instance, so the final count `C_i * (n_i + 1)` never exceeds `C_max`.
//! Balance is measured as normalized Shannon entropy. Augmentation is
//! applied to the training split only; the leakage guard rejects inputs
//! that carry validation or test ids.

use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{ArtifactSource, ClassLabel, Instance, LabeledInstance, SatdLabel};
use crate::gateway::{GatewayError, GatewayKind, GenerationClient, Message};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("class distribution is empty or has no members")]
    EmptyDistribution,
    #[error("entropy balance needs at least two classes, got {k}")]
    DegenerateDistribution { k: usize },
    #[error("generation for {origin_id} exhausted {attempts} attempts: {last_error}")]
    GatewayExhausted {
        origin_id: String,
        attempts: u32,
        last_error: String,
    },
    #[error("augmentation input contains held-out instance {id}")]
    Leakage { id: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Counts per class name. The key set is the label universe: classes with
/// zero members stay part of it when inserted explicitly.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDistribution {
    counts: BTreeMap<String, u64>,
}

impl ClassDistribution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts<S: Into<String>>(counts: impl IntoIterator<Item = (S, u64)>) -> Self {
        ClassDistribution {
            counts: counts.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn from_instances<L: ClassLabel>(data: &[Instance<L>]) -> Self {
        ClassDistribution {
            counts: crate::corpus::class_counts(data),
        }
    }

    pub fn insert(&mut self, label: impl Into<String>, count: u64) {
        self.counts.insert(label.into(), count);
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn get(&self, label: &str) -> u64 {
        self.counts.get(label).copied().unwrap_or(0)
    }

    /// Number of classes in the universe, including zero-count ones.
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Largest class; ties resolve to the lexicographically first name.
    pub fn majority(&self) -> Option<(&str, u64)> {
        self.counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(name, count)| (name.as_str(), *count))
    }
}

/// Normalized Shannon entropy of the class distribution: `H / log k` with
/// `H = -sum p_i log p_i` and `0 log 0 = 0`. The logarithm base cancels.
/// Returns 1 for perfectly balanced classes and 0 when one class holds
/// every instance.
pub fn entropy_balance(distribution: &ClassDistribution) -> Result<f64, AugmentError> {
    let k = distribution.k();
    if k < 2 {
        return Err(AugmentError::DegenerateDistribution { k });
    }
    let total = distribution.total();
    if total == 0 {
        return Err(AugmentError::EmptyDistribution);
    }
    let total = total as f64;
    let entropy: f64 = distribution
        .counts
        .values()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    Ok(entropy / (k as f64).ln())
}

/// Which label universe a plan was computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AugmentScope {
    /// The four debt types; the majority type is the balancing target.
    TypesOnly,
    /// SATD vs Not-SATD.
    Binary,
}

/// Per-class paraphrase multipliers derived from class counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub scope: AugmentScope,
    /// The majority class every other class is balanced toward.
    pub target_class: String,
    /// Paraphrases generated per original instance; 0 for the majority
    /// class and for empty classes.
    pub multipliers: BTreeMap<String, u32>,
    /// `count * (multiplier + 1)` per class.
    pub expected_final: BTreeMap<String, u64>,
}

impl AugmentationPlan {
    pub fn multiplier_for(&self, label: &str) -> u32 {
        self.multipliers.get(label).copied().unwrap_or(0)
    }

    pub fn is_noop(&self) -> bool {
        self.multipliers.values().all(|&n| n == 0)
    }
}

/// Compute multipliers that balance every minority class toward the
/// majority class without overshooting it.
pub fn plan_augmentation(
    distribution: &ClassDistribution,
    scope: AugmentScope,
) -> Result<AugmentationPlan, AugmentError> {
    let (target, c_max) = distribution.majority().ok_or(AugmentError::EmptyDistribution)?;
    if c_max == 0 {
        return Err(AugmentError::EmptyDistribution);
    }
    let mut multipliers = BTreeMap::new();
    let mut expected_final = BTreeMap::new();
    for (label, &count) in distribution.counts() {
        let n = if count == 0 || count == c_max {
            0
        } else {
            (c_max / count - 1) as u32
        };
        multipliers.insert(label.clone(), n);
        expected_final.insert(label.clone(), count * (u64::from(n) + 1));
    }
    Ok(AugmentationPlan {
        scope,
        target_class: target.to_string(),
        multipliers,
        expected_final,
    })
}

/// Build the multi-turn paraphrase request for one instance: a programmer
/// persona, a context turn naming the artifact source, the rephrasing
/// instruction, and finally the instance text on its own turn.
pub fn build_prompt(instance: &LabeledInstance, n: usize) -> Vec<Message> {
    let phrase = instance.source.context_phrase();
    let request = if n == 1 {
        "Rephrase it in 1 other way".to_string()
    } else {
        format!("Rephrase it in {n} different ways")
    };
    let list_hint = if n == 1 {
        "a single numbered line (1.)".to_string()
    } else {
        format!("a numbered list from 1. to {n}.")
    };
    vec![
        Message::system(
            "You are a programmer working on a large collaborative software project.",
        ),
        Message::user(format!(
            "The next message is a {phrase} written by a developer. {request}, \
             keeping the original meaning and technical details unchanged. \
             Reply with {list_hint}"
        )),
        Message::assistant(format!(
            "Understood. Send the {phrase} and I will reply with only the numbered rephrasings."
        )),
        Message::user(instance.text.clone()),
    ]
}

fn prompt_fingerprint(dialogue: &[Message]) -> String {
    let serialized = serde_json::to_string(dialogue).expect("messages serialize");
    format!("{:x}", Sha256::digest(serialized.as_bytes()))
}

/// A generated paraphrase tied back to its training-split origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedInstance {
    pub id: String,
    pub source: ArtifactSource,
    #[serde(default)]
    pub project: String,
    pub text: String,
    pub label: SatdLabel,
    pub origin_id: String,
    pub variant_index: u32,
    pub generator: GatewayKind,
    pub prompt_fingerprint: String,
}

impl AugmentedInstance {
    /// View as a plain instance (provenance dropped) for training.
    pub fn to_instance(&self) -> LabeledInstance {
        Instance {
            id: self.id.clone(),
            source: self.source,
            project: self.project.clone(),
            text: self.text.clone(),
            label: self.label,
        }
    }
}

/// A class that ended up below its planned final count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub origin_id: String,
    pub requested: u32,
    pub produced: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentOutcome {
    pub augmented: Vec<AugmentedInstance>,
    pub shortfalls: Vec<Shortfall>,
}

impl AugmentOutcome {
    /// Training set plus augmented instances, originals untouched.
    pub fn extend_training_set(&self, train: &[LabeledInstance]) -> Vec<LabeledInstance> {
        let mut out = train.to_vec();
        out.extend(self.augmented.iter().map(AugmentedInstance::to_instance));
        out
    }
}

#[derive(Debug, Clone)]
pub struct AugmentOptions {
    /// Full regenerations attempted per instance before a shortfall is
    /// recorded.
    pub max_retries: u32,
    /// Bounded in-flight generation requests.
    pub concurrency: usize,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        AugmentOptions {
            max_retries: 3,
            concurrency: 4,
        }
    }
}

/// Reject augmentation inputs that overlap the held-out splits.
pub fn check_leakage(
    inputs: &[LabeledInstance],
    holdout_ids: &HashSet<String>,
) -> Result<(), AugmentError> {
    for instance in inputs {
        if holdout_ids.contains(&instance.id) {
            return Err(AugmentError::Leakage {
                id: instance.id.clone(),
            });
        }
    }
    Ok(())
}

struct Job<'a> {
    instance: &'a LabeledInstance,
    n: u32,
}

type JobOutput = Result<(Vec<AugmentedInstance>, Option<Shortfall>), AugmentError>;

/// Generate `n_i` paraphrases for every minority-class training instance.
/// Generation failures reduce the final count and are reported as
/// shortfalls, never padded with duplicates. Results are ordered by
/// `(origin_id, variant_index)` regardless of worker scheduling.
pub fn augment_training_set(
    train: &[LabeledInstance],
    plan: &AugmentationPlan,
    gateway: &dyn GenerationClient,
    options: &AugmentOptions,
) -> Result<AugmentOutcome, AugmentError> {
    let jobs: Vec<Job> = train
        .iter()
        .filter_map(|instance| {
            let n = plan.multiplier_for(instance.label.label_name());
            (n > 0).then_some(Job { instance, n })
        })
        .collect();

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<JobOutput>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let workers = options.concurrency.max(1).min(jobs.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= jobs.len() {
                    break;
                }
                let result = run_job(&jobs[idx], gateway, options);
                slots.lock().expect("slot lock")[idx] = Some(result);
            });
        }
    });

    let mut augmented = Vec::new();
    let mut shortfalls = Vec::new();
    for slot in slots.into_inner().expect("slot lock") {
        let (instances, shortfall) = slot.expect("every job ran")?;
        augmented.extend(instances);
        shortfalls.extend(shortfall);
    }
    augmented.sort_by(|a, b| {
        a.origin_id
            .cmp(&b.origin_id)
            .then(a.variant_index.cmp(&b.variant_index))
    });
    shortfalls.sort_by(|a, b| a.origin_id.cmp(&b.origin_id));
    Ok(AugmentOutcome {
        augmented,
        shortfalls,
    })
}

fn run_job(job: &Job, gateway: &dyn GenerationClient, options: &AugmentOptions) -> JobOutput {
    let instance = job.instance;
    let n = job.n as usize;
    let dialogue = build_prompt(instance, n);
    let fingerprint = prompt_fingerprint(&dialogue);

    let mut kept: Vec<String> = Vec::with_capacity(n);
    let mut attempts = 0;
    let mut errors = 0;
    let mut last_error = String::new();
    while kept.len() < n && attempts <= options.max_retries {
        attempts += 1;
        match gateway.generate(&dialogue, n) {
            Ok(result) => {
                for text in result.paraphrases {
                    let text = text.trim().to_string();
                    if text.is_empty() || text.eq_ignore_ascii_case(instance.text.trim()) {
                        continue; // blank or unchanged generation, retry fills the gap
                    }
                    if kept.iter().any(|k| k.eq_ignore_ascii_case(&text)) {
                        continue; // duplicates would defeat diversity
                    }
                    kept.push(text);
                    if kept.len() == n {
                        break;
                    }
                }
            }
            Err(GatewayError::Auth(e)) => return Err(GatewayError::Auth(e).into()),
            Err(GatewayError::MissingKey) => return Err(GatewayError::MissingKey.into()),
            Err(GatewayError::Config(e)) => return Err(GatewayError::Config(e).into()),
            Err(transient) => {
                errors += 1;
                last_error = transient.to_string();
            }
        }
    }

    if kept.is_empty() && errors > 0 {
        return Err(AugmentError::GatewayExhausted {
            origin_id: instance.id.clone(),
            attempts,
            last_error,
        });
    }

    let augmented: Vec<AugmentedInstance> = kept
        .into_iter()
        .enumerate()
        .map(|(i, text)| AugmentedInstance {
            id: format!("{}#aug{}", instance.id, i + 1),
            source: instance.source,
            project: instance.project.clone(),
            text,
            label: instance.label,
            origin_id: instance.id.clone(),
            variant_index: (i + 1) as u32,
            generator: gateway.kind(),
            prompt_fingerprint: fingerprint.clone(),
        })
        .collect();

    let shortfall = (augmented.len() < n).then(|| Shortfall {
        origin_id: instance.id.clone(),
        requested: job.n,
        produced: augmented.len() as u32,
        reason: if last_error.is_empty() {
            "generations were blank, unchanged, or duplicated".to_string()
        } else {
            last_error
        },
    });
    Ok((augmented, shortfall))
}

/// Read augmented instances back from a JSONL file.
pub fn load_augmented(path: &std::path::Path) -> Result<Vec<AugmentedInstance>, std::io::Error> {
    let content = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let instance: AugmentedInstance = serde_json::from_str(line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("line {}: {e}", i + 1),
            )
        })?;
        out.push(instance);
    }
    Ok(out)
}

/// Write augmented instances as JSONL.
pub fn write_augmented(
    path: &std::path::Path,
    augmented: &[AugmentedInstance],
) -> Result<(), std::io::Error> {
    use std::io::Write;
    let mut file = std::fs::File::create(path)?;
    for instance in augmented {
        writeln!(file, "{}", serde_json::to_string(instance).expect("serializes"))?;
    }
    Ok(())
}
