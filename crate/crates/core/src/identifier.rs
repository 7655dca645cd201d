//! Binary SATD identifier: stacked bidirectional LSTM over pretrained
//! static word embeddings.
//!
//! The recurrent stack is 128/64/128/128 units with 0.3 dropout after the
//! first three layers and batch normalization after the first, a pooled
//! final state, and a single sigmoid output trained with binary
//! cross-entropy (Adam, 1e-3). Training stops early on validation loss and
//! the best-epoch weights are restored. Texts are expected to be
//! preprocessed; the vocabulary and embedding matrix derive from the
//! training split only.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{s, Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BinaryInstance, BinaryLabel, SplitBundle};
use crate::embeddings::WordTable;
use crate::nn::{
    bce_with_logits, sigmoid, Adam, BatchNorm, BiLstm, Dense, Dropout, Embedding, LastPool, Param,
};

#[derive(Debug, Error)]
pub enum IdentifierError {
    #[error("training corpus has no usable tokens")]
    EmptyCorpus,
    #[error("the {split} split lacks the {label} class")]
    EmptyClass { split: String, label: String },
    #[error("validation loss became non-finite at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("invalid identifier configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;

/// Token-to-index map. Index 0 is padding, index 1 the unknown token;
/// the rest are training-split tokens ordered by descending frequency,
/// ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_INDEX)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Count tokens in the training texts and keep those at or above the
/// frequency threshold.
pub fn build_vocabulary(
    train_texts: &[&str],
    min_frequency: usize,
) -> Result<Vocabulary, IdentifierError> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for text in train_texts {
        for token in text.split_whitespace() {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(IdentifierError::EmptyCorpus);
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_frequency.max(1))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut tokens = vec!["[PAD]".to_string(), "[UNK]".to_string()];
    tokens.extend(kept.into_iter().map(|(t, _)| t.to_string()));
    Ok(Vocabulary::from_tokens(tokens))
}

/// Encode texts as fixed-length index sequences: right-padded with the
/// padding index, truncated beyond `max_len`, unknown tokens mapped to
/// the unknown index.
pub fn encode(texts: &[&str], vocabulary: &Vocabulary, max_len: usize) -> Array2<usize> {
    assert!(max_len >= 1, "max_len must be at least 1");
    let mut ids = Array2::from_elem((texts.len(), max_len), PAD_INDEX);
    for (row, text) in texts.iter().enumerate() {
        for (col, token) in text.split_whitespace().take(max_len).enumerate() {
            ids[[row, col]] = vocabulary.lookup(token);
        }
    }
    ids
}

/// Vocabulary-aligned embedding matrix: the padding row is zero, rows for
/// in-table tokens are copied from the pretrained table, everything else
/// (including the unknown row) is seeded uniform(-0.05, 0.05).
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    pub matrix: Array2<f64>,
    pub dim: usize,
    pub source: String,
}

pub fn build_embedding_matrix(
    vocabulary: &Vocabulary,
    dim: usize,
    table: Option<&WordTable>,
    seed: u64,
) -> EmbeddingMatrix {
    let dim = table.map(|t| t.dim).unwrap_or(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrix = Array2::zeros((vocabulary.len(), dim));
    for (row, token) in vocabulary.tokens().iter().enumerate() {
        if row == PAD_INDEX {
            continue;
        }
        match table.and_then(|t| t.get(token)) {
            Some(vector) => {
                for (c, v) in vector.iter().enumerate() {
                    matrix[[row, c]] = *v;
                }
            }
            None => {
                for c in 0..dim {
                    matrix[[row, c]] = rng.gen_range(-0.05..0.05);
                }
            }
        }
    }
    EmbeddingMatrix {
        matrix,
        dim,
        source: table
            .map(|t| t.source.clone())
            .unwrap_or_else(|| format!("seeded-random(dim={dim}, seed={seed})")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifierConfig {
    /// Hidden units of the four bidirectional recurrent layers.
    pub widths: [usize; 4],
    pub dropout: f64,
    pub max_len: usize,
    pub embedding_dim: usize,
    pub min_frequency: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub train_embeddings: bool,
    pub seed: u64,
}

impl Default for IdentifierConfig {
    fn default() -> Self {
        IdentifierConfig {
            widths: [128, 64, 128, 128],
            dropout: 0.3,
            max_len: 64,
            embedding_dim: 100,
            min_frequency: 1,
            batch_size: 32,
            max_epochs: 20,
            patience: 5,
            learning_rate: 1e-3,
            train_embeddings: false,
            seed: 0,
        }
    }
}

impl IdentifierConfig {
    pub fn validate(&self) -> Result<(), IdentifierError> {
        if self.max_epochs == 0 {
            return Err(IdentifierError::InvalidConfig(
                "max_epochs must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(IdentifierError::InvalidConfig(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.widths.contains(&0) || self.max_len == 0 || self.batch_size == 0 {
            return Err(IdentifierError::InvalidConfig(
                "widths, max_len, and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct IdentifierNet {
    embedding: Embedding,
    layer1: BiLstm,
    drop1: Dropout,
    norm1: BatchNorm,
    layer2: BiLstm,
    drop2: Dropout,
    layer3: BiLstm,
    drop3: Dropout,
    layer4: BiLstm,
    pool: LastPool,
    head: Dense,
}

impl IdentifierNet {
    fn new(embedding: &EmbeddingMatrix, config: &IdentifierConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let [w1, w2, w3, w4] = config.widths;
        let layer1 = BiLstm::new(embedding.dim, w1, &mut rng);
        let layer2 = BiLstm::new(2 * w1, w2, &mut rng);
        let layer3 = BiLstm::new(2 * w2, w3, &mut rng);
        let layer4 = BiLstm::new(2 * w3, w4, &mut rng);
        let head = Dense::new(2 * w4, 1, &mut rng);
        let drop_seed = config.seed.wrapping_add(0x5eed);
        IdentifierNet {
            embedding: Embedding::new(
                embedding.matrix.clone(),
                config.train_embeddings,
                vec![PAD_INDEX],
            ),
            layer1,
            drop1: Dropout::new(config.dropout, drop_seed),
            norm1: BatchNorm::new(2 * w1),
            layer2,
            drop2: Dropout::new(config.dropout, drop_seed.wrapping_add(1)),
            layer3,
            drop3: Dropout::new(config.dropout, drop_seed.wrapping_add(2)),
            layer4,
            pool: LastPool::new(w4),
            head,
        }
    }

    fn forward(&mut self, ids: &Array2<usize>, train: bool) -> Array1<f64> {
        let (b, t) = ids.dim();
        let x = self.embedding.forward(ids, train);
        let x = self.layer1.forward(&x, train);
        let x2 = crate::nn::flatten_bt(&x);
        let x2 = self.drop1.forward(&x2, train);
        let x2 = self.norm1.forward(&x2, train);
        let x = crate::nn::unflatten_bt(x2, b, t);
        let x = self.layer2.forward(&x, train);
        let x2 = self.drop2.forward(&crate::nn::flatten_bt(&x), train);
        let x = crate::nn::unflatten_bt(x2, b, t);
        let x = self.layer3.forward(&x, train);
        let x2 = self.drop3.forward(&crate::nn::flatten_bt(&x), train);
        let x = crate::nn::unflatten_bt(x2, b, t);
        let x = self.layer4.forward(&x, train);
        let pooled = self.pool.forward(&x, train);
        let logits = self.head.forward(&pooled, train);
        logits.column(0).to_owned()
    }

    fn backward(&mut self, dlogits: &Array1<f64>, batch: usize, time: usize) {
        let g = dlogits.clone().insert_axis(ndarray::Axis(1));
        let g = self.head.backward(&g);
        let g = self.pool.backward(&g);
        let g = self.layer4.backward(&g);
        let g2 = self.drop3.backward(&crate::nn::flatten_bt(&g));
        let g = self.layer3.backward(&crate::nn::unflatten_bt(g2, batch, time));
        let g2 = self.drop2.backward(&crate::nn::flatten_bt(&g));
        let g = self.layer2.backward(&crate::nn::unflatten_bt(g2, batch, time));
        let g2 = self.norm1.backward(&crate::nn::flatten_bt(&g));
        let g2 = self.drop1.backward(&g2);
        let g = self.layer1.backward(&crate::nn::unflatten_bt(g2, batch, time));
        self.embedding.backward(&g);
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut params = self.embedding.params_mut();
        params.extend(self.layer1.params_mut());
        params.extend(self.norm1.params_mut());
        params.extend(self.layer2.params_mut());
        params.extend(self.layer3.params_mut());
        params.extend(self.layer4.params_mut());
        params.extend(self.head.params_mut());
        params
    }

    /// Named tensors for checkpointing: every parameter plus the batch
    /// norm running statistics.
    fn tensors(&self) -> Vec<(String, Array2<f64>)> {
        let bilstm = |name: &str, layer: &BiLstm| {
            vec![
                (format!("{name}.fwd.wx"), layer.fwd.wx.value.clone()),
                (format!("{name}.fwd.wh"), layer.fwd.wh.value.clone()),
                (format!("{name}.fwd.b"), layer.fwd.b.value.clone()),
                (format!("{name}.bwd.wx"), layer.bwd.wx.value.clone()),
                (format!("{name}.bwd.wh"), layer.bwd.wh.value.clone()),
                (format!("{name}.bwd.b"), layer.bwd.b.value.clone()),
            ]
        };
        let mut tensors = vec![(
            "embedding.table".to_string(),
            self.embedding.table.value.clone(),
        )];
        tensors.extend(bilstm("layer1", &self.layer1));
        tensors.push(("norm1.gamma".into(), self.norm1.gamma.value.clone()));
        tensors.push(("norm1.beta".into(), self.norm1.beta.value.clone()));
        tensors.push(("norm1.running_mean".into(), self.norm1.running_mean.clone()));
        tensors.push(("norm1.running_var".into(), self.norm1.running_var.clone()));
        tensors.extend(bilstm("layer2", &self.layer2));
        tensors.extend(bilstm("layer3", &self.layer3));
        tensors.extend(bilstm("layer4", &self.layer4));
        tensors.push(("head.w".into(), self.head.w.value.clone()));
        tensors.push(("head.b".into(), self.head.b.value.clone()));
        tensors
    }

    fn load_tensors(&mut self, mut source: HashMap<String, Array2<f64>>) -> Result<(), String> {
        let mut take = |name: &str| source.remove(name).ok_or_else(|| format!("missing {name}"));
        let fill_bilstm = |name: &str, layer: &mut BiLstm, take: &mut dyn FnMut(&str) -> Result<Array2<f64>, String>| {
            layer.fwd.wx.value = take(&format!("{name}.fwd.wx"))?;
            layer.fwd.wh.value = take(&format!("{name}.fwd.wh"))?;
            layer.fwd.b.value = take(&format!("{name}.fwd.b"))?;
            layer.bwd.wx.value = take(&format!("{name}.bwd.wx"))?;
            layer.bwd.wh.value = take(&format!("{name}.bwd.wh"))?;
            layer.bwd.b.value = take(&format!("{name}.bwd.b"))?;
            Ok::<(), String>(())
        };
        self.embedding.table.value = take("embedding.table")?;
        fill_bilstm("layer1", &mut self.layer1, &mut take)?;
        self.norm1.gamma.value = take("norm1.gamma")?;
        self.norm1.beta.value = take("norm1.beta")?;
        self.norm1.running_mean = take("norm1.running_mean")?;
        self.norm1.running_var = take("norm1.running_var")?;
        fill_bilstm("layer2", &mut self.layer2, &mut take)?;
        fill_bilstm("layer3", &mut self.layer3, &mut take)?;
        fill_bilstm("layer4", &mut self.layer4, &mut take)?;
        self.head.w.value = take("head.w")?;
        self.head.b.value = take("head.b")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug)]
pub struct TrainedIdentifier {
    net: IdentifierNet,
    pub config: IdentifierConfig,
    pub vocabulary: Vocabulary,
    pub embedding_source: String,
    pub history: Vec<EpochStats>,
    /// 1-based epoch whose weights are loaded (minimum validation loss).
    pub stopped_epoch: usize,
}

/// SATD at or above the fixed 0.5 threshold; the boundary is inclusive.
pub fn decide(score: f64) -> BinaryLabel {
    if score >= 0.5 {
        BinaryLabel::Satd
    } else {
        BinaryLabel::NotSatd
    }
}

fn check_classes(
    part: &[BinaryInstance],
    split: &str,
) -> Result<(), IdentifierError> {
    for label in BinaryLabel::ALL {
        if !part.iter().any(|i| i.label == label) {
            return Err(IdentifierError::EmptyClass {
                split: split.to_string(),
                label: label.name().to_string(),
            });
        }
    }
    Ok(())
}

fn targets_of(part: &[BinaryInstance]) -> Array1<f64> {
    Array1::from_iter(
        part.iter()
            .map(|i| if i.label == BinaryLabel::Satd { 1.0 } else { 0.0 }),
    )
}

/// Best epoch so far: (epoch, validation loss, tensor snapshot).
type BestSnapshot = (usize, f64, Vec<(String, Array2<f64>)>);

fn batch_ranges(total: usize, batch: usize) -> Vec<(usize, usize)> {
    (0..total)
        .step_by(batch)
        .map(|start| (start, (start + batch).min(total)))
        .collect()
}

/// Mean loss of the whole set in eval mode.
fn evaluate_loss(
    net: &mut IdentifierNet,
    ids: &Array2<usize>,
    targets: &Array1<f64>,
    batch: usize,
) -> f64 {
    let mut total = 0.0;
    for (start, end) in batch_ranges(ids.nrows(), batch) {
        let slice = ids.slice(s![start..end, ..]).to_owned();
        let logits = net.forward(&slice, false);
        let t = targets.slice(s![start..end]).to_owned();
        let (loss, _) = bce_with_logits(&logits, &t);
        total += loss * (end - start) as f64;
    }
    total / ids.nrows() as f64
}

pub fn train_identifier(
    splits: &SplitBundle<BinaryLabel>,
    table: Option<&WordTable>,
    config: &IdentifierConfig,
) -> Result<TrainedIdentifier, IdentifierError> {
    config.validate()?;
    check_classes(&splits.train, "train")?;
    check_classes(&splits.validation, "validation")?;

    let train_texts: Vec<&str> = splits.train.iter().map(|i| i.text.as_str()).collect();
    let vocabulary = build_vocabulary(&train_texts, config.min_frequency)?;
    let embedding = build_embedding_matrix(
        &vocabulary,
        config.embedding_dim,
        table,
        config.seed.wrapping_add(0xe3b),
    );

    let train_ids = encode(&train_texts, &vocabulary, config.max_len);
    let val_texts: Vec<&str> = splits.validation.iter().map(|i| i.text.as_str()).collect();
    let val_ids = encode(&val_texts, &vocabulary, config.max_len);
    let train_targets = targets_of(&splits.train);
    let val_targets = targets_of(&splits.validation);

    let mut net = IdentifierNet::new(&embedding, config);
    let mut optimizer = Adam::new(config.learning_rate, 1e-8);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5f));

    let mut history = Vec::new();
    let mut best: Option<BestSnapshot> = None;
    let mut since_best = 0usize;

    for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..splits.train.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut train_loss = 0.0;
        for (start, end) in batch_ranges(order.len(), config.batch_size) {
            let rows = &order[start..end];
            let mut ids = Array2::from_elem((rows.len(), config.max_len), PAD_INDEX);
            let mut targets = Array1::zeros(rows.len());
            for (r, &src) in rows.iter().enumerate() {
                ids.row_mut(r).assign(&train_ids.row(src));
                targets[r] = train_targets[src];
            }
            let logits = net.forward(&ids, true);
            let (loss, grad) = bce_with_logits(&logits, &targets);
            train_loss += loss * rows.len() as f64;
            for p in net.params_mut() {
                p.zero_grad();
            }
            net.backward(&grad, rows.len(), config.max_len);
            let mut params = net.params_mut();
            optimizer.step(&mut params);
        }
        train_loss /= splits.train.len() as f64;

        let val_loss = evaluate_loss(&mut net, &val_ids, &val_targets, config.batch_size);
        if !val_loss.is_finite() || !train_loss.is_finite() {
            return Err(IdentifierError::Divergence { epoch });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });

        let improved = best.as_ref().is_none_or(|(_, loss, _)| val_loss < *loss);
        if improved {
            best = Some((epoch, val_loss, net.tensors()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    let (stopped_epoch, _, snapshot) = best.expect("at least one epoch ran");
    net.load_tensors(snapshot.into_iter().collect())
        .map_err(IdentifierError::Checkpoint)?;

    Ok(TrainedIdentifier {
        net,
        config: config.clone(),
        vocabulary,
        embedding_source: embedding.source,
        history,
        stopped_epoch,
    })
}

impl TrainedIdentifier {
    /// Score preprocessed texts. Batch order is preserved; the decision is
    /// SATD exactly when the score is at least 0.5.
    pub fn predict(&mut self, texts: &[&str]) -> Vec<(BinaryLabel, f64)> {
        let ids = encode(texts, &self.vocabulary, self.config.max_len);
        let mut out = Vec::with_capacity(texts.len());
        for (start, end) in batch_ranges(texts.len(), self.config.batch_size) {
            let slice = ids.slice(s![start..end, ..]).to_owned();
            let logits = self.net.forward(&slice, false);
            for z in logits {
                let score = sigmoid(z);
                out.push((decide(score), score));
            }
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<(), IdentifierError> {
        std::fs::create_dir_all(dir)?;
        let tensors = self.net.tensors();
        write_tensors(&dir.join("weights.bin"), &tensors)?;
        let sidecar = serde_json::json!({
            "schema_version": 1,
            "kind": "identifier",
            "config": self.config,
            "vocabulary": self.vocabulary.tokens(),
            "embedding_source": self.embedding_source,
            "history": self.history,
            "stopped_epoch": self.stopped_epoch,
            "tensors": tensors
                .iter()
                .map(|(name, t)| serde_json::json!({
                    "name": name, "rows": t.nrows(), "cols": t.ncols()
                }))
                .collect::<Vec<_>>(),
        });
        std::fs::write(
            dir.join("model.json"),
            serde_json::to_string_pretty(&sidecar).expect("sidecar serializes") + "\n",
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<TrainedIdentifier, IdentifierError> {
        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("model.json"))?)
                .map_err(|e| IdentifierError::Checkpoint(e.to_string()))?;
        if sidecar["kind"] != "identifier" {
            return Err(IdentifierError::Checkpoint(format!(
                "expected an identifier checkpoint, found kind {}",
                sidecar["kind"]
            )));
        }
        let config: IdentifierConfig = serde_json::from_value(sidecar["config"].clone())
            .map_err(|e| IdentifierError::Checkpoint(e.to_string()))?;
        let tokens: Vec<String> = serde_json::from_value(sidecar["vocabulary"].clone())
            .map_err(|e| IdentifierError::Checkpoint(e.to_string()))?;
        let history: Vec<EpochStats> = serde_json::from_value(sidecar["history"].clone())
            .map_err(|e| IdentifierError::Checkpoint(e.to_string()))?;
        let stopped_epoch = sidecar["stopped_epoch"].as_u64().unwrap_or(0) as usize;
        let embedding_source = sidecar["embedding_source"]
            .as_str()
            .unwrap_or_default()
            .to_string();

        let vocabulary = Vocabulary::from_tokens(tokens);
        let shapes = read_shapes(&sidecar)?;
        let tensors = read_tensors(&dir.join("weights.bin"), &shapes)?;

        // Dimensions come from the stored embedding table.
        let embedding_table = tensors
            .get("embedding.table")
            .ok_or_else(|| IdentifierError::Checkpoint("missing embedding.table".into()))?;
        let embedding = EmbeddingMatrix {
            matrix: embedding_table.clone(),
            dim: embedding_table.ncols(),
            source: embedding_source.clone(),
        };
        let mut net = IdentifierNet::new(&embedding, &config);
        net.load_tensors(tensors).map_err(IdentifierError::Checkpoint)?;
        Ok(TrainedIdentifier {
            net,
            config,
            vocabulary,
            embedding_source,
            history,
            stopped_epoch,
        })
    }
}

pub(crate) fn write_tensors(
    path: &Path,
    tensors: &[(String, Array2<f64>)],
) -> Result<(), IdentifierError> {
    use std::io::Write;
    let mut file = std::fs::File::create(path)?;
    for (_, tensor) in tensors {
        for v in tensor.iter() {
            file.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub(crate) fn read_shapes(
    sidecar: &serde_json::Value,
) -> Result<Vec<(String, usize, usize)>, IdentifierError> {
    sidecar["tensors"]
        .as_array()
        .ok_or_else(|| IdentifierError::Checkpoint("missing tensor manifest".into()))?
        .iter()
        .map(|t| {
            Ok((
                t["name"]
                    .as_str()
                    .ok_or_else(|| IdentifierError::Checkpoint("tensor missing name".into()))?
                    .to_string(),
                t["rows"].as_u64().unwrap_or(0) as usize,
                t["cols"].as_u64().unwrap_or(0) as usize,
            ))
        })
        .collect()
}

pub(crate) fn read_tensors(
    path: &Path,
    shapes: &[(String, usize, usize)],
) -> Result<HashMap<String, Array2<f64>>, IdentifierError> {
    let bytes = std::fs::read(path)?;
    let expected: usize = shapes.iter().map(|(_, r, c)| r * c * 8).sum();
    if bytes.len() != expected {
        return Err(IdentifierError::Checkpoint(format!(
            "weights blob is {} bytes, manifest expects {expected}",
            bytes.len()
        )));
    }
    let mut offset = 0;
    let mut out = HashMap::new();
    for (name, rows, cols) in shapes {
        let mut tensor = Array2::zeros((*rows, *cols));
        for v in tensor.iter_mut() {
            let mut buf = [0u8; 8];
            buf.copy_from_slice(&bytes[offset..offset + 8]);
            *v = f64::from_le_bytes(buf);
            offset += 8;
        }
        out.insert(name.clone(), tensor);
    }
    Ok(out)
}
