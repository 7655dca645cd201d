//! Four-way SATD-type categorizer: a bidirectional transformer encoder
//! with a two-layer ReLU classification head over the leading-token
//! state, trained with cross-entropy and AdamW (5e-5, eps 1e-8, batch 32).
//!
//! At inference time the categorizer only sees instances the identifier
//! judged to be SATD; [`two_step_classify`] wires the two models together.
//! Model selection is by validation macro-F1, the reported metric.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{BinaryLabel, Instance, LabeledInstance, SatdLabel, SplitBundle};
use crate::identifier::{read_shapes, read_tensors, write_tensors, TrainedIdentifier};
use crate::nn::{
    softmax_cross_entropy, softmax_rows, Adam, Dense, Param, Relu, TransformerEncoder,
};

#[derive(Debug, Error)]
pub enum CategorizerError {
    #[error("the training split lacks the {label} debt type")]
    EmptyClass { label: String },
    #[error("loss became non-finite at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("invalid categorizer configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("failed to fetch encoder weights: {0}")]
    Fetch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;
const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

/// Output label order, fixed and serialized with the model.
pub const LABEL_ORDER: [SatdLabel; 4] = SatdLabel::DEBT_TYPES;

/// Greedy longest-match subword tokenizer over a piece vocabulary with
/// `##` continuations. Without a pretrained vocabulary file it falls back
/// to a word-level vocabulary built from the training corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordPieceTokenizer {
    pieces: Vec<String>,
    index: HashMap<String, usize>,
}

impl WordPieceTokenizer {
    fn from_pieces(pieces: Vec<String>) -> Self {
        let index = pieces
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        WordPieceTokenizer { pieces, index }
    }

    /// One piece per line, standard vocabulary-file format. Special tokens
    /// are prepended when the file does not carry them.
    pub fn from_vocab_file(path: &Path) -> std::io::Result<Self> {
        let content = std::fs::read_to_string(path)?;
        Ok(Self::from_vocab_lines(content.lines()))
    }

    pub fn from_vocab_lines<'a>(lines: impl Iterator<Item = &'a str>) -> Self {
        let mut pieces: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        for line in lines {
            let token = line.trim();
            if token.is_empty() || SPECIALS.contains(&token) {
                continue;
            }
            pieces.push(token.to_string());
        }
        Self::from_pieces(pieces)
    }

    /// Word-level fallback vocabulary from the training corpus, ordered by
    /// descending frequency then lexicographically.
    pub fn from_corpus(texts: &[&str]) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for text in texts {
            for word in text.split_whitespace() {
                *counts.entry(word).or_insert(0) += 1;
            }
        }
        let mut words: Vec<(&str, usize)> = counts.into_iter().collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut pieces: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        pieces.extend(words.into_iter().map(|(w, _)| w.to_string()));
        Self::from_pieces(pieces)
    }

    pub fn vocab_size(&self) -> usize {
        self.pieces.len()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    fn tokenize_word(&self, word: &str) -> Vec<usize> {
        let chars: Vec<char> = word.chars().collect();
        let mut out = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut matched = None;
            while end > start {
                let piece: String = chars[start..end].iter().collect();
                let candidate = if start == 0 { piece } else { format!("##{piece}") };
                if let Some(&id) = self.index.get(&candidate) {
                    matched = Some((id, end));
                    break;
                }
                end -= 1;
            }
            match matched {
                Some((id, next)) => {
                    out.push(id);
                    start = next;
                }
                None => return vec![UNK_ID],
            }
        }
        out
    }

    /// Encode to `[CLS] pieces [SEP]`, truncated and right-padded to
    /// `max_len`. Returns ids and the attention mask.
    pub fn encode(&self, texts: &[&str], max_len: usize) -> (Array2<usize>, Array2<f64>) {
        assert!(max_len >= 2, "max_len must fit [CLS] and [SEP]");
        let mut ids = Array2::from_elem((texts.len(), max_len), PAD_ID);
        let mut mask = Array2::zeros((texts.len(), max_len));
        for (row, text) in texts.iter().enumerate() {
            let mut sequence = vec![CLS_ID];
            'words: for word in text.split_whitespace() {
                for id in self.tokenize_word(word) {
                    if sequence.len() == max_len - 1 {
                        break 'words;
                    }
                    sequence.push(id);
                }
            }
            sequence.push(SEP_ID);
            for (col, id) in sequence.iter().enumerate() {
                ids[[row, col]] = *id;
                mask[[row, col]] = 1.0;
            }
        }
        (ids, mask)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CategorizerConfig {
    /// Encoder identifier recorded in manifests; the uncased base layout.
    pub encoder: String,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_size: usize,
    /// Width of the hidden classification layer.
    pub head_hidden: usize,
    /// Output dimension; exactly the four debt types.
    pub num_labels: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    /// Optional pretrained subword vocabulary file.
    pub vocab_path: Option<PathBuf>,
    /// Optional pretrained encoder weights: local path or http(s) URL.
    pub pretrained_encoder: Option<String>,
    pub seed: u64,
}

impl Default for CategorizerConfig {
    fn default() -> Self {
        CategorizerConfig {
            encoder: "uncased-base".to_string(),
            hidden_size: 768,
            num_layers: 12,
            num_heads: 12,
            ffn_size: 3072,
            head_hidden: 256,
            num_labels: 4,
            dropout: 0.1,
            max_len: 128,
            batch_size: 32,
            max_epochs: 4,
            learning_rate: 5e-5,
            epsilon: 1e-8,
            weight_decay: 0.01,
            vocab_path: None,
            pretrained_encoder: None,
            seed: 0,
        }
    }
}

impl CategorizerConfig {
    pub fn validate(&self) -> Result<(), CategorizerError> {
        if self.num_labels != LABEL_ORDER.len() {
            return Err(CategorizerError::InvalidConfig(format!(
                "output dimension must be exactly {}, got {}",
                LABEL_ORDER.len(),
                self.num_labels
            )));
        }
        if self.max_epochs == 0 || self.batch_size == 0 || self.max_len < 2 {
            return Err(CategorizerError::InvalidConfig(
                "max_epochs, batch_size, and max_len must be positive".into(),
            ));
        }
        if !self.hidden_size.is_multiple_of(self.num_heads) {
            return Err(CategorizerError::InvalidConfig(format!(
                "hidden size {} must divide across {} heads",
                self.hidden_size, self.num_heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct CategorizerNet {
    encoder: TransformerEncoder,
    hidden: Dense,
    activation: Relu,
    output: Dense,
    cache: Option<(usize, usize)>,
}

impl CategorizerNet {
    fn new(vocab: usize, config: &CategorizerConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = TransformerEncoder::new(
            vocab,
            config.hidden_size,
            config.num_heads,
            config.ffn_size,
            config.num_layers,
            config.max_len,
            config.dropout,
            &mut rng,
            config.seed.wrapping_add(0xd0),
        );
        let hidden = Dense::new(config.hidden_size, config.head_hidden, &mut rng);
        let output = Dense::new(config.head_hidden, config.num_labels, &mut rng);
        CategorizerNet {
            encoder,
            hidden,
            activation: Relu::new(),
            output,
            cache: None,
        }
    }

    fn forward(&mut self, ids: &Array2<usize>, mask: &Array2<f64>, train: bool) -> Array2<f64> {
        let (b, t) = ids.dim();
        let states = self.encoder.forward(ids, mask, train);
        let lead = states.slice(s![.., 0, ..]).to_owned(); // [CLS] state
        let h = self.hidden.forward(&lead, train);
        let h = self.activation.forward(&h, train);
        if train {
            self.cache = Some((b, t));
        }
        self.output.forward(&h, train)
    }

    fn backward(&mut self, dlogits: &Array2<f64>) {
        let (b, t) = self.cache.expect("forward(train) before backward");
        let g = self.output.backward(dlogits);
        let g = self.activation.backward(&g);
        let g = self.hidden.backward(&g); // [B, d]
        let mut g_states = Array3::zeros((b, t, g.ncols()));
        g_states.slice_mut(s![.., 0, ..]).assign(&g);
        self.encoder.backward(&g_states);
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut params = self.encoder.params_mut();
        params.extend(self.hidden.params_mut());
        params.extend(self.output.params_mut());
        params
    }

    fn tensors(&self) -> Vec<(String, Array2<f64>)> {
        let mut tensors = encoder_tensors(&self.encoder);
        tensors.push(("head.hidden.w".into(), self.hidden.w.value.clone()));
        tensors.push(("head.hidden.b".into(), self.hidden.b.value.clone()));
        tensors.push(("head.output.w".into(), self.output.w.value.clone()));
        tensors.push(("head.output.b".into(), self.output.b.value.clone()));
        tensors
    }

    fn load_tensors(
        &mut self,
        mut source: HashMap<String, Array2<f64>>,
    ) -> Result<(), String> {
        load_encoder_tensors(&mut self.encoder, &mut source)?;
        let mut take = |name: &str| source.remove(name).ok_or_else(|| format!("missing {name}"));
        self.hidden.w.value = take("head.hidden.w")?;
        self.hidden.b.value = take("head.hidden.b")?;
        self.output.w.value = take("head.output.w")?;
        self.output.b.value = take("head.output.b")?;
        Ok(())
    }
}

fn encoder_tensors(encoder: &TransformerEncoder) -> Vec<(String, Array2<f64>)> {
    let mut tensors = vec![
        (
            "encoder.token_embedding".to_string(),
            encoder.token_embedding.table.value.clone(),
        ),
        (
            "encoder.position_embedding".to_string(),
            encoder.position_embedding.value.clone(),
        ),
        (
            "encoder.embed_norm.gamma".to_string(),
            encoder.embed_norm.gamma.value.clone(),
        ),
        (
            "encoder.embed_norm.beta".to_string(),
            encoder.embed_norm.beta.value.clone(),
        ),
    ];
    for (i, layer) in encoder.layers.iter().enumerate() {
        let p = format!("encoder.layer{i}");
        let attn = &layer.attention;
        tensors.push((format!("{p}.attn.wq"), attn.wq.value.clone()));
        tensors.push((format!("{p}.attn.bq"), attn.bq.value.clone()));
        tensors.push((format!("{p}.attn.wk"), attn.wk.value.clone()));
        tensors.push((format!("{p}.attn.bk"), attn.bk.value.clone()));
        tensors.push((format!("{p}.attn.wv"), attn.wv.value.clone()));
        tensors.push((format!("{p}.attn.bv"), attn.bv.value.clone()));
        tensors.push((format!("{p}.attn.wo"), attn.wo.value.clone()));
        tensors.push((format!("{p}.attn.bo"), attn.bo.value.clone()));
        tensors.push((format!("{p}.attn_norm.gamma"), layer.attn_norm.gamma.value.clone()));
        tensors.push((format!("{p}.attn_norm.beta"), layer.attn_norm.beta.value.clone()));
        tensors.push((format!("{p}.ffn.expand.w"), layer.ffn.expand.w.value.clone()));
        tensors.push((format!("{p}.ffn.expand.b"), layer.ffn.expand.b.value.clone()));
        tensors.push((format!("{p}.ffn.contract.w"), layer.ffn.contract.w.value.clone()));
        tensors.push((format!("{p}.ffn.contract.b"), layer.ffn.contract.b.value.clone()));
        tensors.push((format!("{p}.ffn_norm.gamma"), layer.ffn_norm.gamma.value.clone()));
        tensors.push((format!("{p}.ffn_norm.beta"), layer.ffn_norm.beta.value.clone()));
    }
    tensors
}

fn load_encoder_tensors(
    encoder: &mut TransformerEncoder,
    source: &mut HashMap<String, Array2<f64>>,
) -> Result<(), String> {
    let mut take = |name: String| source.remove(&name).ok_or_else(|| format!("missing {name}"));
    encoder.token_embedding.table.value = take("encoder.token_embedding".into())?;
    encoder.position_embedding.value = take("encoder.position_embedding".into())?;
    encoder.embed_norm.gamma.value = take("encoder.embed_norm.gamma".into())?;
    encoder.embed_norm.beta.value = take("encoder.embed_norm.beta".into())?;
    for (i, layer) in encoder.layers.iter_mut().enumerate() {
        let p = format!("encoder.layer{i}");
        layer.attention.wq.value = take(format!("{p}.attn.wq"))?;
        layer.attention.bq.value = take(format!("{p}.attn.bq"))?;
        layer.attention.wk.value = take(format!("{p}.attn.wk"))?;
        layer.attention.bk.value = take(format!("{p}.attn.bk"))?;
        layer.attention.wv.value = take(format!("{p}.attn.wv"))?;
        layer.attention.bv.value = take(format!("{p}.attn.bv"))?;
        layer.attention.wo.value = take(format!("{p}.attn.wo"))?;
        layer.attention.bo.value = take(format!("{p}.attn.bo"))?;
        layer.attn_norm.gamma.value = take(format!("{p}.attn_norm.gamma"))?;
        layer.attn_norm.beta.value = take(format!("{p}.attn_norm.beta"))?;
        layer.ffn.expand.w.value = take(format!("{p}.ffn.expand.w"))?;
        layer.ffn.expand.b.value = take(format!("{p}.ffn.expand.b"))?;
        layer.ffn.contract.w.value = take(format!("{p}.ffn.contract.w"))?;
        layer.ffn.contract.b.value = take(format!("{p}.ffn.contract.b"))?;
        layer.ffn_norm.gamma.value = take(format!("{p}.ffn_norm.gamma"))?;
        layer.ffn_norm.beta.value = take(format!("{p}.ffn_norm.beta"))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorizerEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_macro_f1: f64,
}

#[derive(Debug)]
pub struct TrainedCategorizer {
    net: CategorizerNet,
    pub config: CategorizerConfig,
    pub tokenizer: WordPieceTokenizer,
    pub label_order: [SatdLabel; 4],
    pub history: Vec<CategorizerEpoch>,
    pub best_epoch: usize,
}

/// Resolve a pretrained-weights source: local paths pass through, http(s)
/// URLs are downloaded once into `cache_dir` keyed by the URL hash.
pub fn fetch_encoder_weights(source: &str, cache_dir: &Path) -> Result<PathBuf, CategorizerError> {
    if !(source.starts_with("http://") || source.starts_with("https://")) {
        return Ok(PathBuf::from(source));
    }
    std::fs::create_dir_all(cache_dir)?;
    let key = format!("{:x}", Sha256::digest(source.as_bytes()));
    let cached = cache_dir.join(format!("encoder-{key}.bin"));
    if cached.exists() {
        return Ok(cached);
    }
    let response = ureq::get(source)
        .call()
        .map_err(|e| CategorizerError::Fetch(e.to_string()))?;
    let mut bytes = Vec::new();
    response
        .into_reader()
        .read_to_end(&mut bytes)
        .map_err(|e| CategorizerError::Fetch(e.to_string()))?;
    let tmp = cached.with_extension("part");
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, &cached)?;
    Ok(cached)
}

/// Single-file container for encoder weights: a JSON shape manifest
/// followed by raw little-endian f64 data.
pub fn save_encoder_file(path: &Path, tensors: &[(String, Array2<f64>)]) -> std::io::Result<()> {
    use std::io::Write;
    let manifest = serde_json::json!({
        "tensors": tensors
            .iter()
            .map(|(name, t)| serde_json::json!({"name": name, "rows": t.nrows(), "cols": t.ncols()}))
            .collect::<Vec<_>>(),
    })
    .to_string();
    let mut file = std::fs::File::create(path)?;
    file.write_all(&(manifest.len() as u64).to_le_bytes())?;
    file.write_all(manifest.as_bytes())?;
    for (_, tensor) in tensors {
        for v in tensor.iter() {
            file.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_encoder_file(path: &Path) -> Result<HashMap<String, Array2<f64>>, CategorizerError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 8 {
        return Err(CategorizerError::Checkpoint("truncated encoder file".into()));
    }
    let mut len_buf = [0u8; 8];
    len_buf.copy_from_slice(&bytes[..8]);
    let manifest_len = u64::from_le_bytes(len_buf) as usize;
    let manifest: serde_json::Value = serde_json::from_slice(&bytes[8..8 + manifest_len])
        .map_err(|e| CategorizerError::Checkpoint(e.to_string()))?;
    let shapes = read_shapes(&manifest).map_err(|e| CategorizerError::Checkpoint(e.to_string()))?;
    let mut offset = 8 + manifest_len;
    let mut out = HashMap::new();
    for (name, rows, cols) in shapes {
        let mut tensor = Array2::zeros((rows, cols));
        for v in tensor.iter_mut() {
            let mut buf = [0u8; 8];
            buf.copy_from_slice(&bytes[offset..offset + 8]);
            *v = f64::from_le_bytes(buf);
            offset += 8;
        }
        out.insert(name, tensor);
    }
    Ok(out)
}

fn label_index(label: SatdLabel) -> Option<usize> {
    LABEL_ORDER.iter().position(|l| *l == label)
}

fn check_debt_classes(train: &[LabeledInstance]) -> Result<(), CategorizerError> {
    for label in LABEL_ORDER {
        if !train.iter().any(|i| i.label == label) {
            return Err(CategorizerError::EmptyClass {
                label: label.name().to_string(),
            });
        }
    }
    Ok(())
}

/// Best epoch so far: (epoch, selection metric, tensor snapshot).
type BestSnapshot = (usize, f64, Vec<(String, Array2<f64>)>);

fn batch_ranges(total: usize, batch: usize) -> Vec<(usize, usize)> {
    (0..total)
        .step_by(batch)
        .map(|start| (start, (start + batch).min(total)))
        .collect()
}

pub fn train_categorizer(
    splits: &SplitBundle<SatdLabel>,
    config: &CategorizerConfig,
) -> Result<TrainedCategorizer, CategorizerError> {
    config.validate()?;
    for part in [&splits.train, &splits.validation, &splits.test] {
        if let Some(bad) = part.iter().find(|i| !i.label.is_debt()) {
            return Err(CategorizerError::InvalidConfig(format!(
                "instance {} is not SATD-labeled; the categorizer trains on debt types only",
                bad.id
            )));
        }
    }
    check_debt_classes(&splits.train)?;

    let train_texts: Vec<&str> = splits.train.iter().map(|i| i.text.as_str()).collect();
    let tokenizer = match &config.vocab_path {
        Some(path) => WordPieceTokenizer::from_vocab_file(path)?,
        None => WordPieceTokenizer::from_corpus(&train_texts),
    };

    let (train_ids, train_mask) = tokenizer.encode(&train_texts, config.max_len);
    let val_texts: Vec<&str> = splits.validation.iter().map(|i| i.text.as_str()).collect();
    let (val_ids, val_mask) = tokenizer.encode(&val_texts, config.max_len);
    let train_targets: Vec<usize> = splits
        .train
        .iter()
        .map(|i| label_index(i.label).expect("debt label"))
        .collect();
    let val_gold: Vec<SatdLabel> = splits.validation.iter().map(|i| i.label).collect();

    let mut net = CategorizerNet::new(tokenizer.vocab_size(), config);
    if let Some(source) = &config.pretrained_encoder {
        let cache = std::env::temp_dir().join("satd-encoder-cache");
        let path = fetch_encoder_weights(source, &cache)?;
        let mut tensors = load_encoder_file(&path)?;
        load_encoder_tensors(&mut net.encoder, &mut tensors)
            .map_err(CategorizerError::Checkpoint)?;
    }
    let mut optimizer = Adam::adamw(config.learning_rate, config.epsilon, config.weight_decay);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x7e));

    let mut history = Vec::new();
    let mut best: Option<BestSnapshot> = None;

    for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..splits.train.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut train_loss = 0.0;
        for (start, end) in batch_ranges(order.len(), config.batch_size) {
            let rows = &order[start..end];
            let mut ids = Array2::from_elem((rows.len(), config.max_len), PAD_ID);
            let mut mask = Array2::zeros((rows.len(), config.max_len));
            let mut targets = Vec::with_capacity(rows.len());
            for (r, &src) in rows.iter().enumerate() {
                ids.row_mut(r).assign(&train_ids.row(src));
                mask.row_mut(r).assign(&train_mask.row(src));
                targets.push(train_targets[src]);
            }
            let logits = net.forward(&ids, &mask, true);
            let (loss, grad, _) = softmax_cross_entropy(&logits, &targets);
            train_loss += loss * rows.len() as f64;
            for p in net.params_mut() {
                p.zero_grad();
            }
            net.backward(&grad);
            let mut params = net.params_mut();
            optimizer.step(&mut params);
        }
        train_loss /= splits.train.len() as f64;
        if !train_loss.is_finite() {
            return Err(CategorizerError::Divergence { epoch });
        }

        let train_predictions =
            predict_ids(&mut net, &train_ids, &train_mask, config.batch_size);
        let train_accuracy = train_predictions
            .iter()
            .zip(&train_targets)
            .filter(|((label, _), &target)| label_index(*label) == Some(target))
            .count() as f64
            / splits.train.len() as f64;

        let val_macro_f1 = if splits.validation.is_empty() {
            train_accuracy
        } else {
            let predictions = predict_ids(&mut net, &val_ids, &val_mask, config.batch_size);
            let predicted: Vec<SatdLabel> = predictions.iter().map(|(l, _)| *l).collect();
            crate::metrics::f1_scores(&val_gold, &predicted, &LABEL_ORDER)
                .map_err(|e| CategorizerError::InvalidConfig(e.to_string()))?
                .macro_f1
        };

        history.push(CategorizerEpoch {
            epoch,
            train_loss,
            train_accuracy,
            val_macro_f1,
        });
        let improved = best.as_ref().is_none_or(|(_, f1, _)| val_macro_f1 > *f1);
        if improved {
            best = Some((epoch, val_macro_f1, net.tensors()));
        }
    }

    let (best_epoch, _, snapshot) = best.expect("at least one epoch ran");
    net.load_tensors(snapshot.into_iter().collect())
        .map_err(CategorizerError::Checkpoint)?;

    Ok(TrainedCategorizer {
        net,
        config: config.clone(),
        tokenizer,
        label_order: LABEL_ORDER,
        history,
        best_epoch,
    })
}

fn predict_ids(
    net: &mut CategorizerNet,
    ids: &Array2<usize>,
    mask: &Array2<f64>,
    batch: usize,
) -> Vec<(SatdLabel, [f64; 4])> {
    let mut out = Vec::with_capacity(ids.nrows());
    for (start, end) in batch_ranges(ids.nrows(), batch) {
        let logits = net.forward(
            &ids.slice(s![start..end, ..]).to_owned(),
            &mask.slice(s![start..end, ..]).to_owned(),
            false,
        );
        let probs = softmax_rows(&logits);
        for row in probs.rows() {
            let mut vector = [0.0; 4];
            for (v, p) in vector.iter_mut().zip(row) {
                *v = *p;
            }
            // Argmax with ties resolved by the fixed label order.
            let mut best = 0;
            for k in 1..4 {
                if vector[k] > vector[best] {
                    best = k;
                }
            }
            out.push((LABEL_ORDER[best], vector));
        }
    }
    out
}

impl TrainedCategorizer {
    /// Probability vector over the four debt types per text; the argmax
    /// decides, ties break toward the fixed label order.
    pub fn predict(&mut self, texts: &[&str]) -> Vec<(SatdLabel, [f64; 4])> {
        let (ids, mask) = self.tokenizer.encode(texts, self.config.max_len);
        predict_ids(&mut self.net, &ids, &mask, self.config.batch_size)
    }

    pub fn save(&self, dir: &Path) -> Result<(), CategorizerError> {
        std::fs::create_dir_all(dir)?;
        let tensors = self.net.tensors();
        write_tensors(&dir.join("weights.bin"), &tensors)
            .map_err(|e| CategorizerError::Checkpoint(e.to_string()))?;
        let sidecar = serde_json::json!({
            "schema_version": 1,
            "kind": "categorizer",
            "config": self.config,
            "pieces": self.tokenizer.pieces(),
            "label_order": self.label_order.iter().map(|l| l.name()).collect::<Vec<_>>(),
            "history": self.history,
            "best_epoch": self.best_epoch,
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

    pub fn load(dir: &Path) -> Result<TrainedCategorizer, CategorizerError> {
        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("model.json"))?)
                .map_err(|e| CategorizerError::Checkpoint(e.to_string()))?;
        if sidecar["kind"] != "categorizer" {
            return Err(CategorizerError::Checkpoint(format!(
                "expected a categorizer checkpoint, found kind {}",
                sidecar["kind"]
            )));
        }
        let config: CategorizerConfig = serde_json::from_value(sidecar["config"].clone())
            .map_err(|e| CategorizerError::Checkpoint(e.to_string()))?;
        let pieces: Vec<String> = serde_json::from_value(sidecar["pieces"].clone())
            .map_err(|e| CategorizerError::Checkpoint(e.to_string()))?;
        let stored_order: Vec<String> = serde_json::from_value(sidecar["label_order"].clone())
            .map_err(|e| CategorizerError::Checkpoint(e.to_string()))?;
        let expected: Vec<&str> = LABEL_ORDER.iter().map(|l| l.name()).collect();
        if stored_order != expected {
            return Err(CategorizerError::Checkpoint(format!(
                "label order {stored_order:?} does not match {expected:?}"
            )));
        }
        let history: Vec<CategorizerEpoch> = serde_json::from_value(sidecar["history"].clone())
            .map_err(|e| CategorizerError::Checkpoint(e.to_string()))?;
        let best_epoch = sidecar["best_epoch"].as_u64().unwrap_or(0) as usize;

        let tokenizer = WordPieceTokenizer::from_pieces(pieces);
        let shapes = read_shapes(&sidecar).map_err(|e| CategorizerError::Checkpoint(e.to_string()))?;
        let tensors = read_tensors(&dir.join("weights.bin"), &shapes)
            .map_err(|e| CategorizerError::Checkpoint(e.to_string()))?;
        let mut net = CategorizerNet::new(tokenizer.vocab_size(), &config);
        net.load_tensors(tensors).map_err(CategorizerError::Checkpoint)?;
        Ok(TrainedCategorizer {
            net,
            config,
            tokenizer,
            label_order: LABEL_ORDER,
            history,
            best_epoch,
        })
    }
}

/// Two-step classification: the identifier gates, the categorizer types.
/// An instance is NOT_SATD exactly when step one rejects it; otherwise it
/// receives step two's debt type.
pub fn two_step_classify(
    identifier: &mut TrainedIdentifier,
    categorizer: &mut TrainedCategorizer,
    texts: &[&str],
) -> Vec<SatdLabel> {
    let gates = identifier.predict(texts);
    let satd_indices: Vec<usize> = gates
        .iter()
        .enumerate()
        .filter(|(_, (label, _))| *label == BinaryLabel::Satd)
        .map(|(i, _)| i)
        .collect();
    let satd_texts: Vec<&str> = satd_indices.iter().map(|&i| texts[i]).collect();
    let typed = categorizer.predict(&satd_texts);

    let mut out = vec![SatdLabel::NotSatd; texts.len()];
    for (&i, (label, _)) in satd_indices.iter().zip(&typed) {
        out[i] = *label;
    }
    out
}

/// Convenience for pipelines that already hold instances.
pub fn two_step_classify_instances(
    identifier: &mut TrainedIdentifier,
    categorizer: &mut TrainedCategorizer,
    instances: &[Instance<SatdLabel>],
) -> Vec<SatdLabel> {
    let texts: Vec<&str> = instances.iter().map(|i| i.text.as_str()).collect();
    two_step_classify(identifier, categorizer, &texts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ArtifactSource;

    #[test]
    fn wordpiece_longest_match_with_continuations() {
        let tokenizer =
            WordPieceTokenizer::from_vocab_lines(["un", "##fix", "##able", "fix", "bug"].into_iter());
        assert_eq!(tokenizer.tokenize_word("unfixable"), vec![4, 5, 6]);
        assert_eq!(tokenizer.tokenize_word("fix"), vec![7]);
        assert_eq!(tokenizer.tokenize_word("mystery"), vec![UNK_ID]);
    }

    #[test]
    fn encode_wraps_with_specials_and_masks() {
        let tokenizer = WordPieceTokenizer::from_corpus(&["todo fix bug"]);
        let (ids, mask) = tokenizer.encode(&["todo fix"], 6);
        assert_eq!(ids[[0, 0]], CLS_ID);
        let sep_pos = (0..6).find(|&c| ids[[0, c]] == SEP_ID).unwrap();
        assert_eq!(sep_pos, 3);
        assert_eq!(mask[[0, 3]], 1.0);
        assert_eq!(mask[[0, 4]], 0.0);
        assert_eq!(ids[[0, 5]], PAD_ID);

        // Truncation keeps room for both specials.
        let (ids, _) = tokenizer.encode(&["todo fix bug todo fix bug"], 4);
        assert_eq!(ids[[0, 3]], SEP_ID);
    }

    #[test]
    fn wrong_output_dimension_is_rejected_at_construction() {
        let config = CategorizerConfig {
            num_labels: 5,
            ..toy_config()
        };
        assert!(matches!(
            config.validate(),
            Err(CategorizerError::InvalidConfig(_))
        ));
        let splits = keyword_separable_splits(2);
        assert!(train_categorizer(&splits, &config).is_err());
    }

    fn toy_config() -> CategorizerConfig {
        CategorizerConfig {
            hidden_size: 32,
            num_layers: 2,
            num_heads: 2,
            ffn_size: 64,
            head_hidden: 16,
            max_len: 12,
            batch_size: 8,
            max_epochs: 10,
            learning_rate: 2e-3,
            dropout: 0.0,
            seed: 5,
            ..CategorizerConfig::default()
        }
    }

    fn debt_instance(id: usize, label: SatdLabel, text: &str) -> LabeledInstance {
        Instance {
            id: format!("c{id}"),
            source: ArtifactSource::IssueSection,
            project: String::new(),
            text: text.to_string(),
            label,
        }
    }

    /// One distinctive keyword per debt type.
    fn keyword_separable_splits(per_class: usize) -> SplitBundle<SatdLabel> {
        let patterns = [
            (SatdLabel::CodeDesign, "refactor"),
            (SatdLabel::Documentation, "typo"),
            (SatdLabel::Test, "coverage"),
            (SatdLabel::Requirement, "implement"),
        ];
        let fillers = ["alpha", "beta", "gamma", "delta", "epsilon"];
        let mut train = Vec::new();
        let mut id = 0;
        for (label, marker) in patterns {
            for i in 0..per_class {
                let f = fillers[i % fillers.len()];
                train.push(debt_instance(
                    id,
                    label,
                    &format!("{marker} the {f} module {marker}"),
                ));
                id += 1;
            }
        }
        SplitBundle {
            validation: train.clone(),
            test: Vec::new(),
            train,
            seed: 0,
            ratios: [1.0, 0.0, 0.0],
        }
    }

    #[test]
    fn non_debt_labels_are_rejected() {
        let mut splits = keyword_separable_splits(2);
        splits.train.push(debt_instance(99, SatdLabel::NotSatd, "plain text"));
        assert!(matches!(
            train_categorizer(&splits, &toy_config()),
            Err(CategorizerError::InvalidConfig(_))
        ));
    }

    #[test]
    fn missing_debt_type_is_an_empty_class() {
        let mut splits = keyword_separable_splits(2);
        splits.train.retain(|i| i.label != SatdLabel::Requirement);
        splits.validation.retain(|i| i.label != SatdLabel::Requirement);
        match train_categorizer(&splits, &toy_config()) {
            Err(CategorizerError::EmptyClass { label }) => assert_eq!(label, "REQUIREMENT"),
            other => panic!("expected EmptyClass, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn tiny_overfit_hits_full_training_accuracy_within_ten_epochs() {
        let splits = keyword_separable_splits(10); // 40 instances
        let model = train_categorizer(&splits, &toy_config()).unwrap();
        let reached = model
            .history
            .iter()
            .find(|e| e.train_accuracy >= 1.0)
            .unwrap_or_else(|| panic!("never reached 100%: {:?}", model.history));
        assert!(reached.epoch <= 10);
    }

    #[test]
    fn training_is_reproducible_for_a_fixed_seed() {
        let splits = keyword_separable_splits(3);
        let config = CategorizerConfig {
            max_epochs: 2,
            ..toy_config()
        };
        let a = train_categorizer(&splits, &config).unwrap();
        let b = train_categorizer(&splits, &config).unwrap();
        assert_eq!(a.history[0].train_loss, b.history[0].train_loss);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn probability_vectors_are_distributions_and_batch_invariant() {
        let splits = keyword_separable_splits(3);
        let config = CategorizerConfig {
            max_epochs: 2,
            ..toy_config()
        };
        let mut model = train_categorizer(&splits, &config).unwrap();
        let texts = vec![
            "refactor the alpha module",
            "typo in beta docs",
            "refactor the alpha module",
        ];
        let batched = model.predict(&texts);
        for (_, vector) in &batched {
            let sum: f64 = vector.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6, "sums to {sum}");
            assert!(vector.iter().all(|p| *p >= 0.0));
        }
        assert_eq!(batched[0], batched[2]);
        let singles: Vec<(SatdLabel, [f64; 4])> = texts
            .iter()
            .flat_map(|t| model.predict(&[t]))
            .collect();
        for (a, b) in batched.iter().zip(&singles) {
            for (x, y) in a.1.iter().zip(&b.1) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn model_selection_tracks_best_validation_macro_f1() {
        let splits = keyword_separable_splits(4);
        let model = train_categorizer(&splits, &toy_config()).unwrap();
        let best = model
            .history
            .iter()
            .max_by(|a, b| a.val_macro_f1.partial_cmp(&b.val_macro_f1).unwrap())
            .unwrap();
        let chosen = &model.history[model.best_epoch - 1];
        assert_eq!(chosen.val_macro_f1, best.val_macro_f1);
    }

    #[test]
    fn checkpoint_roundtrip_preserves_predictions_and_label_order() {
        let splits = keyword_separable_splits(3);
        let config = CategorizerConfig {
            max_epochs: 2,
            ..toy_config()
        };
        let mut model = train_categorizer(&splits, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("categorizer");
        model.save(&ckpt).unwrap();
        let mut restored = TrainedCategorizer::load(&ckpt).unwrap();
        assert_eq!(restored.label_order, LABEL_ORDER);
        let texts = vec!["implement the gamma feature", "coverage for delta"];
        assert_eq!(model.predict(&texts), restored.predict(&texts));
    }

    #[test]
    fn pretrained_encoder_weights_are_loaded_from_file() {
        let splits = keyword_separable_splits(2);
        let config = CategorizerConfig {
            max_epochs: 1,
            ..toy_config()
        };
        let trained = train_categorizer(&splits, &config).unwrap();

        // Export only the encoder tensors, then train a fresh model seeded
        // from them.
        let dir = tempfile::tempdir().unwrap();
        let weights = dir.path().join("encoder.bin");
        let encoder_only: Vec<(String, Array2<f64>)> = trained
            .net
            .tensors()
            .into_iter()
            .filter(|(name, _)| name.starts_with("encoder."))
            .collect();
        save_encoder_file(&weights, &encoder_only).unwrap();

        let loaded = load_encoder_file(&weights).unwrap();
        assert_eq!(loaded.len(), encoder_only.len());
        for (name, tensor) in &encoder_only {
            assert_eq!(&loaded[name], tensor, "{name} changed in the roundtrip");
        }

        // Local paths pass through the fetcher untouched.
        let resolved =
            fetch_encoder_weights(weights.to_str().unwrap(), &dir.path().join("cache")).unwrap();
        assert_eq!(resolved, weights);
    }

    #[test]
    fn url_fetch_downloads_once_and_caches() {
        use std::io::{Read, Write};
        let payload: Vec<u8> = {
            let tensors = vec![("encoder.token_embedding".to_string(), Array2::zeros((2, 2)))];
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("w.bin");
            save_encoder_file(&path, &tensors).unwrap();
            std::fs::read(&path).unwrap()
        };
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = std::sync::Arc::new(std::sync::atomic::AtomicUsize::new(0));
        let hits_clone = hits.clone();
        let body = payload.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { return };
                hits_clone.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                let mut buf = [0u8; 1024];
                let _ = stream.read(&mut buf);
                let header = format!(
                    "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                    body.len()
                );
                let _ = stream.write_all(header.as_bytes());
                let _ = stream.write_all(&body);
            }
        });

        let cache = tempfile::tempdir().unwrap();
        let url = format!("http://{addr}/encoder.bin");
        let first = fetch_encoder_weights(&url, cache.path()).unwrap();
        let second = fetch_encoder_weights(&url, cache.path()).unwrap();
        assert_eq!(first, second);
        assert_eq!(hits.load(std::sync::atomic::Ordering::SeqCst), 1);
        assert_eq!(std::fs::read(&first).unwrap(), payload);
        assert!(load_encoder_file(&first).is_ok());
    }

    #[test]
    fn two_step_gating_controls_the_final_label() {
        use crate::corpus::BinaryInstance;
        use crate::identifier::{train_identifier, IdentifierConfig};

        // Identifier fixture: markers vs plain prose.
        let mut id_train: Vec<BinaryInstance> = Vec::new();
        let fillers = ["alpha", "beta", "gamma", "delta"];
        for i in 0..12 {
            let f = fillers[i % fillers.len()];
            id_train.push(Instance {
                id: format!("s{i}"),
                source: ArtifactSource::IssueSection,
                project: String::new(),
                text: format!("todo refactor {f} module"),
                label: BinaryLabel::Satd,
            });
            id_train.push(Instance {
                id: format!("n{i}"),
                source: ArtifactSource::IssueSection,
                project: String::new(),
                text: format!("release {f} version today"),
                label: BinaryLabel::NotSatd,
            });
        }
        let id_splits = SplitBundle {
            validation: id_train.clone(),
            test: Vec::new(),
            train: id_train,
            seed: 0,
            ratios: [1.0, 0.0, 0.0],
        };
        let id_config = IdentifierConfig {
            widths: [8, 4, 8, 8],
            max_len: 8,
            embedding_dim: 12,
            batch_size: 8,
            max_epochs: 25,
            patience: 25,
            seed: 11,
            ..IdentifierConfig::default()
        };
        let mut identifier = train_identifier(&id_splits, None, &id_config).unwrap();

        let cat_splits = keyword_separable_splits(6);
        let mut categorizer = train_categorizer(&cat_splits, &toy_config()).unwrap();

        let texts = vec![
            "todo refactor alpha module", // SATD by step one
            "release beta version today", // rejected by step one
        ];
        let labels = two_step_classify(&mut identifier, &mut categorizer, &texts);
        assert_eq!(labels.len(), 2);
        assert_ne!(labels[0], SatdLabel::NotSatd);
        assert_eq!(labels[1], SatdLabel::NotSatd);

        // The number of NOT_SATD outputs equals step one's rejections.
        let gates = identifier.predict(&texts);
        let rejected = gates
            .iter()
            .filter(|(l, _)| *l == BinaryLabel::NotSatd)
            .count();
        let not_satd = labels.iter().filter(|l| **l == SatdLabel::NotSatd).count();
        assert_eq!(rejected, not_satd);
    }
}
