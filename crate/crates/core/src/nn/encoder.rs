//! Bidirectional transformer encoder: learned token and position
//! embeddings, post-norm attention/feed-forward blocks.

use ndarray::{s, Array2, Array3, Axis};
use rand_chacha::ChaCha8Rng;

use super::{
    flatten_bt, unflatten_bt, Dense, Dropout, Embedding, Gelu, LayerNorm, MultiHeadAttention,
    Param,
};

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub expand: Dense,
    pub activation: Gelu,
    pub contract: Dense,
}

impl FeedForward {
    pub fn new(dim: usize, inner: usize, rng: &mut ChaCha8Rng) -> Self {
        FeedForward {
            expand: Dense::new(dim, inner, rng),
            activation: Gelu::new(),
            contract: Dense::new(inner, dim, rng),
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        let h = self.expand.forward(x, train);
        let h = self.activation.forward(&h, train);
        self.contract.forward(&h, train)
    }

    pub fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let g = self.contract.backward(gy);
        let g = self.activation.backward(&g);
        self.expand.backward(&g)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut params = self.expand.params_mut();
        params.extend(self.contract.params_mut());
        params
    }
}

/// One post-norm encoder block:
/// `x -> LN(x + Drop(Attn(x))) -> LN(.. + Drop(FFN(..)))`.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub attention: MultiHeadAttention,
    pub attn_dropout: Dropout,
    pub attn_norm: LayerNorm,
    pub ffn: FeedForward,
    pub ffn_dropout: Dropout,
    pub ffn_norm: LayerNorm,
}

impl EncoderLayer {
    pub fn new(dim: usize, heads: usize, inner: usize, dropout: f64, rng: &mut ChaCha8Rng, seed: u64) -> Self {
        EncoderLayer {
            attention: MultiHeadAttention::new(dim, heads, rng),
            attn_dropout: Dropout::new(dropout, seed),
            attn_norm: LayerNorm::new(dim),
            ffn: FeedForward::new(dim, inner, rng),
            ffn_dropout: Dropout::new(dropout, seed.wrapping_add(1)),
            ffn_norm: LayerNorm::new(dim),
        }
    }

    pub fn forward(&mut self, x: &Array3<f64>, mask: &Array2<f64>, train: bool) -> Array3<f64> {
        let (b, t, _) = x.dim();
        let attn = self.attention.forward(x, mask, train);
        let attn2 = self.attn_dropout.forward(&flatten_bt(&attn), train);
        let x2 = flatten_bt(x);
        let mid = self.attn_norm.forward(&(&x2 + &attn2), train);

        let ffn = self.ffn.forward(&mid, train);
        let ffn = self.ffn_dropout.forward(&ffn, train);
        let out = self.ffn_norm.forward(&(&mid + &ffn), train);
        unflatten_bt(out, b, t)
    }

    pub fn backward(&mut self, gy: &Array3<f64>) -> Array3<f64> {
        let (b, t, _) = gy.dim();
        let g = self.ffn_norm.backward(&flatten_bt(gy));
        // Residual: gradient flows to both the FFN branch and `mid`.
        let g_ffn = self.ffn_dropout.backward(&g);
        let g_mid = &g + &self.ffn.backward(&g_ffn);

        let g2 = self.attn_norm.backward(&g_mid);
        let g_attn = self.attn_dropout.backward(&g2);
        let gx = self.attention.backward(&unflatten_bt(g_attn, b, t));
        gx + unflatten_bt(g2, b, t)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut params = self.attention.params_mut();
        params.extend(self.attn_norm.params_mut());
        params.extend(self.ffn.params_mut());
        params.extend(self.ffn_norm.params_mut());
        params
    }
}

/// Encoder stack over token ids: token + position embeddings, embedding
/// norm and dropout, then the block stack. Output is `[B, T, d]`.
#[derive(Debug, Clone)]
pub struct TransformerEncoder {
    pub token_embedding: Embedding,
    pub position_embedding: Param, // [max_len, d]
    pub embed_norm: LayerNorm,
    pub embed_dropout: Dropout,
    pub layers: Vec<EncoderLayer>,
    cache: Option<(usize, usize)>,
}

impl TransformerEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        vocab: usize,
        dim: usize,
        heads: usize,
        inner: usize,
        layers: usize,
        max_len: usize,
        dropout: f64,
        rng: &mut ChaCha8Rng,
        dropout_seed: u64,
    ) -> Self {
        let token_table = super::uniform_init(rng, (vocab, dim), -0.05, 0.05);
        let position_table = super::uniform_init(rng, (max_len, dim), -0.05, 0.05);
        let blocks = (0..layers)
            .map(|i| {
                EncoderLayer::new(
                    dim,
                    heads,
                    inner,
                    dropout,
                    rng,
                    dropout_seed.wrapping_add(2 * i as u64 + 1),
                )
            })
            .collect();
        TransformerEncoder {
            token_embedding: Embedding::new(token_table, true, vec![0]),
            position_embedding: Param::new(position_table),
            embed_norm: LayerNorm::new(dim),
            embed_dropout: Dropout::new(dropout, dropout_seed),
            layers: blocks,
            cache: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.token_embedding.dim()
    }

    pub fn forward(&mut self, ids: &Array2<usize>, mask: &Array2<f64>, train: bool) -> Array3<f64> {
        let (b, t) = ids.dim();
        assert!(
            t <= self.position_embedding.value.nrows(),
            "sequence longer than the position table"
        );
        let mut x = self.token_embedding.forward(ids, train);
        let positions = self.position_embedding.value.slice(s![0..t, ..]);
        for mut row in x.axis_iter_mut(Axis(0)) {
            row += &positions;
        }
        let x2 = self.embed_norm.forward(&flatten_bt(&x), train);
        let x2 = self.embed_dropout.forward(&x2, train);
        let mut x = unflatten_bt(x2, b, t);
        for layer in &mut self.layers {
            x = layer.forward(&x, mask, train);
        }
        if train {
            self.cache = Some((b, t));
        }
        x
    }

    pub fn backward(&mut self, gy: &Array3<f64>) {
        let (b, t) = self.cache.expect("forward(train) before backward");
        let mut g = gy.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g);
        }
        let g2 = self.embed_dropout.backward(&flatten_bt(&g));
        let g2 = self.embed_norm.backward(&g2);
        let g = unflatten_bt(g2, b, t);
        // Position rows accumulate over the batch.
        for bi in 0..b {
            let slice = g.index_axis(Axis(0), bi);
            let mut target = self.position_embedding.grad.slice_mut(s![0..t, ..]);
            target += &slice;
        }
        self.token_embedding.backward(&g);
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut params = self.token_embedding.params_mut();
        params.push(&mut self.position_embedding);
        params.extend(self.embed_norm.params_mut());
        for layer in &mut self.layers {
            params.extend(layer.params_mut());
        }
        params
    }
}
