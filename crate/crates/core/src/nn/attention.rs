//! Multi-head scaled dot-product self-attention with key-side padding
//! masks.

use ndarray::{s, Array2, Array3, Axis};
use rand_chacha::ChaCha8Rng;

use super::{flatten_bt, glorot_init, unflatten_bt, Param};

const MASK_BIAS: f64 = -1e9;

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: Param,
    pub bq: Param,
    pub wk: Param,
    pub bk: Param,
    pub wv: Param,
    pub bv: Param,
    pub wo: Param,
    pub bo: Param,
    heads: usize,
    dim: usize,
    cache: Option<AttnCache>,
}

#[derive(Debug, Clone)]
struct AttnCache {
    x2: Array2<f64>, // [B*T, d]
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    ctx: Array2<f64>,
    attn: Vec<Array2<f64>>, // per (b, head), [T, T]
    batch: usize,
    time: usize,
}

impl MultiHeadAttention {
    pub fn new(dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(dim.is_multiple_of(heads), "dim must divide evenly across heads");
        MultiHeadAttention {
            wq: Param::new(glorot_init(rng, (dim, dim))),
            bq: Param::zeros((1, dim)),
            wk: Param::new(glorot_init(rng, (dim, dim))),
            bk: Param::zeros((1, dim)),
            wv: Param::new(glorot_init(rng, (dim, dim))),
            bv: Param::zeros((1, dim)),
            wo: Param::new(glorot_init(rng, (dim, dim))),
            bo: Param::zeros((1, dim)),
            heads,
            dim,
            cache: None,
        }
    }

    /// `x` is `[B, T, d]`; `mask` is `[B, T]` with 1 for real tokens and 0
    /// for padding (masked as attention keys).
    pub fn forward(&mut self, x: &Array3<f64>, mask: &Array2<f64>, train: bool) -> Array3<f64> {
        let (batch, time, _) = x.dim();
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let x2 = flatten_bt(x);
        let q = x2.dot(&self.wq.value) + &self.bq.value;
        let k = x2.dot(&self.wk.value) + &self.bk.value;
        let v = x2.dot(&self.wv.value) + &self.bv.value;

        let mut ctx = Array2::zeros((batch * time, self.dim));
        let mut attn_cache = Vec::with_capacity(batch * self.heads);
        for b in 0..batch {
            let rows = b * time..(b + 1) * time;
            for h in 0..self.heads {
                let cols = h * dh..(h + 1) * dh;
                let qh = q.slice(s![rows.clone(), cols.clone()]);
                let kh = k.slice(s![rows.clone(), cols.clone()]);
                let vh = v.slice(s![rows.clone(), cols.clone()]);

                let mut scores = qh.dot(&kh.t()) * scale; // [T, T]
                for j in 0..time {
                    if mask[[b, j]] == 0.0 {
                        scores.column_mut(j).fill(MASK_BIAS);
                    }
                }
                // Row-wise softmax.
                for mut row in scores.rows_mut() {
                    let max = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
                    row.mapv_inplace(|v| (v - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|v| v / sum);
                }
                let ctx_h = scores.dot(&vh); // [T, dh]
                ctx.slice_mut(s![rows.clone(), cols]).assign(&ctx_h);
                attn_cache.push(scores);
            }
        }
        let out = ctx.dot(&self.wo.value) + &self.bo.value;
        if train {
            self.cache = Some(AttnCache {
                x2,
                q,
                k,
                v,
                ctx,
                attn: attn_cache,
                batch,
                time,
            });
        }
        unflatten_bt(out, batch, time)
    }

    pub fn backward(&mut self, gy: &Array3<f64>) -> Array3<f64> {
        let cache = self.cache.take().expect("forward(train) before backward");
        let (batch, time) = (cache.batch, cache.time);
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let gy2 = flatten_bt(gy);
        self.wo.grad += &cache.ctx.t().dot(&gy2);
        self.bo.grad += &gy2.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dctx = gy2.dot(&self.wo.value.t());

        let mut dq = Array2::zeros((batch * time, self.dim));
        let mut dk = Array2::zeros((batch * time, self.dim));
        let mut dv = Array2::zeros((batch * time, self.dim));
        for b in 0..batch {
            let rows = b * time..(b + 1) * time;
            for h in 0..self.heads {
                let cols = h * dh..(h + 1) * dh;
                let attn = &cache.attn[b * self.heads + h]; // [T, T]
                let dctx_h = dctx.slice(s![rows.clone(), cols.clone()]);
                let vh = cache.v.slice(s![rows.clone(), cols.clone()]);
                let qh = cache.q.slice(s![rows.clone(), cols.clone()]);
                let kh = cache.k.slice(s![rows.clone(), cols.clone()]);

                let d_attn = dctx_h.dot(&vh.t()); // [T, T]
                dv.slice_mut(s![rows.clone(), cols.clone()])
                    .assign(&attn.t().dot(&dctx_h));

                // Softmax backward, row-wise.
                let mut d_scores = &d_attn * attn;
                let row_dot = d_scores.sum_axis(Axis(1)).insert_axis(Axis(1));
                d_scores = &d_scores - &(attn * &row_dot);

                dq.slice_mut(s![rows.clone(), cols.clone()])
                    .assign(&(d_scores.dot(&kh) * scale));
                dk.slice_mut(s![rows.clone(), cols])
                    .assign(&(d_scores.t().dot(&qh) * scale));
            }
        }

        self.wq.grad += &cache.x2.t().dot(&dq);
        self.bq.grad += &dq.sum_axis(Axis(0)).insert_axis(Axis(0));
        self.wk.grad += &cache.x2.t().dot(&dk);
        self.bk.grad += &dk.sum_axis(Axis(0)).insert_axis(Axis(0));
        self.wv.grad += &cache.x2.t().dot(&dv);
        self.bv.grad += &dv.sum_axis(Axis(0)).insert_axis(Axis(0));

        let gx2 = dq.dot(&self.wq.value.t()) + dk.dot(&self.wk.value.t()) + dv.dot(&self.wv.value.t());
        unflatten_bt(gx2, batch, time)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
        ]
    }
}
