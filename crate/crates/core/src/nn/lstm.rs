//! LSTM over padded batches, single direction plus a bidirectional
//! wrapper that concatenates per-step hidden states.
//!
//! Gate layout in the fused weight matrices is `[i | f | g | o]`. The
//! forget-gate bias starts at 1.

use ndarray::{s, Array2, Array3, Axis};
use rand_chacha::ChaCha8Rng;

use super::{glorot_init, Param};

fn sigmoid_inplace(x: &mut Array2<f64>) {
    x.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp()));
}

#[derive(Debug, Clone)]
pub struct Lstm {
    pub wx: Param, // [D, 4H]
    pub wh: Param, // [H, 4H]
    pub b: Param,  // [1, 4H]
    hidden: usize,
    /// Process the sequence back-to-front (outputs stay in input order).
    reverse: bool,
    cache: Option<LstmCache>,
}

#[derive(Debug, Clone)]
struct StepCache {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    tanh_c: Array2<f64>,
}

#[derive(Debug, Clone)]
struct LstmCache {
    /// One entry per step, in iteration order; each records the time index
    /// it wrote to.
    steps: Vec<(usize, StepCache)>,
    input_dim: usize,
}

impl Lstm {
    pub fn new(input: usize, hidden: usize, reverse: bool, rng: &mut ChaCha8Rng) -> Self {
        let wx = glorot_init(rng, (input, 4 * hidden));
        let wh = glorot_init(rng, (hidden, 4 * hidden));
        let mut b = Array2::zeros((1, 4 * hidden));
        b.slice_mut(s![0, hidden..2 * hidden]).fill(1.0);
        Lstm {
            wx: Param::new(wx),
            wh: Param::new(wh),
            b: Param::new(b),
            hidden,
            reverse,
            cache: None,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// `x` is `[B, T, D]`; returns hidden states `[B, T, H]` indexed by
    /// original time position.
    pub fn forward(&mut self, x: &Array3<f64>, train: bool) -> Array3<f64> {
        let (batch, time, dim) = x.dim();
        let h = self.hidden;
        let mut out = Array3::zeros((batch, time, h));
        let mut h_prev = Array2::zeros((batch, h));
        let mut c_prev = Array2::zeros((batch, h));
        let mut steps = Vec::with_capacity(time);

        let order: Vec<usize> = if self.reverse {
            (0..time).rev().collect()
        } else {
            (0..time).collect()
        };
        for &t in &order {
            let x_t = x.index_axis(Axis(1), t).to_owned();
            let z = x_t.dot(&self.wx.value) + h_prev.dot(&self.wh.value) + &self.b.value;
            let mut i = z.slice(s![.., 0..h]).to_owned();
            let mut f = z.slice(s![.., h..2 * h]).to_owned();
            let mut g = z.slice(s![.., 2 * h..3 * h]).to_owned();
            let mut o = z.slice(s![.., 3 * h..4 * h]).to_owned();
            sigmoid_inplace(&mut i);
            sigmoid_inplace(&mut f);
            g.mapv_inplace(f64::tanh);
            sigmoid_inplace(&mut o);

            let c = &f * &c_prev + &i * &g;
            let tanh_c = c.mapv(f64::tanh);
            let h_t = &o * &tanh_c;
            out.index_axis_mut(Axis(1), t).assign(&h_t);

            if train {
                steps.push((
                    t,
                    StepCache {
                        x: x_t,
                        h_prev: h_prev.clone(),
                        c_prev: c_prev.clone(),
                        i,
                        f,
                        g,
                        o,
                        tanh_c,
                    },
                ));
            }
            h_prev = h_t;
            c_prev = c;
        }
        if train {
            self.cache = Some(LstmCache {
                steps,
                input_dim: dim,
            });
        }
        out
    }

    /// `gh` is the gradient w.r.t. every per-step hidden state, `[B, T, H]`.
    pub fn backward(&mut self, gh: &Array3<f64>) -> Array3<f64> {
        let cache = self.cache.take().expect("forward(train) before backward");
        let (batch, time, h) = gh.dim();
        let mut gx = Array3::zeros((batch, time, cache.input_dim));
        let mut dh_next = Array2::zeros((batch, h));
        let mut dc_next = Array2::zeros((batch, h));

        for (t, step) in cache.steps.iter().rev() {
            let dh = gh.index_axis(Axis(1), *t).to_owned() + &dh_next;
            let d_o = &dh * &step.tanh_c;
            let dc = &dc_next + &(&dh * &step.o * &step.tanh_c.mapv(|v| 1.0 - v * v));
            let di = &dc * &step.g;
            let df = &dc * &step.c_prev;
            let dg = &dc * &step.i;
            dc_next = &dc * &step.f;

            let dz_i = di * &step.i * &step.i.mapv(|v| 1.0 - v);
            let dz_f = df * &step.f * &step.f.mapv(|v| 1.0 - v);
            let dz_g = dg * &step.g.mapv(|v| 1.0 - v * v);
            let dz_o = d_o * &step.o * &step.o.mapv(|v| 1.0 - v);

            let mut dz = Array2::zeros((batch, 4 * h));
            dz.slice_mut(s![.., 0..h]).assign(&dz_i);
            dz.slice_mut(s![.., h..2 * h]).assign(&dz_f);
            dz.slice_mut(s![.., 2 * h..3 * h]).assign(&dz_g);
            dz.slice_mut(s![.., 3 * h..4 * h]).assign(&dz_o);

            self.wx.grad += &step.x.t().dot(&dz);
            self.wh.grad += &step.h_prev.t().dot(&dz);
            self.b.grad += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));

            gx.index_axis_mut(Axis(1), *t)
                .assign(&dz.dot(&self.wx.value.t()));
            dh_next = dz.dot(&self.wh.value.t());
        }
        gx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.wx, &mut self.wh, &mut self.b]
    }
}

/// Forward and backward passes concatenated per time step: `[B, T, 2H]`.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

impl BiLstm {
    pub fn new(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        BiLstm {
            fwd: Lstm::new(input, hidden, false, rng),
            bwd: Lstm::new(input, hidden, true, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    pub fn forward(&mut self, x: &Array3<f64>, train: bool) -> Array3<f64> {
        let f = self.fwd.forward(x, train);
        let b = self.bwd.forward(x, train);
        ndarray::concatenate(Axis(2), &[f.view(), b.view()]).expect("same shape")
    }

    pub fn backward(&mut self, gy: &Array3<f64>) -> Array3<f64> {
        let h = self.hidden();
        let gf = gy.slice(s![.., .., 0..h]).to_owned();
        let gb = gy.slice(s![.., .., h..2 * h]).to_owned();
        self.fwd.backward(&gf) + self.bwd.backward(&gb)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut params = self.fwd.params_mut();
        params.extend(self.bwd.params_mut());
        params
    }
}

/// Extract the consolidated final state of a bidirectional sequence
/// output: forward direction at the last step, backward direction at the
/// first, concatenated to `[B, 2H]`.
#[derive(Debug, Clone)]
pub struct LastPool {
    hidden: usize,
    shape: Option<(usize, usize)>,
}

impl LastPool {
    pub fn new(hidden: usize) -> Self {
        LastPool {
            hidden,
            shape: None,
        }
    }

    pub fn forward(&mut self, x: &Array3<f64>, train: bool) -> Array2<f64> {
        let (b, t, _) = x.dim();
        if train {
            self.shape = Some((b, t));
        }
        let h = self.hidden;
        let fwd_last = x.slice(s![.., t - 1, 0..h]);
        let bwd_first = x.slice(s![.., 0, h..2 * h]);
        ndarray::concatenate(Axis(1), &[fwd_last, bwd_first]).expect("same batch")
    }

    pub fn backward(&mut self, gy: &Array2<f64>) -> Array3<f64> {
        let (b, t) = self.shape.expect("forward(train) before backward");
        let h = self.hidden;
        let mut gx = Array3::zeros((b, t, 2 * h));
        gx.slice_mut(s![.., t - 1, 0..h]).assign(&gy.slice(s![.., 0..h]));
        gx.slice_mut(s![.., 0, h..2 * h]).assign(&gy.slice(s![.., h..2 * h]));
        gx
    }
}
