//! Batch normalization (per channel, over the batch dimension) and layer
//! normalization (per row, over the feature dimension).

use ndarray::{Array2, Axis};

use super::Param;

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Param, // [1, C]
    pub beta: Param,  // [1, C]
    pub running_mean: Array2<f64>,
    pub running_var: Array2<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Array2<f64>,
    inv_std: Array2<f64>, // [1, C]
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Param::new(Array2::ones((1, channels))),
            beta: Param::zeros((1, channels)),
            running_mean: Array2::zeros((1, channels)),
            running_var: Array2::ones((1, channels)),
            momentum: 0.9,
            eps: 1e-5,
            cache: None,
        }
    }

    /// `x` is `[N, C]`; sequence inputs are flattened to rows first.
    pub fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        if train {
            let n = x.nrows() as f64;
            let mean = x.mean_axis(Axis(0)).expect("nonempty").insert_axis(Axis(0));
            let centered = x - &mean;
            let var = centered
                .mapv(|v| v * v)
                .mean_axis(Axis(0))
                .expect("nonempty")
                .insert_axis(Axis(0));
            let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
            let xhat = &centered * &inv_std;
            let y = &xhat * &self.gamma.value + &self.beta.value;

            self.running_mean =
                &self.running_mean * self.momentum + &(&mean * (1.0 - self.momentum));
            // Unbiased variance for the running estimate.
            let unbiased = if n > 1.0 { &var * (n / (n - 1.0)) } else { var };
            self.running_var =
                &self.running_var * self.momentum + &(unbiased * (1.0 - self.momentum));

            self.cache = Some(BnCache { xhat, inv_std });
            y
        } else {
            let inv_std = self.running_var.mapv(|v| 1.0 / (v + self.eps).sqrt());
            let xhat = (x - &self.running_mean) * &inv_std;
            &xhat * &self.gamma.value + &self.beta.value
        }
    }

    pub fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let cache = self.cache.as_ref().expect("forward(train) before backward");
        let n = gy.nrows() as f64;
        let xhat = &cache.xhat;

        self.gamma.grad += &(gy * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.beta.grad += &gy.sum_axis(Axis(0)).insert_axis(Axis(0));

        let dxhat = gy * &self.gamma.value;
        let sum_dxhat = dxhat.sum_axis(Axis(0)).insert_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
        (&dxhat * n - &sum_dxhat - xhat * &sum_dxhat_xhat) * &cache.inv_std / n
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Param, // [1, d]
    pub beta: Param,  // [1, d]
    pub eps: f64,
    cache: Option<LnCache>,
}

#[derive(Debug, Clone)]
struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array2<f64>, // [N, 1]
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Param::new(Array2::ones((1, dim))),
            beta: Param::zeros((1, dim)),
            eps: 1e-12,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        let mean = x.mean_axis(Axis(1)).expect("nonempty").insert_axis(Axis(1));
        let centered = x - &mean;
        let var = centered
            .mapv(|v| v * v)
            .mean_axis(Axis(1))
            .expect("nonempty")
            .insert_axis(Axis(1));
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let xhat = &centered * &inv_std;
        let y = &xhat * &self.gamma.value + &self.beta.value;
        if train {
            self.cache = Some(LnCache { xhat, inv_std });
        }
        y
    }

    pub fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let cache = self.cache.as_ref().expect("forward(train) before backward");
        let d = gy.ncols() as f64;
        let xhat = &cache.xhat;

        self.gamma.grad += &(gy * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.beta.grad += &gy.sum_axis(Axis(0)).insert_axis(Axis(0));

        let dxhat = gy * &self.gamma.value;
        let sum_dxhat = dxhat.sum_axis(Axis(1)).insert_axis(Axis(1));
        let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(1)).insert_axis(Axis(1));
        (&dxhat * d - &sum_dxhat - xhat * &sum_dxhat_xhat) * &cache.inv_std / d
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}
