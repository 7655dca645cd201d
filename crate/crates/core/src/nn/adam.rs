//! Adam and AdamW (decoupled weight decay) over a fixed parameter list.

use ndarray::Array2;

use super::Param;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay; 0 disables it.
    pub weight_decay: f64,
    t: u64,
    state: Vec<(Array2<f64>, Array2<f64>)>,
}

impl Adam {
    pub fn new(lr: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps,
            weight_decay: 0.0,
            t: 0,
            state: Vec::new(),
        }
    }

    pub fn adamw(lr: f64, eps: f64, weight_decay: f64) -> Self {
        Adam {
            weight_decay,
            ..Adam::new(lr, eps)
        }
    }

    /// Apply one update. The parameter list must be identical (order and
    /// shapes) on every call.
    pub fn step(&mut self, params: &mut [&mut Param]) {
        if self.state.is_empty() {
            self.state = params
                .iter()
                .map(|p| {
                    (
                        Array2::zeros(p.value.raw_dim()),
                        Array2::zeros(p.value.raw_dim()),
                    )
                })
                .collect();
        }
        assert_eq!(self.state.len(), params.len(), "parameter list changed");
        self.t += 1;
        let bias1 = 1.0 - self.beta1.powi(self.t as i32);
        let bias2 = 1.0 - self.beta2.powi(self.t as i32);
        for (param, (m, v)) in params.iter_mut().zip(&mut self.state) {
            if self.weight_decay > 0.0 {
                param.value.mapv_inplace(|w| w * (1.0 - self.lr * self.weight_decay));
            }
            azip(m, v, &param.grad, self.beta1, self.beta2);
            let lr = self.lr;
            let eps = self.eps;
            ndarray::Zip::from(&mut param.value)
                .and(&*m)
                .and(&*v)
                .for_each(|w, &m, &v| {
                    let mhat = m / bias1;
                    let vhat = v / bias2;
                    *w -= lr * mhat / (vhat.sqrt() + eps);
                });
        }
    }
}

fn azip(m: &mut Array2<f64>, v: &mut Array2<f64>, grad: &Array2<f64>, beta1: f64, beta2: f64) {
    ndarray::Zip::from(m).and(v).and(grad).for_each(|m, v, &g| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
    });
}
