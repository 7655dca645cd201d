//! Fully connected layer.

use ndarray::{Array2, Axis};
use rand_chacha::ChaCha8Rng;

use super::{glorot_init, Param};

#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Param, // [in, out]
    pub b: Param, // [1, out]
    cache: Option<Array2<f64>>,
}

impl Dense {
    pub fn new(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        Dense {
            w: Param::new(glorot_init(rng, (input, output))),
            b: Param::zeros((1, output)),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        if train {
            self.cache = Some(x.clone());
        }
        x.dot(&self.w.value) + &self.b.value
    }

    pub fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let x = self.cache.as_ref().expect("forward(train) before backward");
        self.w.grad += &x.t().dot(gy);
        self.b.grad += &gy.sum_axis(Axis(0)).insert_axis(Axis(0));
        gy.dot(&self.w.value.t())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}
