//! Elementwise activations with cached inputs.

use ndarray::Array2;

#[derive(Debug, Clone, Default)]
pub struct Relu {
    cache: Option<Array2<f64>>,
}

impl Relu {
    pub fn new() -> Self {
        Relu::default()
    }

    pub fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        if train {
            self.cache = Some(x.clone());
        }
        x.mapv(|v| v.max(0.0))
    }

    pub fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let x = self.cache.as_ref().expect("forward(train) before backward");
        let mut gx = gy.clone();
        gx.zip_mut_with(x, |g, &v| {
            if v <= 0.0 {
                *g = 0.0;
            }
        });
        gx
    }
}

const GELU_C: f64 = 0.044_715;

fn sqrt_2_over_pi() -> f64 {
    (2.0 / std::f64::consts::PI).sqrt()
}

/// Tanh-approximated GELU.
#[derive(Debug, Clone, Default)]
pub struct Gelu {
    cache: Option<Array2<f64>>,
}

impl Gelu {
    pub fn new() -> Self {
        Gelu::default()
    }

    pub fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        if train {
            self.cache = Some(x.clone());
        }
        let k = sqrt_2_over_pi();
        x.mapv(|v| 0.5 * v * (1.0 + (k * (v + GELU_C * v.powi(3))).tanh()))
    }

    pub fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let x = self.cache.as_ref().expect("forward(train) before backward");
        let k = sqrt_2_over_pi();
        let mut gx = gy.clone();
        gx.zip_mut_with(x, |g, &v| {
            let u = k * (v + GELU_C * v.powi(3));
            let t = u.tanh();
            let du = k * (1.0 + 3.0 * GELU_C * v * v);
            *g *= 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
        });
        gx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = Relu::new();
        grad_check(
            &mut rng,
            (4, 6),
            |_: &mut Relu| vec![],
            |layer, x| layer.forward(x, true),
            |layer, gy| layer.backward(gy),
            &mut layer,
        );
    }

    #[test]
    fn gelu_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut layer = Gelu::new();
        grad_check(
            &mut rng,
            (4, 6),
            |_: &mut Gelu| vec![],
            |layer, x| layer.forward(x, true),
            |layer, gy| layer.backward(gy),
            &mut layer,
        );
    }

    #[test]
    fn gelu_matches_reference_values() {
        let mut layer = Gelu::new();
        let x = ndarray::arr2(&[[0.0, 1.0, -1.0, 2.0]]);
        let y = layer.forward(&x, false);
        // Reference values of the tanh approximation.
        let expected = [0.0, 0.841192, -0.158808, 1.954598];
        for (got, want) in y.iter().zip(expected) {
            assert!((got - want).abs() < 1e-5, "{got} vs {want}");
        }
    }
}
