//! Loss heads: numerically stable binary cross-entropy on logits and
//! softmax cross-entropy. Both return the mean loss and the gradient
//! w.r.t. the logits.

use ndarray::{Array1, Array2, Axis};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mean binary cross-entropy over logits `z` and targets in {0, 1}.
/// Returns `(loss, dloss/dz)` with the gradient already divided by the
/// batch size.
pub fn bce_with_logits(logits: &Array1<f64>, targets: &Array1<f64>) -> (f64, Array1<f64>) {
    assert_eq!(logits.len(), targets.len());
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array1::zeros(logits.len());
    for (i, (&z, &y)) in logits.iter().zip(targets).enumerate() {
        // max(z, 0) - z*y + ln(1 + exp(-|z|))
        loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        grad[i] = (sigmoid(z) - y) / n;
    }
    (loss / n, grad)
}

/// Mean cross-entropy over a `[B, K]` logit matrix and class indices.
/// Returns `(loss, dloss/dlogits, probabilities)`.
pub fn softmax_cross_entropy(
    logits: &Array2<f64>,
    targets: &[usize],
) -> (f64, Array2<f64>, Array2<f64>) {
    assert_eq!(logits.nrows(), targets.len());
    let n = logits.nrows() as f64;
    let probs = softmax_rows(logits);
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for (i, &target) in targets.iter().enumerate() {
        loss -= probs[[i, target]].max(1e-300).ln();
        grad[[i, target]] -= 1.0;
    }
    grad.mapv_inplace(|v| v / n);
    (loss / n, grad, probs)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut probs = logits.clone();
    for mut row in probs.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    probs
}

#[allow(dead_code)]
fn probs_sum(probs: &Array2<f64>) -> Array1<f64> {
    probs.sum_axis(Axis(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bce_matches_direct_formula_on_moderate_logits() {
        let logits = arr1(&[0.5, -1.2, 2.0]);
        let targets = arr1(&[1.0, 0.0, 1.0]);
        let (loss, _) = bce_with_logits(&logits, &targets);
        let direct: f64 = logits
            .iter()
            .zip(&targets)
            .map(|(&z, &y)| {
                let p = sigmoid(z);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / 3.0;
        assert!((loss - direct).abs() < 1e-12);
    }

    #[test]
    fn bce_is_stable_for_extreme_logits() {
        let logits = arr1(&[1000.0, -1000.0]);
        let targets = arr1(&[1.0, 0.0]);
        let (loss, grad) = bce_with_logits(&logits, &targets);
        assert!(loss.abs() < 1e-12);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let logits = Array1::from_shape_fn(6, |_| rng.gen_range(-2.0..2.0));
        let targets = Array1::from_shape_fn(6, |_| f64::from(rng.gen_bool(0.5)));
        let (_, grad) = bce_with_logits(&logits, &targets);
        for i in 0..logits.len() {
            let mut lp = logits.clone();
            lp[i] += 1e-6;
            let mut lm = logits.clone();
            lm[i] -= 1e-6;
            let numeric =
                (bce_with_logits(&lp, &targets).0 - bce_with_logits(&lm, &targets).0) / 2e-6;
            assert!((grad[i] - numeric).abs() < 1e-8, "{} vs {numeric}", grad[i]);
        }
    }

    #[test]
    fn softmax_ce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let logits = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-2.0..2.0));
        let targets = vec![0usize, 2, 1, 1];
        let (_, grad, probs) = softmax_cross_entropy(&logits, &targets);
        for row in probs.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        for idx in 0..logits.len() {
            let mut lp = logits.clone();
            lp.as_slice_mut().unwrap()[idx] += 1e-6;
            let mut lm = logits.clone();
            lm.as_slice_mut().unwrap()[idx] -= 1e-6;
            let numeric = (softmax_cross_entropy(&lp, &targets).0
                - softmax_cross_entropy(&lm, &targets).0)
                / 2e-6;
            let analytic = grad.as_slice().unwrap()[idx];
            assert!((analytic - numeric).abs() < 1e-8, "{analytic} vs {numeric}");
        }
    }
}
