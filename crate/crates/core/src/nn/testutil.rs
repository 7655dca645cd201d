//! Finite-difference gradient checking shared by the layer tests.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Param;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn assert_close(analytic: f64, numeric: f64, what: &str) {
    let scale = 1f64.max(analytic.abs()).max(numeric.abs());
    assert!(
        (analytic - numeric).abs() <= TOL * scale,
        "{what}: analytic {analytic} vs numeric {numeric}"
    );
}

/// Verify a layer's parameter and input gradients against central
/// differences of the scalar loss `L = sum(forward(x) * R)` for a fixed
/// random projection `R`. The layer's forward must be deterministic.
pub fn grad_check<L>(
    rng: &mut ChaCha8Rng,
    input_shape: (usize, usize),
    params_of: impl Fn(&mut L) -> Vec<&mut Param>,
    mut forward: impl FnMut(&mut L, &Array2<f64>) -> Array2<f64>,
    mut backward: impl FnMut(&mut L, &Array2<f64>) -> Array2<f64>,
    layer: &mut L,
) {
    let x = Array2::from_shape_fn(input_shape, |_| rng.gen_range(-1.0..1.0));
    let out = forward(layer, &x);
    let projection = Array2::from_shape_fn(out.raw_dim(), |_| rng.gen_range(-1.0..1.0));

    for p in params_of(layer) {
        p.zero_grad();
    }
    let gx = backward(layer, &projection);

    // Input gradient.
    for idx in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        let flat = idx;
        xp.as_slice_mut().unwrap()[flat] += EPS;
        xm.as_slice_mut().unwrap()[flat] -= EPS;
        let lp = (&forward(layer, &xp) * &projection).sum();
        let lm = (&forward(layer, &xm) * &projection).sum();
        let numeric = (lp - lm) / (2.0 * EPS);
        let analytic = gx.as_slice().unwrap()[flat];
        assert_close(analytic, numeric, &format!("input[{idx}]"));
    }

    // Parameter gradients. Snapshot analytic grads first, then perturb.
    let analytic_grads: Vec<Array2<f64>> =
        params_of(layer).iter().map(|p| p.grad.clone()).collect();
    let n_params = analytic_grads.len();
    for pi in 0..n_params {
        let original = params_of(layer)[pi].value.clone();
        for idx in 0..original.len() {
            let mut perturbed = original.clone();
            perturbed.as_slice_mut().unwrap()[idx] += EPS;
            params_of(layer)[pi].value = perturbed;
            let lp = (&forward(layer, &x) * &projection).sum();

            let mut perturbed = original.clone();
            perturbed.as_slice_mut().unwrap()[idx] -= EPS;
            params_of(layer)[pi].value = perturbed;
            let lm = (&forward(layer, &x) * &projection).sum();

            params_of(layer)[pi].value = original.clone();
            let numeric = (lp - lm) / (2.0 * EPS);
            let analytic = analytic_grads[pi].as_slice().unwrap()[idx];
            assert_close(analytic, numeric, &format!("param[{pi}][{idx}]"));
        }
    }
}
