//! Central finite-difference checks for tape gradients.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

/// Relative discrepancy used throughout gradient checking.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-12 {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Per-entry central differences of `f` around `x`.
pub fn numeric_gradient(f: impl Fn(&Array2<f64>) -> f64, x: &Array2<f64>, step: f64) -> Array2<f64> {
    let mut g = Array2::zeros(x.dim());
    let mut probe = x.clone();
    for idx in ndarray::indices(x.dim()) {
        let orig = probe[idx];
        probe[idx] = orig + step;
        let up = f(&probe);
        probe[idx] = orig - step;
        let down = f(&probe);
        probe[idx] = orig;
        g[idx] = (up - down) / (2.0 * step);
    }
    g
}

/// Outcome of a directional check over several random directions.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalReport {
    pub max_relative_error: f64,
    pub errors: Vec<f64>,
}

/// Compares `grad · u` with `(f(x + hu) − f(x − hu)) / 2h` for unit random
/// directions `u` spanning all tensors jointly.
pub fn directional_check(
    f: impl Fn(&[Array2<f64>]) -> f64,
    x: &[Array2<f64>],
    grad: &[Array2<f64>],
    directions: usize,
    step: f64,
    rng: &mut impl Rng,
) -> DirectionalReport {
    let mut errors = Vec::with_capacity(directions);
    for _ in 0..directions {
        let mut u: Vec<Array2<f64>> = x
            .iter()
            .map(|t| Array2::from_shape_simple_fn(t.dim(), || rng.sample(StandardNormal)))
            .collect();
        let norm: f64 = u
            .iter()
            .map(|t| t.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        u.iter_mut().for_each(|t| t.mapv_inplace(|v| v / norm));

        let shifted =
            |sign: f64| -> Vec<Array2<f64>> { x.iter().zip(&u).map(|(t, d)| t + &(d * (sign * step))).collect() };
        let numeric = (f(&shifted(1.0)) - f(&shifted(-1.0))) / (2.0 * step);
        let analytic: f64 = grad.iter().zip(&u).map(|(g, d)| (g * d).sum()).sum();
        errors.push(relative_error(analytic, numeric));
    }
    DirectionalReport {
        max_relative_error: errors.iter().copied().fold(0.0, f64::max),
        errors,
    }
}
