use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamState {
    pub fn new(shapes: impl IntoIterator<Item = (usize, usize)>, config: AdamConfig) -> Self {
        let (m, v) = shapes.into_iter().map(|s| (Array2::zeros(s), Array2::zeros(s))).unzip();
        Self { config, step: 0, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update, in place.
    pub fn step(&mut self, params: &mut [&mut Array2<f64>], grads: &[Array2<f64>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::InvalidParameter(format!(
                "adam tracks {} tensors, got {} params and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.dim() != self.m[i].dim() || g.dim() != self.m[i].dim() {
                return Err(Error::ShapeMismatch {
                    name: format!("adam tensor {i}"),
                    expected: self.m[i].dim(),
                    found: g.dim(),
                });
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            Zip::from(&mut **p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = array![[1.5, -2.0]];
        let before = p.clone();
        let mut st = AdamState::new([(1, 2)], AdamConfig::default());
        st.step(&mut [&mut p], &[Array2::zeros((1, 2))], 1e-3).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_hand_evaluated() {
        // t=1, g=1: m̂ = 1, v̂ = 1, update = lr / (1 + ε).
        let mut p = array![[0.0]];
        let mut st = AdamState::new([(1, 1)], AdamConfig::default());
        st.step(&mut [&mut p], &[array![[1.0]]], 1e-4).unwrap();
        let expected = -1e-4 / (1.0 + 1e-8);
        assert!((p[[0, 0]] - expected).abs() < 1e-18);
        assert!((p[[0, 0]] + 9.99999e-5).abs() < 1e-10);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut p = array![[0.3, -0.7], [1.1, 0.0]];
            let mut st = AdamState::new([(2, 2)], AdamConfig::default());
            for k in 0..20 {
                let g = p.mapv(|x| 2.0 * x + k as f64 * 0.01);
                st.step(&mut [&mut p], &[g], 1e-2).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut p = array![[0.0, 0.0]];
        let mut st = AdamState::new([(1, 2)], AdamConfig::default());
        assert!(st.step(&mut [&mut p], &[array![[1.0]]], 1e-3).is_err());
    }
}
