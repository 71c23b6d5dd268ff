use log::warn;

use crate::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam over a fixed list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    /// Steps skipped because a gradient contained NaN or infinity.
    pub skipped: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        Self {
            config,
            step: 0,
            skipped: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    /// Returns `false` when the step was skipped.
    pub fn update(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> bool {
        assert_eq!(params.len(), grads.len(), "parameter/gradient count mismatch");
        assert_eq!(params.len(), self.m.len(), "optimizer built for a different parameter list");
        if !grads.iter().all(Tensor::is_finite) {
            self.skipped += 1;
            warn!("non-finite gradient, skipping Adam step ({} skipped so far)", self.skipped);
            return false;
        }
        self.step += 1;
        let c = self.config;
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let one = T::one();
        let bc1 = T::lit(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::lit(1.0 - c.beta2.powi(self.step as i32));
        let lr = T::lit(c.lr);
        let eps = T::lit(c.eps);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(p.shape(), g.shape(), "gradient shape mismatch");
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for (i, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = b1 * m[i] + (one - b1) * gv;
                v[i] = b2 * v[i] + (one - b2) * gv * gv;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *pv = *pv - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        true
    }
}
