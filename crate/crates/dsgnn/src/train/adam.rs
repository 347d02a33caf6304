//! Bias-corrected adaptive moment optimizer.

use crate::tensor::{Scalar, Tensor};

/// Per-parameter first/second moment estimates plus the step counter.
pub struct AdamState<T> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: usize,
}

impl<T: Scalar> AdamState<T> {
    /// Zero-initialized moments mirroring the given parameter shapes.
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        Self {
            m: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// One update: `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`,
    /// `p <- p - lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<T>],
        grads: &[&Tensor<T>],
        lr: f64,
        betas: (f64, f64),
        eps: f64,
    ) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let (b1, b2) = betas;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        let b1t = T::from_f64(b1);
        let b2t = T::from_f64(b2);
        let one_minus_b1 = T::from_f64(1.0 - b1);
        let one_minus_b2 = T::from_f64(1.0 - b2);
        let inv_bc1 = T::from_f64(1.0 / bc1);
        let inv_bc2 = T::from_f64(1.0 / bc2);
        let lr_t = T::from_f64(lr);
        let eps_t = T::from_f64(eps);

        for i in 0..params.len() {
            debug_assert_eq!(params[i].shape(), grads[i].shape());
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params[i].data_mut();
            let g = grads[i].data();
            for k in 0..g.len() {
                m[k] = b1t * m[k] + one_minus_b1 * g[k];
                v[k] = b2t * v[k] + one_minus_b2 * g[k] * g[k];
                let m_hat = m[k] * inv_bc1;
                let v_hat = v[k] * inv_bc2;
                p[k] = p[k] - lr_t * m_hat / (v_hat.sqrt() + eps_t);
            }
        }
    }
}
