use serde::{Deserialize, Serialize};

use super::{Mlp, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 norm the gradient is rescaled to before each step.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: Some(0.5),
        }
    }
}

/// Adam moments for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub m: Mlp<T>,
    pub v: Mlp<T>,
    pub t: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, model: &Mlp<T>) -> Self {
        Adam {
            config,
            m: model.zeros_like(),
            v: model.zeros_like(),
            t: 0,
        }
    }

    /// Clips `grads` in place, then updates `params`. Returns the gradient
    /// norm before clipping.
    pub fn step(&mut self, params: &mut Mlp<T>, grads: &mut Mlp<T>, lr: f64) -> f64 {
        let norm = grads.squared_norm().sqrt();
        if let Some(max) = self.config.max_grad_norm {
            if norm > max {
                grads.scale(T::lit(max / (norm + 1e-6)));
            }
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
        let step = T::lit(lr / bc1);
        let inv_sqrt_bc2 = T::lit(1.0 / bc2.sqrt());
        let eps = T::lit(c.eps);
        let ps = params.param_slices_mut();
        let gs = grads.param_slices();
        let ms = self.m.param_slices_mut();
        let vs = self.v.param_slices_mut();
        for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                p[i] = p[i] - step * m[i] / (v[i].sqrt() * inv_sqrt_bc2 + eps);
            }
        }
        norm
    }
}
