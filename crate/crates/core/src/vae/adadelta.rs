use serde::{Deserialize, Serialize};

use super::VaeParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaDeltaConfig {
    pub rho: f64,
    pub eps: f64,
    pub base_lr: f64,
}

impl Default for AdaDeltaConfig {
    fn default() -> Self {
        Self {
            rho: 0.95,
            eps: 1e-6,
            base_lr: 1.0,
        }
    }
}

/// One AdaDelta update over a flat parameter slice.
pub fn adadelta_update(
    params: &mut [f64],
    grads: &[f64],
    sq_grad: &mut [f64],
    sq_update: &mut [f64],
    cfg: &AdaDeltaConfig,
) {
    let AdaDeltaConfig { rho, eps, base_lr } = *cfg;
    for i in 0..params.len() {
        let g = grads[i];
        sq_grad[i] = rho * sq_grad[i] + (1.0 - rho) * g * g;
        let step = -base_lr * libm::sqrt(sq_update[i] + eps) / libm::sqrt(sq_grad[i] + eps) * g;
        sq_update[i] = rho * sq_update[i] + (1.0 - rho) * step * step;
        params[i] += step;
    }
}

/// Running averages of squared gradients and squared updates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaDeltaState {
    pub cfg: AdaDeltaConfig,
    pub sq_grad: VaeParams,
    pub sq_update: VaeParams,
}

impl AdaDeltaState {
    pub fn new(params: &VaeParams, cfg: AdaDeltaConfig) -> Self {
        Self {
            cfg,
            sq_grad: params.zeros_like(),
            sq_update: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut VaeParams, grads: &VaeParams) {
        for (((p, g), eg), ex) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.sq_grad.tensors_mut())
            .zip(self.sq_update.tensors_mut())
        {
            adadelta_update(p, g, eg, ex, &self.cfg);
        }
    }
}
