use serde::{Deserialize, Serialize};

use super::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update; `step` is 1-based. Gradients are left
/// untouched and frozen blocks are skipped.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig, lr: f64, step: u64) {
    assert!(step >= 1, "Adam steps are 1-based");
    let bc1 = 1.0 - cfg.beta1.powf(step as f64);
    let bc2 = 1.0 - cfg.beta2.powf(step as f64);
    let blocks: Vec<(usize, usize, bool)> =
        store.blocks().iter().enumerate().map(|(i, b)| (b.offset, b.len, store.is_frozen(i))).collect();
    let ParamStore { values, grads, m, v, .. } = store;
    for (offset, len, frozen) in blocks {
        if frozen {
            continue;
        }
        for i in offset..offset + len {
            let g = grads[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            values[i] -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

/// Step-wise geometric decay: `base * decay^(step / interval)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub decay: f64,
    pub interval: u64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule { base_lr: 5e-2, decay: 0.97, interval: 600 }
    }
}

impl LrSchedule {
    pub fn lr(&self, step: u64) -> f64 {
        self.base_lr * self.decay.powi((step / self.interval.max(1)) as i32)
    }
}
