use serde::{Deserialize, Serialize};

use super::mlp::MlpParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    AdamW,
}

/// `lr_t = base_lr / (1 + decay_rate * t / decay_steps)`, `t` counting completed steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InverseTimeDecay {
    pub base_lr: f64,
    pub decay_rate: f64,
    pub decay_steps: f64,
}

impl InverseTimeDecay {
    pub fn lr(&self, step: u64) -> f64 {
        self.base_lr / (1.0 + self.decay_rate * step as f64 / self.decay_steps)
    }
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with bias-corrected moments; AdamW adds decoupled weight decay
/// `theta -= lr * wd * theta` before the adaptive step.
#[derive(Clone, Debug)]
pub struct Adam {
    kind: OptimizerKind,
    weight_decay: f64,
    first: MlpParams,
    second: MlpParams,
    step: u64,
}

impl Adam {
    pub fn new(kind: OptimizerKind, weight_decay: f64, params: &MlpParams) -> Self {
        Adam {
            kind,
            weight_decay: if kind == OptimizerKind::AdamW { weight_decay } else { 0.0 },
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        let decoupled = self.kind == OptimizerKind::AdamW;
        let wd = self.weight_decay;
        for (((theta, g), m), v) in params
            .blocks_mut()
            .zip(grads.blocks())
            .zip(self.first.blocks_mut())
            .zip(self.second.blocks_mut())
        {
            for i in 0..theta.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                if decoupled {
                    theta[i] -= lr * wd * theta[i];
                }
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
    }
}
