//! Shipped kernel and network settings for the three benchmark problems.
//!
//! Only `1d-nonlinear` has a bundled data generator; `cavity` and `navier-stokes` need
//! user-supplied datasets. The Navier-Stokes branch net is convolutional in the original
//! setting; here it falls back to the same MLP as the other problems.

use crate::branch::{OptimizerKind, TrainConfig};
use crate::kernels::KernelSpec;
use crate::operator::{OperatorConfig, Variant};

#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub kernel_v: KernelSpec,
    pub kernel_z: KernelSpec,
    pub lambda: f64,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
    pub hidden: Vec<usize>,
    pub n_train: usize,
    pub n_test: usize,
    /// Whether the problem's data can be generated locally.
    pub generated: bool,
}

pub const PRESET_NAMES: [&str; 3] = ["1d-nonlinear", "cavity", "navier-stokes"];

fn k(gamma: f64, offset: f64, degree: u32) -> KernelSpec {
    KernelSpec {
        gamma,
        offset,
        degree,
    }
}

pub fn preset(name: &str) -> Option<Preset> {
    let hidden = vec![64; 4];
    let p = match name {
        "1d-nonlinear" => Preset {
            name: "1d-nonlinear",
            kernel_v: k(1.0, 0.0, 1),
            kernel_z: k(1.0, 0.0, 2),
            lambda: 1e-3,
            optimizer: OptimizerKind::Adam,
            weight_decay: 0.0,
            hidden,
            n_train: 51,
            n_test: 51,
            generated: true,
        },
        "cavity" => Preset {
            name: "cavity",
            kernel_v: k(1.0, 1.0, 1),
            kernel_z: k(0.01, 1.0, 2),
            lambda: 1e-6,
            optimizer: OptimizerKind::Adam,
            weight_decay: 0.0,
            hidden,
            n_train: 100,
            n_test: 10,
            generated: false,
        },
        "navier-stokes" => Preset {
            name: "navier-stokes",
            kernel_v: k(1.0, 0.0, 1),
            kernel_z: k(1e-3, 0.1, 2),
            lambda: 1e-3,
            optimizer: OptimizerKind::AdamW,
            weight_decay: 1e-4,
            hidden,
            n_train: 1000,
            n_test: 200,
            generated: false,
        },
        _ => return None,
    };
    Some(p)
}

impl Preset {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            optimizer: self.optimizer,
            weight_decay: self.weight_decay,
            ..TrainConfig::default()
        }
    }

    pub fn operator_config(&self, variant: Variant, p: usize) -> OperatorConfig {
        let mut cfg = match variant {
            Variant::Kpca => OperatorConfig::kpca(p, self.kernel_v, self.kernel_z, self.lambda),
            Variant::Pod => OperatorConfig::pod(p),
        };
        cfg.hidden = self.hidden.clone();
        cfg.train = self.train_config();
        cfg
    }
}
