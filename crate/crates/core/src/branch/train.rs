use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{init_mlp, MlpParams};
use super::optim::{Adam, InverseTimeDecay, OptimizerKind};
use crate::error::{Error, Result};

/// Separates the shuffling stream from the initialisation stream of the same seed.
const SHUFFLE_STREAM: u64 = 0x5DEE_CE66_D1CE_4E5B;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub base_lr: f64,
    pub decay_rate: f64,
    /// Steps per decay unit; `None` means one epoch.
    pub decay_steps: Option<u64>,
    pub weight_decay: f64,
    /// Mini-batch size; `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            base_lr: 1e-3,
            decay_rate: 0.1,
            decay_steps: Some(1000),
            weight_decay: 0.0,
            batch_size: None,
            epochs: 20_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr.is_finite() && self.base_lr >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "base_lr must be nonnegative, got {}",
                self.base_lr
            )));
        }
        if !(self.decay_rate.is_finite() && self.decay_rate >= 0.0) {
            return Err(Error::InvalidParameter("decay_rate must be nonnegative".into()));
        }
        if self.decay_steps == Some(0) {
            return Err(Error::InvalidParameter("decay_steps must be at least 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidParameter("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidParameter("weight_decay must be nonnegative".into()));
        }
        // configs and model headers are TOML, whose integers are signed 64-bit
        if self.seed > i64::MAX as u64 {
            return Err(Error::InvalidParameter(format!("seed must not exceed {}", i64::MAX)));
        }
        Ok(())
    }

    pub fn schedule(&self, steps_per_epoch: usize) -> InverseTimeDecay {
        InverseTimeDecay {
            base_lr: self.base_lr,
            decay_rate: self.decay_rate,
            decay_steps: self.decay_steps.unwrap_or(steps_per_epoch as u64) as f64,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    /// Mean per-sample loss over each epoch, evaluated before each step.
    pub epoch_loss: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
}

impl LossReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_loss.last().copied()
    }
}

fn gather_rows(a: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    a.select(Axis(0), idx)
}

/// Fit `layer_sizes` to map `inputs` onto `targets` by minimising the batch-mean squared
/// error. Deterministic for a fixed seed.
pub fn train_branch(
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    layer_sizes: &[usize],
    config: &TrainConfig,
) -> Result<(MlpParams, LossReport)> {
    config.validate()?;
    let n = inputs.nrows();
    if n == 0 {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    Error::check_dim("branch target rows", n, targets.nrows())?;
    let params = init_mlp(layer_sizes, config.seed)?;
    Error::check_dim("branch input width", params.input_dim(), inputs.ncols())?;
    Error::check_dim("branch output width", params.output_dim(), targets.ncols())?;
    train_from(params, inputs, targets, config)
}

/// Continue training from given parameters.
pub fn train_from(
    mut params: MlpParams,
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    config: &TrainConfig,
) -> Result<(MlpParams, LossReport)> {
    config.validate()?;
    let n = inputs.nrows();
    let batch = config.batch_size.unwrap_or(n).min(n);
    let steps_per_epoch = n.div_ceil(batch);
    let schedule = config.schedule(steps_per_epoch);
    let mut opt = Adam::new(config.optimizer, config.weight_decay, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    let full_batch = batch == n;
    let mut report = LossReport {
        epoch_loss: Vec::with_capacity(config.epochs),
        epoch_seconds: Vec::with_capacity(config.epochs),
    };
    for epoch in 0..config.epochs {
        let start = Instant::now();
        if !full_batch {
            order.shuffle(&mut rng);
        }
        let mut weighted = 0.0;
        for chunk in order.chunks(batch) {
            let lr = schedule.lr(opt.steps_taken());
            let (loss, grads) = if full_batch {
                params.backward(inputs, targets)?
            } else {
                let x = gather_rows(inputs, chunk);
                let y = gather_rows(targets, chunk);
                params.backward(x.view(), y.view())?
            };
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            weighted += loss * chunk.len() as f64;
            opt.step(&mut params, &grads, lr);
        }
        report.epoch_loss.push(weighted / n as f64);
        report.epoch_seconds.push(start.elapsed().as_secs_f64());
    }
    if !params.is_finite() {
        return Err(Error::Diverged {
            epoch: config.epochs,
            loss: f64::NAN,
        });
    }
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn linear_problem(n: usize) -> (Array2<f64>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let w = ndarray::array![[0.5, -1.0], [2.0, 0.25]];
        let y = x.dot(&w);
        (x, y)
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let (x, y) = linear_problem(8);
        let cfg = TrainConfig {
            base_lr: 0.0,
            epochs: 5,
            batch_size: Some(3),
            ..TrainConfig::default()
        };
        let (params, report) = train_branch(x.view(), y.view(), &[2, 4, 2], &cfg).unwrap();
        assert_eq!(params, init_mlp(&[2, 4, 2], cfg.seed).unwrap());
        let first = report.epoch_loss[0];
        assert!(report.epoch_loss.iter().all(|&l| (l - first).abs() < 1e-12 * first));
    }

    #[test]
    fn learns_linear_map() {
        let (x, y) = linear_problem(16);
        let cfg = TrainConfig {
            base_lr: 1e-2,
            epochs: 3000,
            decay_rate: 0.0,
            ..TrainConfig::default()
        };
        let (params, report) = train_branch(x.view(), y.view(), &[2, 2], &cfg).unwrap();
        assert!(report.final_loss().unwrap() < 1e-6, "{:?}", report.final_loss());
        assert!(params.is_finite());
    }

    #[test]
    fn deterministic_and_adamw_zero_decay_matches_adam() {
        let (x, y) = linear_problem(10);
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: Some(4),
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train_branch(x.view(), y.view(), &[2, 8, 2], &cfg).unwrap().0;
        let b = train_branch(x.view(), y.view(), &[2, 8, 2], &cfg).unwrap().0;
        assert_eq!(a, b);
        let cfg_w = TrainConfig {
            optimizer: OptimizerKind::AdamW,
            weight_decay: 0.0,
            ..cfg
        };
        let c = train_branch(x.view(), y.view(), &[2, 8, 2], &cfg_w).unwrap().0;
        assert_eq!(a, c);
    }

    #[test]
    fn divergence_is_reported() {
        let (x, y) = linear_problem(6);
        let y = y * 1e300;
        let cfg = TrainConfig {
            base_lr: 1e3,
            epochs: 50,
            ..TrainConfig::default()
        };
        let err = train_branch(x.view(), y.view(), &[2, 4, 2], &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }

    #[test]
    fn config_validation() {
        let (x, y) = linear_problem(4);
        for bad in [
            TrainConfig { epochs: 0, ..TrainConfig::default() },
            TrainConfig { batch_size: Some(0), ..TrainConfig::default() },
            TrainConfig { base_lr: -1.0, ..TrainConfig::default() },
            TrainConfig { decay_steps: Some(0), ..TrainConfig::default() },
        ] {
            assert!(train_branch(x.view(), y.view(), &[2, 2], &bad).is_err());
        }
        let ok = TrainConfig { epochs: 1, ..TrainConfig::default() };
        assert!(train_branch(x.view(), y.view(), &[3, 2], &ok).is_err());
    }
}
