//! Operator learning with kernel PCA latent spaces.
//!
//! Output functions are compressed with kernel PCA (or POD as a baseline), a tanh MLP maps
//! discretised inputs to latent codes, and kernel ridge regression maps latent codes back
//! to output functions.

pub mod branch;
pub mod data;
pub mod error;
pub mod exec;
pub mod format;
pub mod grid;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod operator;
pub mod presets;
pub mod reconstruction;
pub mod reduction;

pub use data::FieldDataset;
pub use error::{Error, Result};
pub use exec::Execution;
pub use kernels::KernelSpec;
pub use metrics::{rel_l2, rel_l2_flat, run_trials, TrialStats};
pub use operator::{train_operator, OperatorConfig, OperatorModel, Variant};
