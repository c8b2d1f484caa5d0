//! Branch network: a tanh MLP regressing latent codes from discretised input functions.

mod mlp;
mod optim;
mod scale;
mod train;

pub use mlp::{glorot_limit, init_mlp, loss_mse, Dense, MlpParams};
pub use optim::{Adam, InverseTimeDecay, OptimizerKind, BETA1, BETA2, EPSILON};
pub use scale::{Scaling, Standardizer};
pub use train::{train_branch, train_from, LossReport, TrainConfig};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Trained branch net together with the input and latent rescalings it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchNet {
    pub input_scaler: Standardizer,
    pub latent_scaler: Standardizer,
    pub mlp: MlpParams,
}

impl BranchNet {
    /// Standardise, train, and wrap.
    pub fn fit(
        inputs: ArrayView2<f64>,
        latents: ArrayView2<f64>,
        hidden: &[usize],
        latent_scaling: Scaling,
        config: &TrainConfig,
    ) -> Result<(Self, LossReport)> {
        let input_scaler = Standardizer::fit(inputs, Scaling::PerColumn);
        let latent_scaler = Standardizer::fit(latents, latent_scaling);
        let x = input_scaler.apply(inputs);
        let y = latent_scaler.apply(latents);
        let mut sizes = vec![inputs.ncols()];
        sizes.extend_from_slice(hidden);
        sizes.push(latents.ncols());
        let (mlp, report) = train_branch(x.view(), y.view(), &sizes, config)?;
        Ok((
            BranchNet {
                input_scaler,
                latent_scaler,
                mlp,
            },
            report,
        ))
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    /// Latent codes in the reducer's units.
    pub fn predict(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        Error::check_dim("branch input width", self.input_dim(), inputs.ncols())?;
        let x = self.input_scaler.apply(inputs);
        let y = self.mlp.forward(x.view())?;
        Ok(self.latent_scaler.invert(y.view()))
    }

    pub fn predict_one(&self, input: ArrayView1<f64>) -> Result<Array1<f64>> {
        let x = input.insert_axis(ndarray::Axis(0));
        Ok(self.predict(x)?.row(0).to_owned())
    }
}
