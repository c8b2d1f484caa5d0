//! Kernel ridge regression from latent codes back to output functions.
//!
//! The fitted map is `h(z)(y_j) = sum_i alpha_ij k_z(z, z_i) + phi_0(y_j)` with
//! `(K_z + lambda I) alpha = V - phi_0`. Off the training grid, each coefficient function
//! `alpha_i(y)` and the mean `phi_0(y)` are interpolated (multilinearly) before the sum.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::exec::{map_indices, Execution};
use crate::grid::OutputGrid;
use crate::kernels::{gram_matrix_with, KernelSpec};
use crate::linalg::Cholesky;

#[derive(Clone, Debug, PartialEq)]
pub struct RidgeModel {
    /// `N x m`.
    pub alpha: Array2<f64>,
    /// `N x p`.
    pub train_latents: Array2<f64>,
    pub kernel_z: KernelSpec,
    pub lambda: f64,
    pub mean_fn: Array1<f64>,
    pub grid: OutputGrid,
}

pub fn fit_kridge(
    z: ArrayView2<f64>,
    v: ArrayView2<f64>,
    mean_fn: ArrayView1<f64>,
    kernel_z: &KernelSpec,
    lambda: f64,
    grid: &OutputGrid,
) -> Result<RidgeModel> {
    kernel_z.validate()?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ridge regularization lambda must be positive, got {lambda}"
        )));
    }
    let n = z.nrows();
    Error::check_dim("ridge sample count", n, v.nrows())?;
    Error::check_dim("ridge mean function length", v.ncols(), mean_fn.len())?;
    Error::check_dim("ridge grid size", v.ncols(), grid.len())?;
    let mut k = gram_matrix_with(kernel_z, z, Execution::Sequential);
    for i in 0..n {
        k[[i, i]] += lambda;
    }
    let centered = &v - &mean_fn;
    let alpha = match Cholesky::factor(k.view()) {
        Ok(chol) => chol.solve(centered.view())?,
        Err(Error::NotPositiveDefinite { pivot, value }) => {
            return Err(Error::InvalidParameter(format!(
                "ridge system is singular at pivot {pivot} ({value:e}); increase lambda (currently {lambda:e})"
            )))
        }
        Err(e) => return Err(e),
    };
    Ok(RidgeModel {
        alpha,
        train_latents: z.to_owned(),
        kernel_z: *kernel_z,
        lambda,
        mean_fn: mean_fn.to_owned(),
        grid: grid.clone(),
    })
}

impl RidgeModel {
    pub fn p(&self) -> usize {
        self.train_latents.ncols()
    }

    pub fn n_train(&self) -> usize {
        self.alpha.nrows()
    }

    pub fn m(&self) -> usize {
        self.alpha.ncols()
    }

    /// `kappa_i = k_z(z, z_i)`.
    pub fn kernel_vector(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        Error::check_dim("ridge latent length", self.p(), z.len())?;
        let z = z.to_vec();
        Ok(self
            .train_latents
            .rows()
            .into_iter()
            .map(|row| {
                self.kernel_z
                    .eval_unchecked(&z, row.as_slice().expect("standard layout"))
            })
            .collect())
    }

    pub fn reconstruct_on_grid(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        let kappa = self.kernel_vector(z)?;
        Ok(self.alpha.t().dot(&kappa) + &self.mean_fn)
    }

    /// Batched grid reconstruction, one row per latent code.
    pub fn reconstruct_batch(&self, z: ArrayView2<f64>, exec: Execution) -> Result<Array2<f64>> {
        Error::check_dim("ridge latent length", self.p(), z.ncols())?;
        let rows = map_indices(exec, z.nrows(), |i| {
            self.reconstruct_on_grid(z.row(i)).expect("latent length checked")
        });
        let m = self.m();
        let flat: Vec<f64> = rows.into_iter().flat_map(Array1::into_iter).collect();
        Ok(Array2::from_shape_vec((z.nrows(), m), flat).expect("row-major shape"))
    }

    /// Evaluate at arbitrary points (rows of `coords`) inside the grid's bounding box.
    /// Result shape is `(fields, points)`.
    pub fn reconstruct_at(&self, z: ArrayView1<f64>, coords: ArrayView2<f64>) -> Result<Array2<f64>> {
        let kappa = self.kernel_vector(z)?;
        let stencils = self.grid.stencils(coords)?;
        let n = self.n_train();
        let mut out = Array2::zeros((stencils.len(), coords.nrows()));
        let mut alpha_y = vec![0.0; n];
        for (f, per_point) in stencils.iter().enumerate() {
            for (j, stencil) in per_point.iter().enumerate() {
                // alpha_i(y) and phi_0(y) by interpolation, then the kernel expansion.
                alpha_y.iter_mut().for_each(|a| *a = 0.0);
                let mut phi0 = 0.0;
                for &(row, w) in stencil {
                    for (a, &coef) in alpha_y.iter_mut().zip(self.alpha.column(row)) {
                        *a += w * coef;
                    }
                    phi0 += w * self.mean_fn[row];
                }
                let s = alpha_y.iter().zip(&kappa).fold(0.0, |acc, (a, k)| acc + a * k);
                out[[f, j]] = s + phi0;
            }
        }
        Ok(out)
    }
}
