//! Polynomial kernels `k(x, y) = (gamma * <x, y> + c)^d` and the Gram / cross-kernel
//! matrices built from them.
//!
//! With `gamma > 0`, `c >= 0` and integer `d >= 1` the kernel is positive semidefinite,
//! which both the kernel PCA eigenproblem and the ridge system rely on.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indices, Execution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub gamma: f64,
    #[serde(rename = "c")]
    pub offset: f64,
    #[serde(rename = "d")]
    pub degree: u32,
}

impl KernelSpec {
    pub fn new(gamma: f64, offset: f64, degree: u32) -> Result<Self> {
        let spec = KernelSpec {
            gamma,
            offset,
            degree,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `<x, y>`.
    pub fn linear() -> Self {
        KernelSpec {
            gamma: 1.0,
            offset: 0.0,
            degree: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.offset.is_finite() && self.offset >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel offset c must be nonnegative, got {}",
                self.offset
            )));
        }
        if self.degree == 0 {
            return Err(Error::InvalidParameter(
                "kernel degree d must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Kernel value for two equal-length slices.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Error::check_dim("kernel_eval", x.len(), y.len())?;
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        self.apply(dot(x, y))
    }

    /// Map an inner product through `(gamma * s + c)^d`.
    #[inline]
    pub(crate) fn apply(&self, inner: f64) -> f64 {
        powi_exact(self.gamma * inner + self.offset, self.degree)
    }
}

/// Fixed-order dot product (left to right), so results never depend on SIMD width.
#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).fold(0.0, |acc, (a, b)| acc + a * b)
}

/// Integer power by square-and-multiply, identical on every platform.
#[inline]
pub(crate) fn powi_exact(base: f64, exp: u32) -> f64 {
    match exp {
        1 => base,
        2 => base * base,
        _ => {
            let mut result = 1.0;
            let mut b = base;
            let mut e = exp;
            while e > 0 {
                if e & 1 == 1 {
                    result *= b;
                }
                b *= b;
                e >>= 1;
            }
            result
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
    Error::check_dim("kernel_eval", x.len(), y.len())?;
    Ok(spec.apply(x.iter().zip(y.iter()).fold(0.0, |acc, (a, b)| acc + a * b)))
}

/// Gram matrix over the rows of `x`. Only the upper triangle is evaluated; the lower one is a
/// mirror, so the result is symmetric bit for bit.
pub fn gram_matrix(spec: &KernelSpec, x: ArrayView2<f64>) -> Array2<f64> {
    gram_matrix_with(spec, x, Execution::default())
}

pub fn gram_matrix_with(spec: &KernelSpec, x: ArrayView2<f64>, exec: Execution) -> Array2<f64> {
    let n = x.nrows();
    let x = x.as_standard_layout();
    let rows: Vec<&[f64]> = x.rows().into_iter().map(|r| r.to_slice().unwrap()).collect();
    let upper = map_indices(exec, n, |i| {
        (i..n)
            .map(|j| spec.eval_unchecked(rows[i], rows[j]))
            .collect::<Vec<_>>()
    });
    let mut k = Array2::zeros((n, n));
    for (i, row) in upper.into_iter().enumerate() {
        for (offset, v) in row.into_iter().enumerate() {
            let j = i + offset;
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// `C[i][j] = k(x_i, y_j)`.
pub fn cross_kernel(spec: &KernelSpec, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<Array2<f64>> {
    cross_kernel_with(spec, x, y, Execution::Sequential)
}

pub fn cross_kernel_with(
    spec: &KernelSpec,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    exec: Execution,
) -> Result<Array2<f64>> {
    Error::check_dim("cross_kernel columns", x.ncols(), y.ncols())?;
    let (n, m) = (x.nrows(), y.nrows());
    let x = x.as_standard_layout();
    let y = y.as_standard_layout();
    let xs: Vec<&[f64]> = x.rows().into_iter().map(|r| r.to_slice().unwrap()).collect();
    let ys: Vec<&[f64]> = y.rows().into_iter().map(|r| r.to_slice().unwrap()).collect();
    let rows = map_indices(exec, n, |i| {
        ys.iter()
            .map(|yj| spec.eval_unchecked(xs[i], yj))
            .collect::<Vec<_>>()
    });
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((n, m), flat).expect("row-major shape"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn eval_examples() {
        let lin = KernelSpec::new(1.0, 0.0, 1).unwrap();
        let quad = KernelSpec::new(1.0, 0.0, 2).unwrap();
        assert_eq!(lin.eval(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert_eq!(quad.eval(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 121.0);
        let cavity_z = KernelSpec::new(0.01, 1.0, 2).unwrap();
        assert_eq!(cavity_z.eval(&[0.0, 0.0, 0.0], &[5.0, -2.0, 9.0]).unwrap(), 1.0);
    }

    #[test]
    fn eval_rejects_length_mismatch() {
        let err = KernelSpec::linear().eval(&[1.0, 2.0], &[1.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        let err = kernel_eval(&KernelSpec::linear(), array![1.0].view(), array![1.0, 2.0].view());
        assert!(err.is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(KernelSpec::new(0.0, 0.0, 1).is_err());
        assert!(KernelSpec::new(1.0, -0.5, 1).is_err());
        assert!(KernelSpec::new(1.0, 0.0, 0).is_err());
        assert!(KernelSpec::new(f64::NAN, 0.0, 1).is_err());
    }

    #[test]
    fn powi_matches_repeated_product() {
        for d in 1..9 {
            let x: f64 = 1.37;
            let naive = (0..d).fold(1.0, |acc, _| acc * x);
            assert!((powi_exact(x, d) - naive).abs() <= 1e-14 * naive.abs());
        }
    }

    #[test]
    fn gram_small_cases() {
        let lin = KernelSpec::linear();
        let k = gram_matrix(&lin, array![[3.0, 4.0]].view());
        assert_eq!(k, array![[25.0]]);
        let k = gram_matrix(&lin, array![[1.0], [2.0]].view());
        assert_eq!(k, array![[1.0, 2.0], [2.0, 4.0]]);
    }

    #[test]
    fn quadratic_gram_is_square_of_linear() {
        let x = random_matrix(5, 3, 11);
        let lin = gram_matrix(&KernelSpec::linear(), x.view());
        let quad = gram_matrix(&KernelSpec::new(1.0, 0.0, 2).unwrap(), x.view());
        for i in 0..5 {
            for j in 0..5 {
                // brute force: explicit sum then square
                let s: f64 = (0..3).map(|k| x[[i, k]] * x[[j, k]]).sum();
                assert!((quad[[i, j]] - s * s).abs() < 1e-14);
                assert!((quad[[i, j]] - lin[[i, j]] * lin[[i, j]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cross_kernel_matches_double_loop() {
        let spec = KernelSpec::new(0.7, 0.3, 3).unwrap();
        let x = random_matrix(4, 2, 1);
        let y = random_matrix(3, 2, 2);
        let c = cross_kernel(&spec, x.view(), y.view()).unwrap();
        assert_eq!(c.dim(), (4, 3));
        for i in 0..4 {
            for j in 0..3 {
                let s = x[[i, 0]] * y[[j, 0]] + x[[i, 1]] * y[[j, 1]];
                let expect = (0.7 * s + 0.3) * (0.7 * s + 0.3) * (0.7 * s + 0.3);
                assert!((c[[i, j]] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cross_kernel_of_self_is_gram() {
        let spec = KernelSpec::new(1.0, 1.0, 2).unwrap();
        let x = random_matrix(6, 4, 3);
        let c = cross_kernel(&spec, x.view(), x.view()).unwrap();
        let g = gram_matrix(&spec, x.view());
        assert_eq!(c, g);
    }

    #[test]
    fn cross_kernel_single_row_is_column() {
        let spec = KernelSpec::linear();
        let x = random_matrix(5, 2, 4);
        let y = array![[0.5, -1.0]];
        let c = cross_kernel(&spec, x.view(), y.view()).unwrap();
        for i in 0..5 {
            assert_eq!(c[[i, 0]], spec.eval(&[x[[i, 0]], x[[i, 1]]], &[0.5, -1.0]).unwrap());
        }
        assert!(cross_kernel(&spec, x.view(), array![[1.0]].view()).is_err());
    }

    #[test]
    fn parallel_gram_identical_to_sequential() {
        let spec = KernelSpec::new(0.5, 0.1, 2).unwrap();
        let x = random_matrix(40, 7, 9);
        let a = gram_matrix_with(&spec, x.view(), Execution::Sequential);
        let b = gram_matrix_with(&spec, x.view(), Execution::Parallel);
        assert_eq!(a, b);
    }
}
