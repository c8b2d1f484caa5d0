//! Latent maps for output snapshots: POD (linear) and kernel PCA.
//!
//! Both fit on the `N x m` matrix of training outputs, subtract the mean function first and
//! work through the `N x N` snapshot Gram matrix (method of snapshots).
//!
//! Kernel PCA double-centres the Gram matrix in feature space,
//! `K~ = K - 1K - K1 + 1K1` with `1` the constant `1/N` matrix, keeps the top `p` eigenpairs
//! `(lambda_k, u_k)` and scales the expansion coefficients `a_k = u_k / sqrt(lambda_k)` so the
//! feature-space axes have unit norm. A snapshot `v` projects to `z_k = sum_i a_ik k~(v, V_i)`;
//! for training snapshots this is `sqrt(lambda_k) u_ik`, which for the linear kernel coincides
//! with the POD coefficients up to sign.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::kernels::{gram_matrix_with, KernelSpec};
use crate::linalg::sym_eig;
use crate::Execution;

/// Components with eigenvalue below this fraction of the largest are numerically zero.
pub const RANK_EPS: f64 = 1e-10;

fn column_mean(v: ArrayView2<f64>) -> Array1<f64> {
    v.mean_axis(Axis(0)).expect("at least one snapshot")
}

fn check_finite(v: ArrayView2<f64>, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PodModel {
    pub mean_fn: Array1<f64>,
    /// `m x p`, orthonormal columns.
    pub basis: Array2<f64>,
    /// Descending, length `p`.
    pub singular_values: Array1<f64>,
    latents: Array2<f64>,
}

impl PodModel {
    pub fn p(&self) -> usize {
        self.basis.ncols()
    }

    pub fn m(&self) -> usize {
        self.basis.nrows()
    }

    pub(crate) fn from_parts(
        mean_fn: Array1<f64>,
        basis: Array2<f64>,
        singular_values: Array1<f64>,
        latents: Array2<f64>,
    ) -> Self {
        PodModel {
            mean_fn,
            basis,
            singular_values,
            latents,
        }
    }

    pub fn project(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        Error::check_dim("project_pod snapshot length", self.m(), v.len())?;
        let centered = &v - &self.mean_fn;
        Ok(self.basis.t().dot(&centered))
    }

    pub fn latent_codes(&self) -> &Array2<f64> {
        &self.latents
    }

    /// `basis z + mean_fn`.
    pub fn reconstruct(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        Error::check_dim("POD latent length", self.p(), z.len())?;
        Ok(self.basis.dot(&z) + &self.mean_fn)
    }
}

pub fn fit_pod(v: ArrayView2<f64>, p: usize) -> Result<PodModel> {
    let (n, m) = v.dim();
    if p == 0 || p > n.min(m) {
        return Err(Error::InvalidParameter(format!(
            "POD latent dimension {p} must lie in 1..={}",
            n.min(m)
        )));
    }
    check_finite(v, "training outputs")?;
    let mean_fn = column_mean(v);
    let centered = &v - &mean_fn;
    let gram = gram_matrix_with(&KernelSpec::linear(), centered.view(), Execution::Sequential);
    let eig = sym_eig(gram.view())?;
    let cutoff = RANK_EPS * eig.eigenvalues[0].max(0.0);

    let mut basis = Array2::<f64>::zeros((m, p));
    let mut singular_values = Array1::zeros(p);
    let mut filled = 0;
    for k in 0..p {
        let lambda = eig.eigenvalues[k];
        if lambda <= cutoff || lambda <= 0.0 {
            break;
        }
        let sigma = lambda.sqrt();
        let col = centered.t().dot(&eig.eigenvectors.column(k)) / sigma;
        basis.column_mut(k).assign(&col);
        singular_values[k] = sigma;
        filled += 1;
    }
    // Directions without variance: complete to an orthonormal set.
    if filled < p {
        complete_orthonormal(&mut basis, filled);
    }
    let latents = centered.dot(&basis);
    Ok(PodModel {
        mean_fn,
        basis,
        singular_values,
        latents,
    })
}

/// Fill columns `filled..` of `basis` with unit vectors orthogonal to all previous columns
/// (Gram-Schmidt over the canonical basis, applied twice for stability).
fn complete_orthonormal(basis: &mut Array2<f64>, filled: usize) {
    let (m, p) = basis.dim();
    let mut col = filled;
    for e in 0..m {
        if col == p {
            break;
        }
        let mut cand = Array1::<f64>::zeros(m);
        cand[e] = 1.0;
        for _ in 0..2 {
            for k in 0..col {
                let proj = basis.column(k).dot(&cand);
                cand.scaled_add(-proj, &basis.column(k));
            }
        }
        let norm = cand.dot(&cand).sqrt();
        if norm > 1e-8 {
            basis.column_mut(col).assign(&(cand / norm));
            col += 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KpcaModel {
    pub mean_fn: Array1<f64>,
    pub kernel_v: KernelSpec,
    /// `N x m`, training snapshots minus `mean_fn`.
    pub training_outputs_centered: Array2<f64>,
    pub gram_row_means: Array1<f64>,
    pub gram_total_mean: f64,
    /// Trace of the centred Gram matrix (total feature-space variance times `N`).
    pub centered_trace: f64,
    /// Descending, strictly positive, length `p`.
    pub eigvals: Array1<f64>,
    /// `N x p`, column `k` is `u_k / sqrt(lambda_k)`.
    pub scaled_eigvecs: Array2<f64>,
    latents: Array2<f64>,
}

impl KpcaModel {
    pub fn p(&self) -> usize {
        self.eigvals.len()
    }

    pub fn m(&self) -> usize {
        self.mean_fn.len()
    }

    pub fn n_train(&self) -> usize {
        self.training_outputs_centered.nrows()
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        mean_fn: Array1<f64>,
        kernel_v: KernelSpec,
        training_outputs_centered: Array2<f64>,
        gram_row_means: Array1<f64>,
        gram_total_mean: f64,
        centered_trace: f64,
        eigvals: Array1<f64>,
        scaled_eigvecs: Array2<f64>,
        latents: Array2<f64>,
    ) -> Self {
        KpcaModel {
            mean_fn,
            kernel_v,
            training_outputs_centered,
            gram_row_means,
            gram_total_mean,
            centered_trace,
            eigvals,
            scaled_eigvecs,
            latents,
        }
    }

    /// Fraction of the centred feature-space variance captured by the retained components.
    pub fn captured_fraction(&self) -> f64 {
        self.eigvals.sum() / self.centered_trace
    }

    /// Centred kernel vector `k~(v, V_i)` for a new snapshot.
    fn centered_kernel_vector(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        Error::check_dim("project_kpca snapshot length", self.m(), v.len())?;
        let centered: Vec<f64> = v.iter().zip(&self.mean_fn).map(|(a, b)| a - b).collect();
        let n = self.n_train();
        let mut kappa = Array1::zeros(n);
        for (i, row) in self.training_outputs_centered.rows().into_iter().enumerate() {
            kappa[i] = self
                .kernel_v
                .eval_unchecked(&centered, row.as_slice().expect("standard layout"));
        }
        let mean = kappa.sum() / n as f64;
        Ok(kappa
            .iter()
            .zip(&self.gram_row_means)
            .map(|(k, r)| k - mean - r + self.gram_total_mean)
            .collect())
    }

    pub fn project(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        let kappa = self.centered_kernel_vector(v)?;
        Ok(self.scaled_eigvecs.t().dot(&kappa))
    }

    pub fn latent_codes(&self) -> &Array2<f64> {
        &self.latents
    }
}

pub fn fit_kpca(v: ArrayView2<f64>, kernel_v: &KernelSpec, p: usize) -> Result<KpcaModel> {
    fit_kpca_with(v, kernel_v, p, Execution::default())
}

pub fn fit_kpca_with(
    v: ArrayView2<f64>,
    kernel_v: &KernelSpec,
    p: usize,
    exec: Execution,
) -> Result<KpcaModel> {
    kernel_v.validate()?;
    let n = v.nrows();
    if p == 0 || p > n {
        return Err(Error::InvalidParameter(format!(
            "KPCA latent dimension {p} must lie in 1..={n}"
        )));
    }
    check_finite(v, "training outputs")?;
    let mean_fn = column_mean(v);
    let centered = (&v - &mean_fn).as_standard_layout().to_owned();
    let gram = gram_matrix_with(kernel_v, centered.view(), exec);
    let row_means = gram.mean_axis(Axis(1)).expect("nonempty");
    let total_mean = row_means.sum() / n as f64;
    let mut kc = gram;
    for i in 0..n {
        for j in 0..n {
            kc[[i, j]] += total_mean - row_means[i] - row_means[j];
        }
    }
    // Restore exact symmetry lost to the order of the additions above.
    for i in 0..n {
        for j in 0..i {
            kc[[i, j]] = kc[[j, i]];
        }
    }
    let trace = kc.diag().sum();
    let eig = sym_eig(kc.view())?;
    let lmax = eig.eigenvalues[0];
    let usable = if lmax > 0.0 {
        eig.eigenvalues
            .iter()
            .take_while(|&&l| l > RANK_EPS * lmax)
            .count()
    } else {
        0
    };
    if usable < p {
        return Err(Error::RankDeficient {
            requested: p,
            usable,
        });
    }
    let eigvals = eig.eigenvalues.slice(s![..p]).to_owned();
    let mut scaled = eig.eigenvectors.slice(s![.., ..p]).to_owned();
    for (mut col, &l) in scaled.columns_mut().into_iter().zip(&eigvals) {
        col /= l.sqrt();
    }
    let latents = kc.dot(&scaled);
    Ok(KpcaModel {
        mean_fn,
        kernel_v: *kernel_v,
        training_outputs_centered: centered,
        gram_row_means: row_means,
        gram_total_mean: total_mean,
        centered_trace: trace,
        eigvals,
        scaled_eigvecs: scaled,
        latents,
    })
}

/// A fitted latent map of either kind.
#[derive(Clone, Debug, PartialEq)]
pub enum Reducer {
    Pod(PodModel),
    Kpca(KpcaModel),
}

impl Reducer {
    pub fn p(&self) -> usize {
        match self {
            Reducer::Pod(m) => m.p(),
            Reducer::Kpca(m) => m.p(),
        }
    }

    pub fn m(&self) -> usize {
        match self {
            Reducer::Pod(m) => m.m(),
            Reducer::Kpca(m) => m.m(),
        }
    }

    pub fn mean_fn(&self) -> &Array1<f64> {
        match self {
            Reducer::Pod(m) => &m.mean_fn,
            Reducer::Kpca(m) => &m.mean_fn,
        }
    }

    pub fn project(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        match self {
            Reducer::Pod(m) => m.project(v),
            Reducer::Kpca(m) => m.project(v),
        }
    }

    pub fn latent_codes(&self) -> &Array2<f64> {
        match self {
            Reducer::Pod(m) => m.latent_codes(),
            Reducer::Kpca(m) => m.latent_codes(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_snapshots(n: usize, m: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Decaying per-direction scales keep the spectrum non-degenerate.
        Array2::from_shape_fn((n, m), |(_, j)| {
            rng.random_range(-1.0..1.0) * (1.0 + 3.0 / (1.0 + j as f64))
        })
    }

    fn max_abs(a: &Array2<f64>) -> f64 {
        a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn pod_identical_rows() {
        let v = array![[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]];
        let pod = fit_pod(v.view(), 1).unwrap();
        assert_eq!(pod.mean_fn, array![1.0, 2.0, 3.0]);
        assert_eq!(pod.project(v.row(0)).unwrap(), array![0.0]);
        let btb = pod.basis.t().dot(&pod.basis);
        assert!((btb[[0, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pod_single_direction() {
        let v = array![[1.0, 0.0], [-1.0, 0.0]];
        let pod = fit_pod(v.view(), 1).unwrap();
        assert!((pod.basis[[0, 0]].abs() - 1.0).abs() < 1e-14);
        assert!(pod.basis[[1, 0]].abs() < 1e-14);
        let z: Vec<f64> = pod.latent_codes().column(0).to_vec();
        assert!((z[0].abs() - 1.0).abs() < 1e-14 && (z[0] + z[1]).abs() < 1e-14);
    }

    #[test]
    fn pod_p_out_of_range() {
        let v = random_snapshots(4, 3, 1);
        assert!(fit_pod(v.view(), 0).is_err());
        assert!(fit_pod(v.view(), 4).is_err());
    }

    #[test]
    fn pod_projection_examples() {
        let v = random_snapshots(10, 6, 2);
        let pod = fit_pod(v.view(), 3).unwrap();
        let btb = pod.basis.t().dot(&pod.basis);
        assert!(max_abs(&(btb - Array2::<f64>::eye(3))) < 1e-10);
        let z0 = pod.project(pod.mean_fn.view()).unwrap();
        assert!(z0.iter().all(|z| z.abs() < 1e-14));
        for k in 0..3 {
            let v = &pod.mean_fn + &pod.basis.column(k);
            let z = pod.project(v.view()).unwrap();
            for j in 0..3 {
                let e = if j == k { 1.0 } else { 0.0 };
                assert!((z[j] - e).abs() < 1e-10);
            }
        }
        assert!(pod.project(array![1.0].view()).is_err());
    }

    /// Oracle: truncated SVD via the m x m covariance eigendecomposition (a different
    /// route from the N x N snapshot Gram used by `fit_pod`).
    #[test]
    fn pod_matches_covariance_route() {
        let v = random_snapshots(20, 50, 3);
        let p = 5;
        let pod = fit_pod(v.view(), p).unwrap();
        let mean = v.mean_axis(Axis(0)).unwrap();
        let c = &v - &mean;
        let cov = c.t().dot(&c);
        let eig = crate::linalg::jacobi_eig(cov.view()).unwrap();
        let basis = eig.eigenvectors.slice(s![.., ..p]).to_owned();
        let oracle = c.dot(&basis).dot(&basis.t()) + &mean;
        let ours = pod.latent_codes().dot(&pod.basis.t()) + &pod.mean_fn;
        assert!(max_abs(&(ours - oracle)) < 1e-8);
        for k in 0..p {
            assert!((pod.singular_values[k] - eig.eigenvalues[k].sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn pod_round_trip_bounded_by_truncation() {
        let v = random_snapshots(12, 8, 4);
        let pod = fit_pod(v.view(), 4).unwrap();
        let full = fit_pod(v.view(), 8).unwrap();
        let c = &v - &pod.mean_fn;
        let total: f64 = c.iter().map(|x| x * x).sum();
        let kept: f64 = pod.singular_values.iter().map(|s| s * s).sum();
        let mut err = 0.0;
        for i in 0..12 {
            let r = pod.reconstruct(pod.project(v.row(i)).unwrap().view()).unwrap();
            err += (&r - &v.row(i)).iter().map(|x| x * x).sum::<f64>();
            let rf = full.reconstruct(full.project(v.row(i)).unwrap().view()).unwrap();
            assert!((&rf - &v.row(i)).iter().all(|x| x.abs() < 1e-10));
        }
        assert!((err - (total - kept)).abs() < 1e-9 * total);
    }

    #[test]
    fn kpca_linear_equals_pod() {
        let v = random_snapshots(15, 30, 5);
        let p = 6;
        let pod = fit_pod(v.view(), p).unwrap();
        let kpca = fit_kpca(v.view(), &KernelSpec::linear(), p).unwrap();
        let zp = pod.latent_codes();
        let zk = kpca.latent_codes();
        for k in 0..p {
            let sign = if zp[[0, k]] * zk[[0, k]] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..15 {
                assert!((zp[[i, k]] - sign * zk[[i, k]]).abs() < 1e-8);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let probe = Array1::from_shape_fn(30, |_| rng.random_range(-2.0..2.0));
        let a = pod.project(probe.view()).unwrap();
        let b = kpca.project(probe.view()).unwrap();
        for k in 0..p {
            assert!((a[k].abs() - b[k].abs()).abs() < 1e-8);
        }
    }

    #[test]
    fn kpca_identical_rows_is_rank_error() {
        let v = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        match fit_kpca(v.view(), &KernelSpec::linear(), 1) {
            Err(Error::RankDeficient { requested: 1, usable: 0 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kpca_in_sample_projection_and_centering() {
        let v = random_snapshots(9, 4, 6);
        let spec = KernelSpec::new(0.5, 1.0, 2).unwrap();
        let kpca = fit_kpca(v.view(), &spec, 4).unwrap();
        for i in 0..9 {
            let z = kpca.project(v.row(i)).unwrap();
            for k in 0..4 {
                assert!((z[k] - kpca.latent_codes()[[i, k]]).abs() < 1e-10);
            }
        }
        let means = kpca.latent_codes().mean_axis(Axis(0)).unwrap();
        assert!(means.iter().all(|m| m.abs() < 1e-9));
        let lin = fit_kpca(v.view(), &KernelSpec::linear(), 2).unwrap();
        let z = lin.project(lin.mean_fn.view()).unwrap();
        assert!(z.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn kpca_axes_have_unit_feature_norm() {
        let v = random_snapshots(10, 5, 7);
        let spec = KernelSpec::new(1.0, 0.5, 3).unwrap();
        let kpca = fit_kpca(v.view(), &spec, 3).unwrap();
        // Rebuild the centred Gram independently.
        let c = &v - &kpca.mean_fn;
        let n = 10;
        let k = Array2::from_shape_fn((n, n), |(i, j)| {
            let s: f64 = c.row(i).dot(&c.row(j));
            (s + 0.5).powi(3)
        });
        let one = Array2::from_elem((n, n), 1.0 / n as f64);
        let kc = &k - &one.dot(&k) - &k.dot(&one) + &one.dot(&k).dot(&one);
        let a = &kpca.scaled_eigvecs;
        let gram = a.t().dot(&kc).dot(a);
        assert!(max_abs(&(gram - Array2::<f64>::eye(3))) < 1e-8);
    }

    /// Oracle: explicit degree-2 feature map (all monomials x_a x_b with sqrt(2) weights on
    /// the cross terms) followed by plain PCA in feature space.
    #[test]
    fn kpca_quadratic_matches_explicit_feature_map() {
        let v = random_snapshots(5, 3, 9);
        let kpca = fit_kpca(v.view(), &KernelSpec::new(1.0, 0.0, 2).unwrap(), 3).unwrap();
        let c = &v - &kpca.mean_fn;
        let feats = Array2::from_shape_fn((5, 6), |(i, f)| {
            let x = c.row(i);
            match f {
                0 => x[0] * x[0],
                1 => x[1] * x[1],
                2 => x[2] * x[2],
                3 => 2f64.sqrt() * x[0] * x[1],
                4 => 2f64.sqrt() * x[0] * x[2],
                _ => 2f64.sqrt() * x[1] * x[2],
            }
        });
        let fmean = feats.mean_axis(Axis(0)).unwrap();
        let fc = &feats - &fmean;
        let cov = fc.t().dot(&fc);
        let eig = crate::linalg::jacobi_eig(cov.view()).unwrap();
        let scores = fc.dot(&eig.eigenvectors.slice(s![.., ..3]));
        for k in 0..3 {
            // N * variance of component k equals its eigenvalue.
            let var_oracle: f64 = scores.column(k).iter().map(|x| x * x).sum::<f64>() / 5.0;
            let var_ours: f64 =
                kpca.latent_codes().column(k).iter().map(|x| x * x).sum::<f64>() / 5.0;
            assert!((var_oracle - var_ours).abs() < 1e-9 * var_oracle.max(1.0));
            assert!((var_ours - kpca.eigvals[k] / 5.0).abs() < 1e-9 * var_ours.max(1.0));
            for i in 0..5 {
                assert!(
                    (scores[[i, k]].abs() - kpca.latent_codes()[[i, k]].abs()).abs() < 1e-8
                );
            }
        }
    }

    #[test]
    fn captured_variance_monotone_in_p() {
        let v = random_snapshots(12, 6, 10);
        let spec = KernelSpec::new(1.0, 1.0, 2).unwrap();
        let mut last = 0.0;
        for p in 1..=6 {
            let f = fit_kpca(v.view(), &spec, p).unwrap().captured_fraction();
            assert!(f >= last);
            last = f;
        }
    }
}
