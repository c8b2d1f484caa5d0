//! Dense symmetric eigendecomposition and SPD solves.
//!
//! `sym_eig` reduces to tridiagonal form with Householder reflections and finishes with
//! implicit-shift QL iterations. `jacobi_eig` is a cyclic Jacobi solver kept as an
//! independent second route for cross-checking. Both return eigenvalues in descending order
//! with eigenvectors normalised so that their largest-magnitude entry is positive.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct EigDecomposition {
    /// Descending.
    pub eigenvalues: Array1<f64>,
    /// Column `j` pairs with `eigenvalues[j]`.
    pub eigenvectors: Array2<f64>,
}

const SYMMETRY_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_TOL: f64 = 1e-12;
const QL_MAX_ITER: usize = 60;

fn check_symmetric(a: &ArrayView2<f64>) -> Result<()> {
    let n = a.nrows();
    Error::check_dim("symmetric matrix columns", n, a.ncols())?;
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("eigensolver input".into()));
    }
    if worst > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry: worst });
    }
    Ok(())
}

/// Eigendecomposition of a real symmetric matrix.
pub fn sym_eig(a: ArrayView2<f64>) -> Result<EigDecomposition> {
    check_symmetric(&a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(EigDecomposition {
            eigenvalues: Array1::zeros(0),
            eigenvectors: Array2::zeros((0, 0)),
        });
    }
    // Work on the symmetrised lower triangle so tiny asymmetries cannot leak in.
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s = 0.5 * (a[[i, j]] + a[[j, i]]);
            v[i * n + j] = s;
            v[j * n + i] = s;
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut v, &mut d, &mut e);

    // QL rotations act on columns of V; store V transposed so they touch contiguous rows.
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            vt[j * n + i] = v[i * n + j];
        }
    }
    drop(v);
    tridiagonal_ql(n, &mut d, &mut e, &mut vt)?;
    Ok(sorted_decomposition(n, &d, |k, i| vt[k * n + i]))
}

/// Householder reduction to tridiagonal form (row-major `v`, overwritten with the
/// accumulated orthogonal transform).
fn tridiagonalize(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let idx = |r: usize, c: usize| r * n + c;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
                v[idx(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    let vkj = v[idx(k, j)];
                    g += vkj * d[k];
                    e[k] += vkj * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = 0.0;
    }
    v[idx(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on the tridiagonal `(d, e)`; `vt` holds the transform transposed
/// (row `k` is eigenvector `k`).
fn tridiagonal_ql(n: usize, d: &mut [f64], e: &mut [f64], vt: &mut [f64]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_ITER {
                    return Err(Error::NoConvergence {
                        iterations: iter,
                        residual: e[l].abs(),
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = vt.split_at_mut((i + 1) * n);
                    let row_i = &mut lo[i * n..];
                    let row_i1 = &mut hi[..n];
                    for (a, b) in row_i.iter_mut().zip(row_i1.iter_mut()) {
                        let t = *b;
                        *b = s * *a + c * t;
                        *a = c * *a - s * t;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Sort eigenpairs descending and fix signs. `vec(k, i)` returns entry `i` of eigenvector `k`.
fn sorted_decomposition(
    n: usize,
    values: &[f64],
    vec: impl Fn(usize, usize) -> f64,
) -> EigDecomposition {
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps ties in solver order, which is itself deterministic.
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut eigenvalues = Array1::zeros(n);
    let mut eigenvectors = Array2::zeros((n, n));
    for (col, &k) in order.iter().enumerate() {
        eigenvalues[col] = values[k];
        let mut pivot = 0;
        let mut best = -1.0;
        for i in 0..n {
            let a = vec(k, i).abs();
            if a > best {
                best = a;
                pivot = i;
            }
        }
        let sign = if vec(k, pivot) < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            eigenvectors[[i, col]] = sign * vec(k, i);
        }
    }
    EigDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

/// Cyclic Jacobi eigensolver. Converges when the off-diagonal Frobenius norm drops below
/// `1e-12 * ||A||_F`; gives up after 100 sweeps.
pub fn jacobi_eig(a: ArrayView2<f64>) -> Result<EigDecomposition> {
    check_symmetric(&a)?;
    let n = a.nrows();
    let mut m = a.to_owned();
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = s;
            m[[j, i]] = s;
        }
    }
    let mut v = Array2::<f64>::eye(n);
    let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let off_norm = |m: &Array2<f64>| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[[i, j]] * m[[i, j]];
                }
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    loop {
        let off = off_norm(&m);
        if off <= JACOBI_TOL * frob || frob == 0.0 {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                iterations: sweeps,
                residual: off,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let diag: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    Ok(sorted_decomposition(n, &diag, |k, i| v[[i, k]]))
}

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    /// Row-major, lower triangle populated.
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        Error::check_dim("cholesky columns", n, a.ncols())?;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                let s: f64 = ri.iter().zip(rj).fold(0.0, |acc, (x, y)| acc + x * y);
                let val = a[[i, j]] - s;
                if i == j {
                    if !(val > 0.0) || !val.is_finite() {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: val });
                    }
                    l[i * n + i] = val.sqrt();
                } else {
                    l[i * n + j] = val / l[j * n + j];
                }
            }
        }
        Ok(Cholesky { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve `A X = B` for all columns of `B`.
    pub fn solve(&self, b: ArrayView2<f64>) -> Result<Array2<f64>> {
        let n = self.n;
        Error::check_dim("solve_spd right-hand side rows", n, b.nrows())?;
        let k = b.ncols();
        // Row-major copy; forward/back substitution sweeps whole rows of X at once.
        let mut x: Vec<f64> = b.as_standard_layout().iter().copied().collect();
        for i in 0..n {
            for j in 0..i {
                let lij = self.l[i * n + j];
                if lij != 0.0 {
                    let (head, tail) = x.split_at_mut(i * k);
                    let xj = &head[j * k..j * k + k];
                    for (xi, xjv) in tail[..k].iter_mut().zip(xj) {
                        *xi -= lij * xjv;
                    }
                }
            }
            let d = self.l[i * n + i];
            for xi in &mut x[i * k..i * k + k] {
                *xi /= d;
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let lji = self.l[j * n + i];
                if lji != 0.0 {
                    let (head, tail) = x.split_at_mut(j * k);
                    let xj = &tail[..k];
                    for (xi, xjv) in head[i * k..i * k + k].iter_mut().zip(xj) {
                        *xi -= lji * xjv;
                    }
                }
            }
            let d = self.l[i * n + i];
            for xi in &mut x[i * k..i * k + k] {
                *xi /= d;
            }
        }
        Ok(Array2::from_shape_vec((n, k), x).expect("row-major shape"))
    }
}

/// Solve `A X = B` for symmetric positive-definite `A` via Cholesky.
pub fn solve_spd(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_symmetric(&a)?;
    Cholesky::factor(a)?.solve(b)
}
