use kpca_deeponet::branch::{Scaling, Standardizer};
use kpca_deeponet::data::SplitSpec;
use kpca_deeponet::kernels::{gram_matrix_with, kernel_eval};
use kpca_deeponet::linalg::{jacobi_eig, sym_eig, Cholesky};
use kpca_deeponet::{rel_l2, rel_l2_flat, Execution, FieldDataset, KernelSpec};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Array2<f64>> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-2.0f64..2.0, r * c)
            .prop_map(move |v| Array2::from_shape_vec((r, c), v).unwrap())
    })
}

fn square(max: usize) -> impl Strategy<Value = Array2<f64>> {
    (1..=max).prop_flat_map(|n| {
        prop::collection::vec(-2.0f64..2.0, n * n).prop_map(move |v| Array2::from_shape_vec((n, n), v).unwrap())
    })
}

fn kernel_spec() -> impl Strategy<Value = KernelSpec> {
    (0.1f64..2.0, 0.0f64..2.0, 1u32..=4).prop_map(|(g, c, d)| KernelSpec::new(g, c, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_symmetric(k in kernel_spec(), xy in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..12)) {
        let x: Array1<f64> = xy.iter().map(|p| p.0).collect();
        let y: Array1<f64> = xy.iter().map(|p| p.1).collect();
        let a = kernel_eval(&k, x.view(), y.view()).unwrap();
        let b = kernel_eval(&k, y.view(), x.view()).unwrap();
        prop_assert_eq!(a, b);
        let dot = x.dot(&y);
        let expect = (k.gamma * dot + k.offset).powi(k.degree as i32);
        prop_assert!((a - expect).abs() <= 1e-12 * expect.abs().max(1.0));
    }

    #[test]
    fn gram_same_in_both_modes(k in kernel_spec(), x in matrix(24, 10)) {
        let s = gram_matrix_with(&k, x.view(), Execution::Sequential);
        let p = gram_matrix_with(&k, x.view(), Execution::Parallel);
        prop_assert_eq!(&s, &p);
        prop_assert_eq!(&s, &s.t().to_owned());
    }

    #[test]
    fn eigenvalues_agree_with_jacobi(b in square(24)) {
        let a = &b + &b.t();
        let ql = sym_eig(a.view()).unwrap();
        let jac = jacobi_eig(a.view()).unwrap();
        let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (x, y) in ql.eigenvalues.iter().zip(&jac.eigenvalues) {
            prop_assert!((x - y).abs() <= 1e-10 * scale * a.nrows() as f64);
        }
        let trace: f64 = a.diag().sum();
        prop_assert!((ql.eigenvalues.sum() - trace).abs() <= 1e-10 * scale * a.nrows() as f64);
    }

    #[test]
    fn cholesky_solves_spd(b in square(20), rhs_cols in 1usize..4) {
        let n = b.nrows();
        let a = b.dot(&b.t()) + Array2::<f64>::eye(n);
        let rhs = Array2::from_shape_fn((n, rhs_cols), |(i, j)| (i as f64 - j as f64).sin());
        let x = Cholesky::factor(a.view()).unwrap().solve(rhs.view()).unwrap();
        let r = a.dot(&x) - &rhs;
        prop_assert!(r.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn relative_error_is_scale_invariant(r in matrix(8, 16), noise in -0.5f64..0.5, c in 0.1f64..50.0) {
        prop_assume!(r.rows().into_iter().all(|row| row.iter().any(|v| v.abs() > 1e-3)));
        let p = r.mapv(|v| v * (1.0 + noise) + 0.01);
        let e = rel_l2(p.view(), r.view()).unwrap();
        let ec = rel_l2((&p * c).view(), (&r * c).view()).unwrap();
        prop_assert!((e - ec).abs() <= 1e-12 * e.max(1.0));
        prop_assert_eq!(rel_l2(r.view(), r.view()).unwrap(), 0.0);
        prop_assert_eq!(rel_l2_flat(r.view(), r.view()).unwrap(), 0.0);
    }

    #[test]
    fn split_partitions_prefix(train in 0usize..40, test in 0usize..40, extra in 0usize..5) {
        let (a, b) = SplitSpec { train, test }.indices(train + test + extra).unwrap();
        prop_assert_eq!(a.len(), train);
        prop_assert_eq!(b.len(), test);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..train + test).collect::<Vec<_>>());
    }

    #[test]
    fn standardizer_round_trip(x in matrix(12, 6), per_column in any::<bool>()) {
        let mode = if per_column { Scaling::PerColumn } else { Scaling::Global };
        let s = Standardizer::fit(x.view(), mode);
        let back = s.invert(s.apply(x.view()).view());
        prop_assert!((&back - &x).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn dataset_bytes_round_trip(inputs in matrix(10, 4), m in 2usize..20, seed in 0u64..1000) {
        let n = inputs.nrows();
        let outputs = Array2::from_shape_fn((n, m), |(i, j)| ((i * 31 + j * 7) as f64 + seed as f64).sin());
        let coords = Array2::from_shape_fn((m, 1), |(j, _)| j as f64 / (m - 1) as f64);
        let ds = FieldDataset::single_field(inputs, outputs, coords).unwrap();
        let bytes = ds.to_bytes();
        let back = FieldDataset::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back.to_bytes(), &bytes);
        prop_assert_eq!(back.outputs(), ds.outputs());
        prop_assert!(FieldDataset::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
