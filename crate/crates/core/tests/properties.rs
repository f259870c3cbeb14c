use proptest::prelude::*;

use subembed::bench::{format_matrix_market, parse_matrix_market, Metric, Params, RunReport, Task};
use subembed::linalg::{distortion, exact_leverage_scores, numerical_rank, qr_preconditioner, DenseMatrix, Matrix, SparseMatrix, RANK_TOL_FACTOR};
use subembed::sdp::{solve_packing_sdp, PackingInstance};
use subembed::sketch::{composite, diagonal_weights, fwht, osnap_build, srht_build, uniform_sample_build, SketchOperator};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-10.0f64..10.0, rows * cols).prop_map(move |v| DenseMatrix::from_vec(rows, cols, v).unwrap())
}

fn pow2_vec() -> impl Strategy<Value = Vec<f64>> {
    (0u32..9).prop_flat_map(|e| prop::collection::vec(-100.0f64..100.0, 1usize << e))
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = a.iter().chain(b).fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

fn operators(n: usize, seed: u64) -> Vec<SketchOperator> {
    let os = osnap_build(n, 24, 3, seed).unwrap();
    let srht = srht_build(24, 2, seed).unwrap();
    let samp = uniform_sample_build(srht.out_dim, 10, seed).unwrap();
    let diag = diagonal_weights((0..10).map(|i| 0.5 + i as f64).collect());
    vec![
        os.clone(),
        srht.clone(),
        uniform_sample_build(n, 7, seed).unwrap(),
        diagonal_weights((0..n).map(|i| i as f64 - 3.0).collect()),
        composite(vec![os, srht, samp, diag]).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn fwht_twice_is_scaled_identity(x in pow2_vec()) {
        let twice = fwht(&fwht(&x).unwrap()).unwrap();
        let l = x.len() as f64;
        let scaled: Vec<f64> = x.iter().map(|v| v * l).collect();
        prop_assert!(close(&twice, &scaled, 1e-9));
    }

    #[test]
    fn sketch_operators_are_linear(
        seed in any::<u64>(),
        x in prop::collection::vec(-5.0f64..5.0, 40),
        y in prop::collection::vec(-5.0f64..5.0, 40),
    ) {
        for op in operators(40, seed) {
            let (x, y) = (&x[..op.in_dim], &y[..op.in_dim]);
            let sum: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
            let lhs = op.apply_vec(&sum).unwrap();
            let rhs: Vec<f64> = op.apply_vec(x).unwrap().iter().zip(op.apply_vec(y).unwrap()).map(|(a, b)| a + b).collect();
            prop_assert!(close(&lhs, &rhs, 1e-10), "{}", op.name());
        }
    }

    #[test]
    fn matmul_is_associative(a in matrix(8, 8), b in matrix(8, 8), c in matrix(8, 8)) {
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        let rel = left.sub(&right).unwrap().frobenius_norm() / left.frobenius_norm().max(1e-300);
        prop_assert!(rel <= 1e-10);
    }

    #[test]
    fn leverage_scores_sum_to_rank(a in matrix(12, 5), k in 1usize..5, zero_rows in 0usize..4) {
        let mut a = a.select_cols(&(0..k).collect::<Vec<_>>()).hstack(&DenseMatrix::zeros(12, 5 - k)).unwrap();
        let fold = a.select_cols(&[0]);
        for i in 0..12 {
            let v = fold.get(i, 0);
            a.set(i, 4, a.get(i, 4) + 2.0 * v);
        }
        for i in 0..zero_rows {
            a.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
        }
        let scores = exact_leverage_scores(&a).unwrap();
        let total: f64 = scores.iter().sum();
        prop_assert!((total - numerical_rank(&a, RANK_TOL_FACTOR).unwrap() as f64).abs() <= 1e-8);
        prop_assert!(scores.iter().all(|&t| (-1e-12..=1.0 + 1e-9).contains(&t)));
    }

    #[test]
    fn preconditioned_matrix_is_orthonormal(a in matrix(30, 6)) {
        prop_assume!(numerical_rank(&a, RANK_TOL_FACTOR).unwrap() == 6);
        let s = subembed::linalg::singular_values(&a).unwrap();
        prop_assume!(s[0] / s[5] < 1e6);
        let pre = qr_preconditioner(&a).unwrap();
        let k = distortion(&a.matmul(&pre.r).unwrap()).unwrap();
        prop_assert!((k - 1.0).abs() <= 1e-6, "distortion {k}");
    }

    #[test]
    fn matrix_market_round_trip(
        dense in matrix(4, 3),
        triplets in prop::collection::vec((0usize..6, 0usize..5, -1e6f64..1e6), 0..20),
    ) {
        let sparse = SparseMatrix::from_triplets(6, 5, &triplets).unwrap();
        for m in [Matrix::Dense(dense.clone()), Matrix::Sparse(sparse)] {
            let back = parse_matrix_market(&format_matrix_market(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }

    #[test]
    fn sparse_triplets_accumulate(triplets in prop::collection::vec((0usize..5, 0usize..4, -3.0f64..3.0), 0..30)) {
        let s = SparseMatrix::from_triplets(5, 4, &triplets).unwrap();
        prop_assert!(s.check_invariants());
        let mut d = DenseMatrix::zeros(5, 4);
        for &(i, j, v) in &triplets {
            d.set(i, j, d.get(i, j) + v);
        }
        prop_assert!(close(s.to_dense().data(), d.data(), 1e-12));
    }

    #[test]
    fn packing_weights_are_feasible(z in matrix(24, 4), heavy in 0usize..24, boost in 1.0f64..50.0) {
        let mut z = z;
        z.row_mut(heavy).iter_mut().for_each(|v| *v *= boost);
        let inst = PackingInstance::new(z).unwrap();
        let sol = solve_packing_sdp(&inst, 0.0, 0.1, 200).unwrap();
        let w = sol.weights.as_slice();
        let cap = 2.0 / 24.0;
        prop_assert!(w.iter().all(|&v| (-1e-6..=cap + 1e-6).contains(&v)));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        let tol = 0.1 * sol.trace[0];
        prop_assert!(sol.trace.windows(2).all(|t| t[1] <= t[0] + tol));
        prop_assert!(sol.objective <= sol.trace[0]);
    }

    #[test]
    fn report_json_round_trip(
        seed in any::<u64>(),
        values in prop::collection::vec(prop_oneof![-1e300f64..1e300, Just(f64::INFINITY), Just(f64::NEG_INFINITY)], 0..6),
        pass in any::<bool>(),
    ) {
        let mut r = RunReport::new(Task::Bench, seed, Params { alpha: 0.25, epsilon: Some(0.1), constants: Default::default() });
        for (i, v) in values.iter().enumerate() {
            r.metrics.insert(format!("m{i}"), Metric(*v));
        }
        r.pass = pass;
        let text = r.to_json().unwrap();
        prop_assert_eq!(RunReport::from_json(&text).unwrap(), r.clone());
        prop_assert_eq!(text, r.to_json().unwrap());
    }
}
