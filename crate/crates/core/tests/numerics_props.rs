mod common;

use common::*;
use proptest::prelude::*;
use pwmcert::numerics::{determinant, hurwitz_margin, is_hurwitz, matexp, solve, sym_eig, Matrix};

fn square(n: usize, lim: f64) -> impl Strategy<Value = Matrix<f64>> {
    prop::collection::vec(-lim..lim, n * n).prop_map(move |v| {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = v[i * n + j];
            }
        }
        m
    })
}

fn any_square(lim: f64) -> impl Strategy<Value = Matrix<f64>> {
    (1usize..=5).prop_flat_map(move |n| square(n, lim))
}

/// Eigenvalues of a real 2x2 block, as `(re, im)` pairs.
fn eig2(m: &Matrix<f64>) -> [(f64, f64); 2] {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        [(tr / 2.0 + disc.sqrt(), 0.0), (tr / 2.0 - disc.sqrt(), 0.0)]
    } else {
        [(tr / 2.0, (-disc).sqrt()), (tr / 2.0, -(-disc).sqrt())]
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn exponential_semigroup(m in any_square(2.0), s in 0.0f64..1.5, t in 0.0f64..1.5) {
        let lhs = matexp(&m.scale(s + t)).unwrap();
        let rhs = &matexp(&m.scale(s)).unwrap() * &matexp(&m.scale(t)).unwrap();
        prop_assert!(rel_err(&rhs, &lhs) < 1e-11);
    }

    #[test]
    fn exponential_determinant_is_exp_trace(m in any_square(2.0)) {
        let det = determinant(&matexp(&m).unwrap()).unwrap();
        let want = m.trace().exp();
        prop_assert!((det - want).abs() <= 1e-10 * want);
    }

    #[test]
    fn exponential_matches_series(m in any_square(3.0)) {
        prop_assert!(rel_err(&matexp(&m).unwrap(), &expm_series(&m)) < 1e-10);
    }

    #[test]
    fn sym_eig_invariants(m in any_square(10.0)) {
        let s = m.symmetric_part();
        let e = sym_eig(&s).unwrap();
        let n = s.rows();
        prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let q = &e.eigenvectors;
        prop_assert!(rel_err(&(&q.transpose() * q), &Matrix::identity(n)) < 1e-12);
        prop_assert!(rel_err(&e.reconstruct(), &s) < 1e-12 || s.norm_fro() == 0.0);
        let sum: f64 = e.eigenvalues.iter().sum();
        prop_assert!((sum - s.trace()).abs() <= 1e-12 * (1.0 + s.norm_fro()));
    }

    #[test]
    fn hurwitz_agrees_with_eigenvalues_2x2(m in square(2, 5.0)) {
        let ev = eig2(&m);
        let max_re = ev[0].0.max(ev[1].0);
        prop_assume!(max_re.abs() > 1e-6);
        prop_assert_eq!(is_hurwitz(&m).unwrap(), max_re < 0.0);
        if max_re < 0.0 {
            let margin = hurwitz_margin(&m).unwrap();
            prop_assert!((margin + max_re).abs() <= 1e-5 * max_re.abs().max(1.0));
        }
    }

    #[test]
    fn hurwitz_after_shift(m in any_square(3.0)) {
        let n = m.rows();
        let radius = (0..n).map(|i| (0..n).map(|j| m[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max);
        prop_assert!(is_hurwitz(&m.add_identity(-(radius + 0.1))).unwrap());
        prop_assert!(!is_hurwitz(&m.add_identity(radius + 0.1)).unwrap());
    }

    #[test]
    fn solve_residual(m in any_square(4.0), seed in 0u64..1000) {
        let n = m.rows();
        let well = m.add_identity(10.0 + seed as f64 * 1e-3);
        let rhs = Matrix::column(&(0..n).map(|i| (i as f64 + 1.0) * 0.5).collect::<Vec<_>>());
        let x = solve(&well, &rhs).unwrap();
        prop_assert!(rel_err(&(&well * &x), &rhs) < 1e-12);
    }
}
