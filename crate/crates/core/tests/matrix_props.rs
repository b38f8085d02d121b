use drem::matrix::{
    adjugate, build_annihilator, build_eliminators, det_and_adjugate, determinant, duplication_matrix,
    extraction_matrix, jacobi_rate, rank, stack_parameters, Matrix,
};
use proptest::prelude::*;

fn square(max_dim: usize) -> impl Strategy<Value = Matrix> {
    (2..=max_dim).prop_flat_map(|n| {
        prop::collection::vec(-3.0..3.0f64, n * n).prop_map(move |v| Matrix::square(n, v).unwrap())
    })
}

fn pair(max_dim: usize) -> impl Strategy<Value = (Matrix, Matrix)> {
    (2..=max_dim).prop_flat_map(|n| {
        (
            prop::collection::vec(-3.0..3.0f64, n * n),
            prop::collection::vec(-3.0..3.0f64, n * n),
        )
            .prop_map(move |(a, b)| (Matrix::square(n, a).unwrap(), Matrix::square(n, b).unwrap()))
    })
}

fn residual_scale(a: &Matrix, adj: &Matrix) -> f64 {
    1e-300 + a.frobenius_norm() * adj.frobenius_norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn adjugate_inverts_up_to_determinant(a in square(6)) {
        let n = a.rows();
        let (det, adj) = det_and_adjugate(&a).unwrap();
        let mut left = adj.try_mul(&a).unwrap();
        left.axpy(-det, &Matrix::identity(n));
        let mut right = a.try_mul(&adj).unwrap();
        right.axpy(-det, &Matrix::identity(n));
        let tol = 1e-12 * residual_scale(&a, &adj);
        prop_assert!(left.frobenius_norm() <= tol);
        prop_assert!(right.frobenius_norm() <= tol);
    }

    #[test]
    fn scaling_laws(a in square(6), c in 0.1..4.0f64) {
        let n = a.rows() as i32;
        let det = determinant(&a).unwrap();
        let det_c = determinant(&a.scaled(c)).unwrap();
        prop_assert!((det_c - c.powi(n) * det).abs() <= 1e-11 * c.powi(n) * (1.0 + a.frobenius_norm().powi(n)));
        let adj = adjugate(&a).unwrap();
        let adj_c = adjugate(&a.scaled(c)).unwrap();
        let diff = adj_c.sub(&adj.scaled(c.powi(n - 1))).unwrap();
        prop_assert!(diff.frobenius_norm() <= 1e-11 * c.powi(n - 1) * (1.0 + a.frobenius_norm().powi(n - 1)));
    }

    #[test]
    fn determinant_is_multiplicative((a, b) in pair(5)) {
        let ab = a.try_mul(&b).unwrap();
        let lhs = determinant(&ab).unwrap();
        let rhs = determinant(&a).unwrap() * determinant(&b).unwrap();
        let n = a.rows() as i32;
        let scale = 1.0 + (a.frobenius_norm() * b.frobenius_norm()).powi(n);
        prop_assert!((lhs - rhs).abs() <= 1e-11 * scale);
    }

    #[test]
    fn adjugate_commutes_with_transpose(a in square(6)) {
        let lhs = adjugate(&a.transpose()).unwrap();
        let rhs = adjugate(&a).unwrap().transpose();
        let diff = lhs.sub(&rhs).unwrap();
        prop_assert!(diff.frobenius_norm() <= 1e-12 * (1.0 + rhs.frobenius_norm()));
    }

    /// `d/dt det(A + tB)` at `t = 0` against a central difference.
    #[test]
    fn jacobi_rate_matches_finite_difference((a, b) in pair(6)) {
        let eps = 1e-5;
        let plus = {
            let mut m = a.clone();
            m.axpy(eps, &b);
            determinant(&m).unwrap()
        };
        let minus = {
            let mut m = a.clone();
            m.axpy(-eps, &b);
            determinant(&m).unwrap()
        };
        let fd = (plus - minus) / (2.0 * eps);
        let exact = jacobi_rate(&a, &b).unwrap();
        let n = a.rows() as i32;
        let scale = (a.frobenius_norm() + b.frobenius_norm()).powi(n);
        prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + scale), "fd {fd}, exact {exact}");
    }

    #[test]
    fn symmetric_input_gives_symmetric_adjugate(a in square(6)) {
        let mut s = a.clone();
        s.axpy(1.0, &a.transpose());
        let adj = adjugate(&s).unwrap();
        prop_assert!(adj.is_symmetric(1e-12 * (1.0 + adj.max_abs())));
    }

    #[test]
    fn eliminators_partition_and_annihilate(
        n in 1usize..=6,
        picks in prop::collection::vec(any::<prop::sample::Index>(), 0..=3),
        theta in prop::collection::vec(-10.0..10.0f64, 6),
    ) {
        let mut correlated: Vec<usize> = picks.iter().map(|i| i.index(n)).collect();
        correlated.sort_unstable();
        correlated.dedup();
        correlated.truncate(n / 2);
        let m = correlated.len();
        let e = build_eliminators(n, &correlated, None).unwrap();
        let d2 = 2 * n;

        prop_assert_eq!((e.l1.rows(), e.l1.cols()), (d2, 2 * m));
        prop_assert_eq!((e.l2.rows(), e.l2.cols()), (d2, d2 - 2 * m));
        prop_assert_eq!((e.h.rows(), e.h.cols()), (d2, 2 * m));

        // L1 L1^T + L2 L2^T = I with orthonormal, mutually orthogonal blocks
        let l1t = e.l1.transpose();
        let l2t = e.l2.transpose();
        let mut sum = e.l1.try_mul(&l1t).unwrap();
        sum.axpy(1.0, &e.l2.try_mul(&l2t).unwrap());
        prop_assert_eq!(&sum, &Matrix::identity(d2));
        prop_assert_eq!(l1t.try_mul(&e.l1).unwrap(), Matrix::identity(2 * m));
        prop_assert_eq!(l2t.try_mul(&e.l2).unwrap(), Matrix::identity(d2 - 2 * m));
        prop_assert!(l1t.try_mul(&e.l2).unwrap().as_slice().iter().all(|&x| x == 0.0));

        // H^T D = 0 and H^T Theta = 0 exactly; H has full column rank
        let ht = e.h.transpose();
        prop_assert!(ht.try_mul(&e.d).unwrap().as_slice().iter().all(|&x| x == 0.0));
        let stacked = stack_parameters(&theta[..n]);
        prop_assert!(ht.mul_vec(&stacked).iter().all(|&x| x == 0.0));
        prop_assert_eq!(rank(&e.h, 1e-12), 2 * m);

        // D theta = Theta and L0 Theta = theta
        prop_assert_eq!(duplication_matrix(n).mul_vec(&theta[..n]), stacked.clone());
        prop_assert_eq!(extraction_matrix(n).mul_vec(&stacked), theta[..n].to_vec());
        prop_assert_eq!(e.is_case_one(), m == 0);
    }
}

#[test]
fn eliminator_regime_is_enforced() {
    assert!(build_eliminators(2, &[0, 1], None).is_err());
    assert!(build_eliminators(4, &[1, 1], None).is_err());
    assert!(build_eliminators(3, &[3], None).is_err());
    assert!(build_eliminators(0, &[], None).is_err());
    assert!(build_annihilator(4, 1, Some(&[0])).is_err());
    assert!(build_annihilator(4, 1, Some(&[0, 0])).is_err());
    assert!(build_annihilator(4, 1, Some(&[0, 4])).is_err());
}

#[test]
fn case_one_selects_everything_into_the_averaging_part() {
    let e = build_eliminators(2, &[], None).unwrap();
    assert_eq!(e.l2, Matrix::identity(4));
    assert_eq!(e.l1.cols(), 0);
}

#[test]
fn two_parameter_example_matrices() {
    let e = build_eliminators(2, &[0], None).unwrap();
    let ht = Matrix::from_rows(&[&[1.0, 0.0, 1.0, 0.0], &[0.0, 1.0, 0.0, 1.0]]).unwrap();
    let l1 = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]).unwrap();
    assert_eq!(e.h.transpose(), ht);
    assert_eq!(e.l1, l1);
}

#[test]
fn adjugate_of_rank_deficient_matrix() {
    // rank n-1 gives a rank-one adjugate, rank n-2 a zero one
    let a = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], &[1.0, 0.0, 1.0]]).unwrap();
    let adj = adjugate(&a).unwrap();
    assert_eq!(rank(&adj, 1e-12), 1);
    let b = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], &[3.0, 6.0, 9.0]]).unwrap();
    assert!(adjugate(&b).unwrap().max_abs() < 1e-12);
}
