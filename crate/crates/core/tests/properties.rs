//! Property tests for the structural invariants.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use ridgelab_core::moments::{sample_cov_x, sample_cross_cov, SamplePair};
use ridgelab_core::{linalg, quad, ridge};

fn finite_matrix(r: usize, c: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-10.0_f64..10.0, r * c)
        .prop_map(move |v| DMatrix::from_vec(r, c, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sample_cov_invariant_under_column_translation(
        x in finite_matrix(3, 12),
        shift in proptest::collection::vec(-100.0_f64..100.0, 3),
    ) {
        let y = DMatrix::zeros(1, 12);
        let base = sample_cov_x(&SamplePair::new(x.clone(), y.clone(), None).unwrap()).unwrap();
        let mut shifted = x;
        let delta = DVector::from_vec(shift);
        for mut col in shifted.column_iter_mut() {
            col += &delta;
        }
        let moved = sample_cov_x(&SamplePair::new(shifted, y, None).unwrap()).unwrap();
        prop_assert!((base - moved).amax() < 1e-12);
    }

    #[test]
    fn cross_cov_transposes_under_swap(
        x in finite_matrix(3, 9),
        y in finite_matrix(2, 9),
    ) {
        let fwd = sample_cross_cov(&SamplePair::new(x.clone(), y.clone(), None).unwrap()).unwrap();
        let rev = sample_cross_cov(&SamplePair::new(y, x, None).unwrap()).unwrap();
        prop_assert!((fwd.transpose() - rev).amax() < 1e-14);
    }

    #[test]
    fn ridge_solution_exists_for_any_psd_covariance(
        factor in finite_matrix(4, 2),
        rhs in finite_matrix(4, 1),
        lambda in 1e-6_f64..1e4,
    ) {
        // Rank-deficient PSD by construction.
        let sigma_x = &factor * factor.transpose();
        let moments = ridgelab_core::moments::MomentSpec::new(
            DVector::zeros(4),
            DVector::zeros(1),
            sigma_x,
            DMatrix::from_element(1, 1, 1.0),
            rhs,
        ).unwrap();
        let sol = ridge::ridge_matrix(&moments, lambda);
        prop_assert!(sol.is_ok());
        prop_assert!(sol.unwrap().defining_residual() < 1e-8);
    }

    #[test]
    fn quadrature_linearity(
        alpha in -5.0_f64..5.0,
        beta in -5.0_f64..5.0,
        (a, b) in (-3.0_f64..0.0, 0.1_f64..3.0),
    ) {
        let tol = 1e-11;
        let f = |z: f64| (2.0 * z).sin();
        let g = |z: f64| z * z.exp();
        let combined = quad::integrate(|z| alpha * f(z) + beta * g(z), a, b, tol).unwrap().value;
        let parts = alpha * quad::integrate(f, a, b, tol).unwrap().value
            + beta * quad::integrate(g, a, b, tol).unwrap().value;
        prop_assert!((combined - parts).abs() <= 2.0 * tol * (1.0 + alpha.abs() + beta.abs()));
    }

    #[test]
    fn estimator_row_scale_symmetric_psd(
        x in finite_matrix(3, 10),
        lambda in 1e-3_f64..1e3,
    ) {
        let law = ridgelab_core::estimator::estimator_conditional_law(
            &x,
            &DMatrix::zeros(3, 1),
            &DMatrix::zeros(1, 10),
            &DMatrix::identity(1, 1),
            lambda,
        ).unwrap();
        let rs = law.law().row_scale();
        prop_assert!(linalg::max_asymmetry(rs) < 1e-12);
        prop_assert!(linalg::sym_eigenvalues(rs)[0] > -1e-10);
    }
}
