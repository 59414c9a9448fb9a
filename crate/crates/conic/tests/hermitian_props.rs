use conic::HermitianAffine;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn random_hermitian(vals: &[(f64, f64)], n: usize) -> DMatrix<Complex64> {
    let a = DMatrix::from_fn(n, n, |i, j| {
        let (re, im) = vals[i * n + j];
        Complex64::new(re, im)
    });
    (&a + a.adjoint()).scale(0.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // The real lift must have exactly the spectrum of H, doubled.
    #[test]
    fn lift_spectrum_is_doubled(
        vals in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 9),
        x in -2.0f64..2.0,
    ) {
        let h0 = random_hermitian(&vals[0..9], 3);
        let m = {
            let flipped: Vec<(f64, f64)> = vals.iter().map(|&(a, b)| (b, a)).collect();
            random_hermitian(&flipped, 3)
        };
        let mut aff = HermitianAffine::new(3);
        aff.add_const(&h0);
        aff.add_term(0, m.clone());

        let lift = aff.to_symmetric();
        let mut lifted = DMatrix::zeros(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                lifted[(i, j)] = lift.entry(i, j).eval(&[x]);
            }
        }
        let mut lift_eigs: Vec<f64> = lifted.symmetric_eigenvalues().iter().copied().collect();
        lift_eigs.sort_by(f64::total_cmp);

        let h = &h0 + m.scale(x);
        let mut h_eigs: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        h_eigs.sort_by(f64::total_cmp);

        let scale = 1.0 + h_eigs.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        for k in 0..3 {
            prop_assert!((lift_eigs[2 * k] - h_eigs[k]).abs() < 1e-8 * scale);
            prop_assert!((lift_eigs[2 * k + 1] - h_eigs[k]).abs() < 1e-8 * scale);
        }
    }

    #[test]
    fn bordered_matches_direct_product(
        vals in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 9),
        hv in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 3),
        x in -2.0f64..2.0,
    ) {
        let m = random_hermitian(&vals, 3);
        let h = nalgebra::DVector::from_iterator(
            3,
            hv.iter().map(|&(a, b)| Complex64::new(a, b)),
        );
        let mut aff = HermitianAffine::new(3);
        aff.add_term(0, m.clone());
        let b = aff.bordered(&h).eval(&[x]);

        let y = m.scale(x);
        let yh = &y * &h;
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((b[(i, j)] - y[(i, j)]).norm() < 1e-10);
            }
            prop_assert!((b[(i, 3)] - yh[i]).norm() < 1e-10);
            prop_assert!((b[(3, i)] - yh[i].conj()).norm() < 1e-10);
        }
        let corner = h.dotc(&yh);
        prop_assert!(corner.im.abs() < 1e-9);
        prop_assert!((b[(3, 3)].re - corner.re).abs() < 1e-9);
    }
}
