use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use samtwostep::basis::{build_basis, BasisSpec};
use samtwostep::resmooth::{check_nested, local_polynomial, resmooth_least_squares, Kernel};

fn sample(seed: u64, n: usize) -> (Vec<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let y = DVector::from_fn(n, |i, _| {
        (6.0 * x[i]).sin() + 0.5 * rng.sample::<f64, _>(StandardNormal)
    });
    (x, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn nested_grids_compose_to_the_coarse_projection(seed in 0u64..10_000, coarse in 1usize..8, factor in 1usize..5, piecewise in any::<bool>()) {
        let fine = coarse * factor;
        prop_assert!(check_nested(fine, coarse));
        let (x, y) = sample(seed, 400);
        let (f, c) = if piecewise {
            (BasisSpec::piecewise_legendre(2, fine), BasisSpec::piecewise_legendre(2, coarse))
        } else {
            (BasisSpec::bspline(3, fine), BasisSpec::bspline(3, coarse))
        };
        let (f, c) = (build_basis(f).unwrap(), build_basis(c).unwrap());
        let pseudo = resmooth_least_squares(&y, &x, &f).unwrap().fitted();
        let two = resmooth_least_squares(&pseudo, &x, &c).unwrap().fitted();
        let direct = resmooth_least_squares(&y, &x, &c).unwrap().fitted();
        prop_assert!((two - direct).amax() < 1e-9);
    }

    #[test]
    fn hat_matrix_is_a_projection(seed in 0u64..10_000, dim in 4usize..15) {
        let (x, y) = sample(seed, 120);
        let basis = build_basis(BasisSpec::cubic_bspline(dim).unwrap()).unwrap();
        let s = resmooth_least_squares(&y, &x, &basis).unwrap();
        let h = s.hat_matrix();
        prop_assert!((&h - h.transpose()).amax() < 1e-12);
        prop_assert!((&h * &h - &h).amax() < 1e-10);
        prop_assert!((h.trace() - dim as f64).abs() < 1e-9);
        prop_assert!((&h * &y - s.fitted()).amax() < 1e-10);
        let w = s.weights(x[0]).unwrap();
        prop_assert!((w.dot(&y) - s.evaluate(x[0]).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn local_linear_reproduces_lines(seed in 0u64..10_000, a in -3.0f64..3.0, b in -3.0f64..3.0, h in 0.05f64..2.0, at in 0.1f64..0.9) {
        let (x, _) = sample(seed, 200);
        let y = DVector::from_iterator(x.len(), x.iter().map(|t| a + b * t));
        let fit = local_polynomial(&y, &x, at, h, 1, Kernel::Epanechnikov).unwrap();
        prop_assert!((fit.estimate() - (a + b * at)).abs() < 1e-9);
        prop_assert!((fit.derivative(1).unwrap() - b).abs() < 1e-7);
        prop_assert!((fit.weights.dot(&y) - fit.estimate()).abs() < 1e-9);
    }
}

#[test]
fn non_nested_grids_do_not_compose() {
    let (x, y) = sample(1, 400);
    let fine = build_basis(BasisSpec::bspline(3, 10)).unwrap();
    let coarse = build_basis(BasisSpec::bspline(3, 7)).unwrap();
    let pseudo = resmooth_least_squares(&y, &x, &fine).unwrap().fitted();
    let two = resmooth_least_squares(&pseudo, &x, &coarse).unwrap().fitted();
    let direct = resmooth_least_squares(&y, &x, &coarse).unwrap().fitted();
    assert!(!check_nested(10, 7));
    assert!((two - direct).amax() > 1e-6);
}

#[test]
fn length_mismatch_is_rejected() {
    let (x, y) = sample(2, 50);
    let basis = build_basis(BasisSpec::cubic_bspline(5).unwrap()).unwrap();
    assert!(resmooth_least_squares(&y.rows(0, 49).into_owned(), &x, &basis).is_err());
}
