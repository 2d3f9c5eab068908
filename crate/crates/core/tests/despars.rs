use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use samtwostep::basis::{build_basis, BasisSpec};
use samtwostep::despars::{
    debias, fit_full_lasso, neumann_series_estimate, operator_form_estimate, relaxed_projections, AdditiveDesign,
    ProjectionSet,
};
use samtwostep::glasso::SolverOptions;
use samtwostep::simlab::gen_covariates;

fn instance(seed: u64, n: usize, q: usize, rho: f64) -> (AdditiveDesign, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = gen_covariates(n, q, q, rho, seed).unwrap().map(|v| (v + 2.5) / 5.0);
    let first = build_basis(BasisSpec::cubic_bspline(7).unwrap()).unwrap();
    let other = build_basis(BasisSpec::cubic_bspline(5).unwrap()).unwrap();
    let design = AdditiveDesign::new(&first, &other, &x).unwrap();
    let y = DVector::from_fn(n, |i, _| {
        (4.0 * x[(i, 0)]).sin() + 0.5 * (3.0 * x[(i, 1)]).cos() + 0.3 * rng.sample::<f64, _>(StandardNormal)
    });
    (design, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn operator_and_matrix_forms_agree(seed in 0u64..5_000, rho in 0.0f64..0.8, lambda in 0.005f64..0.2, eta in 0.005f64..0.2) {
        let (design, y) = instance(seed, 90, 4, rho);
        let opts = SolverOptions::default();
        let lasso = fit_full_lasso(&design, &y, lambda, &opts).unwrap();
        let proj = relaxed_projections(&design, eta, &opts, None).unwrap();
        let fit = debias(&y, design.first(), &lasso, &proj).unwrap();
        prop_assert!((operator_form_estimate(&fit, &y).unwrap() - &fit.beta).amax() < 1e-8);
        prop_assert!((fit.beta_from_lasso_residual(&y) - &fit.beta).amax() < 1e-10);
        prop_assert!(fit.rho_hat >= 0.0 && fit.rho_hat < 1.0);
        if fit.rho_hat < 0.9 {
            let (series, _) = neumann_series_estimate(&fit, &y).unwrap();
            prop_assert!((series - &fit.beta).amax() < 1e-8);
        }
    }

    #[test]
    fn first_block_shifts_pass_through(seed in 0u64..5_000, shift in proptest::collection::vec(-2.0f64..2.0, 7)) {
        let (design, y) = instance(seed, 80, 3, 0.5);
        let opts = SolverOptions::default();
        let lasso = fit_full_lasso(&design, &y, 0.05, &opts).unwrap();
        let proj = relaxed_projections(&design, 0.05, &opts, None).unwrap();
        let a = DVector::from_vec(shift);
        let base = debias(&y, design.first(), &lasso, &proj).unwrap();
        let moved = debias(&(&y + design.first().phi() * &a), design.first(), &lasso, &proj).unwrap();
        prop_assert!((&moved.beta - &base.beta - &a).amax() < 1e-9);
    }
}

#[test]
fn stronger_projection_penalty_shrinks_the_angle() {
    let (design, y) = instance(7, 150, 4, 0.9);
    let opts = SolverOptions::default();
    let lasso = fit_full_lasso(&design, &y, 0.05, &opts).unwrap();
    let angles: Vec<f64> = [0.002, 0.02, 0.2, 10.0]
        .iter()
        .map(|&eta| {
            let proj = relaxed_projections(&design, eta, &opts, None).unwrap();
            debias(&y, design.first(), &lasso, &proj).unwrap().rho_hat
        })
        .collect();
    assert!(angles.windows(2).all(|w| w[0] >= w[1] - 1e-9), "{angles:?}");
    assert_eq!(angles[3], 0.0);
    assert!(angles[0] > 0.1);
}

#[test]
fn zero_projection_gives_unit_condition() {
    let (design, y) = instance(8, 70, 3, 0.3);
    let lasso = fit_full_lasso(&design, &y, 0.05, &SolverOptions::default()).unwrap();
    let fit = debias(&y, design.first(), &lasso, &ProjectionSet::zero(design.first())).unwrap();
    assert!((fit.condition - 1.0).abs() < 1e-8);
    assert!((&fit.gram - DMatrix::identity(7, 7)).amax() < 1e-10);
}

#[test]
fn mismatched_inputs_are_rejected() {
    let (design, y) = instance(9, 60, 2, 0.3);
    let lasso = fit_full_lasso(&design, &y, 0.05, &SolverOptions::default()).unwrap();
    let proj = ProjectionSet::zero(design.first());
    let short = y.rows(0, 59).into_owned();
    assert!(debias(&short, design.first(), &lasso, &proj).is_err());
    let mut bad = y.clone();
    bad[3] = f64::NAN;
    assert!(debias(&bad, design.first(), &lasso, &proj).is_err());
}
