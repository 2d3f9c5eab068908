//! Acceptance criteria 1 to 9. Each test prints one PASS/FAIL line.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use samtwostep::basis::{build_basis, build_basis_on, BasisSpec, KnotPlacement};
use samtwostep::despars::{
    debias, fit_full_lasso, operator_form_estimate, relaxed_projections, AdditiveDesign, DebiasedFit,
};
use samtwostep::glasso::{fit_group_lasso, kkt_certificate, orthonormalize_groups, SolverOptions};
use samtwostep::inference::{pointwise_ci, Estimator};
use samtwostep::linalg::ThinQr;
use samtwostep::pipeline::{CvSettings, Tuning};
use samtwostep::quadrature::{gauss_legendre, integrate};
use samtwostep::resmooth::resmooth_least_squares;
use samtwostep::simlab::{gen_covariates, run_experiment, SimConfig, TestFunction, TuningSource, SIM_DOMAIN};

fn report(criterion: u32, name: &str, pass: bool, detail: String) {
    println!(
        "criterion {criterion} ({name}): {} | {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn uniform_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

#[test]
fn criterion_1_basis_correctness() {
    let start = Instant::now();
    let (nodes, weights) = gauss_legendre(8);
    let mut ortho: f64 = 0.0;
    for t in 0..=3 {
        for m in [2, 10, 50] {
            let basis = build_basis(BasisSpec::piecewise_legendre(t, m)).unwrap();
            let d = basis.dimension();
            let mut gram = DMatrix::zeros(d, d);
            for k in 0..m {
                let (a, b) = (k as f64 / m as f64, (k + 1) as f64 / m as f64);
                for (x, w) in nodes.iter().zip(&weights) {
                    let u = 0.5 * (a + b) + 0.5 * (b - a) * x;
                    let row = basis.eval_row(u).unwrap();
                    gram += (&row * row.transpose()) * (0.5 * (b - a) * w);
                }
            }
            ortho = ortho.max((gram - DMatrix::identity(d, d)).abs().max());
        }
    }
    let grid: Vec<f64> = (0..1000).map(|i| i as f64 / 999.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sample = uniform_points(&mut rng, 400);
    let mut unity: f64 = 0.0;
    for dim in [4, 5, 10, 44, 78] {
        let spec = BasisSpec::cubic_bspline(dim).unwrap();
        for basis in [
            build_basis(spec).unwrap(),
            build_basis_on(spec.with_knots(KnotPlacement::Quantile), &sample).unwrap(),
        ] {
            let design = basis.eval_design(&grid).unwrap();
            for row in design.row_iter() {
                unity = unity.max((row.sum() - 1.0).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "basis correctness",
        ortho < 1e-10 && unity < 1e-12,
        format!("orthonormality {ortho:.2e} (< 1e-10), partition of unity {unity:.2e} (< 1e-12), {secs:.2}s"),
    );
}

/// Objective in orthonormal coordinates: `||y - sum U_j g_j||_n^2 + 2 lambda sum ||g_j||`.
fn reference_objective(u: &[DMatrix<f64>], y: &DVector<f64>, g: &[DVector<f64>], lambda: f64) -> f64 {
    let n = y.len() as f64;
    let mut r = y.clone();
    for (uj, gj) in u.iter().zip(g) {
        r -= uj * gj;
    }
    r.norm_squared() / n + 2.0 * lambda * g.iter().map(|gj| gj.norm()).sum::<f64>()
}

/// Accelerated proximal gradient with restarts, run to stagnation.
fn proximal_gradient(u: &[DMatrix<f64>], y: &DVector<f64>, lambda: f64) -> f64 {
    let n = y.len() as f64;
    let full = DMatrix::from_columns(
        &u.iter()
            .flat_map(|b| b.column_iter().map(|c| c.into_owned()))
            .collect::<Vec<_>>(),
    );
    let lip = 2.0 * full.tr_mul(&full).symmetric_eigen().eigenvalues.max() / n;
    let step = 1.0 / lip;
    let sizes: Vec<usize> = u.iter().map(|b| b.ncols()).collect();
    let p = full.ncols();
    let split = |v: &DVector<f64>| {
        let mut out = Vec::new();
        let mut at = 0;
        for &s in &sizes {
            out.push(v.rows(at, s).into_owned());
            at += s;
        }
        out
    };
    let prox = |v: DVector<f64>| {
        let mut out = v.clone();
        let mut at = 0;
        for &s in &sizes {
            let block = v.rows(at, s);
            let norm = block.norm();
            let shrink = if norm > step * 2.0 * lambda {
                1.0 - step * 2.0 * lambda / norm
            } else {
                0.0
            };
            out.rows_mut(at, s).copy_from(&(block * shrink));
            at += s;
        }
        out
    };
    let obj = |v: &DVector<f64>| reference_objective(u, y, &split(v), lambda);
    let mut x = DVector::zeros(p);
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut best = obj(&x);
    for _ in 0..200_000 {
        let grad = full.tr_mul(&(&full * &z - y)) * (2.0 / n);
        let next = prox(&z - grad * step);
        let value = obj(&next);
        if value > best {
            z = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &next + (&next - &x) * ((t - 1.0) / t_next);
        let moved = (&next - &x).amax();
        x = next;
        t = t_next;
        best = value;
        if moved < 1e-15 {
            break;
        }
    }
    best
}

#[test]
fn criterion_2_solver_optimality() {
    let start = Instant::now();
    let opts = SolverOptions::default();
    let (mut worst_obj, mut worst_kkt): (f64, f64) = (0.0, 0.0);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = 30;
        let blocks: Vec<DMatrix<f64>> = (0..3)
            .map(|_| DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let y = DVector::from_fn(n, |i, _| {
            blocks[0][(i, 0)] - 0.5 * blocks[1][(i, 1)] + rng.sample::<f64, _>(StandardNormal)
        });
        let design = orthonormalize_groups(blocks.clone()).unwrap();
        let lambda = design.lambda_max(&y) * (0.05 + 0.9 * rng.random::<f64>());
        let fit = fit_group_lasso(&design, &y, lambda, &opts).unwrap();

        // independent orthonormalisation by QR, scaled to unit empirical norm
        let u: Vec<DMatrix<f64>> = blocks.iter().map(|b| b.clone().qr().q() * (n as f64).sqrt()).collect();
        let g: Vec<DVector<f64>> = blocks
            .iter()
            .zip(&u)
            .zip(&fit.coefficients)
            .map(|((b, uj), c)| uj.tr_mul(&(b * c)) / n as f64)
            .collect();
        let ours = reference_objective(&u, &y, &g, lambda);
        let reference = proximal_gradient(&u, &y, lambda);
        worst_obj = worst_obj.max((ours - reference).abs());
        worst_kkt = worst_kkt.max(kkt_certificate(&design, &y, &fit).into_iter().fold(0.0, f64::max));
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        2,
        "solver optimality",
        worst_obj <= 1e-8 && worst_kkt <= 1e-7,
        format!("objective gap {worst_obj:.2e} (<= 1e-8), KKT gap {worst_kkt:.2e} (<= 1e-7), {secs:.2}s"),
    );
}

fn despars_instance(seed: u64, n: usize, q: usize) -> (AdditiveDesign, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, q, |_, _| rng.random::<f64>());
    let first = build_basis(BasisSpec::cubic_bspline(6).unwrap()).unwrap();
    let other = build_basis(BasisSpec::cubic_bspline(5).unwrap()).unwrap();
    let design = AdditiveDesign::new(&first, &other, &x).unwrap();
    let y = DVector::from_fn(n, |i, _| {
        (5.0 * x[(i, 0)]).sin() + (x[(i, q - 1)] - 0.5).powi(2) + 0.5 * rng.sample::<f64, _>(StandardNormal)
    });
    (design, y)
}

fn debiased(design: &AdditiveDesign, y: &DVector<f64>, lambda: f64, eta: f64) -> DebiasedFit {
    let opts = SolverOptions::default();
    let lasso = fit_full_lasso(design, y, lambda, &opts).unwrap();
    let proj = relaxed_projections(design, eta, &opts, None).unwrap();
    debias(y, design.first(), &lasso, &proj).unwrap()
}

#[test]
fn criterion_3_desparsification_identities() {
    let start = Instant::now();
    let mut displays: f64 = 0.0;
    let mut operator: f64 = 0.0;
    for seed in 0..50u64 {
        let (design, y) = despars_instance(seed, 100, 5);
        let fit = debiased(&design, &y, 0.02 + 0.001 * seed as f64, 0.01 + 0.001 * seed as f64);
        displays = displays.max((&fit.beta - fit.beta_from_lasso_residual(&y)).amax());
        operator = operator.max((operator_form_estimate(&fit, &y).unwrap() - &fit.beta).amax());
    }
    let mut ols: f64 = 0.0;
    for seed in 0..5u64 {
        let (design, y) = despars_instance(1000 + seed, 80, 1);
        let fit = debiased(&design, &y, 0.05, 0.05);
        let reference = ThinQr::new(design.first().raw()).unwrap().solve(&y);
        ols = ols.max((design.first().to_raw_coordinates(&fit.beta) - reference).amax());
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        3,
        "desparsification identities",
        displays <= 1e-10 && operator <= 1e-8 && ols <= 1e-10,
        format!(
            "(a) displays {displays:.2e} (<= 1e-10), (b) operator form {operator:.2e} (<= 1e-8), (c) OLS {ols:.2e} (<= 1e-10), {secs:.2}s"
        ),
    );
}

#[test]
fn criterion_4_nested_projection() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 1500;
    let x = uniform_points(&mut rng, n);
    let y = DVector::from_fn(n, |i, _| (7.0 * x[i]).cos() + rng.sample::<f64, _>(StandardNormal));
    let mut worst: f64 = 0.0;
    for (fine, coarse) in [
        (BasisSpec::bspline(3, 75), BasisSpec::bspline(3, 25)),
        (
            BasisSpec::piecewise_legendre(3, 75),
            BasisSpec::piecewise_legendre(3, 25),
        ),
    ] {
        let fine = build_basis(fine).unwrap();
        let coarse = build_basis(coarse).unwrap();
        let pseudo = resmooth_least_squares(&y, &x, &fine).unwrap().fitted();
        let two_step = resmooth_least_squares(&pseudo, &x, &coarse).unwrap().fitted();
        let direct = resmooth_least_squares(&y, &x, &coarse).unwrap().fitted();
        worst = worst.max((two_step - direct).amax());
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        4,
        "nested projection",
        worst <= 1e-9,
        format!("max difference {worst:.2e} (<= 1e-9), {secs:.2}s"),
    );
}

#[test]
fn criterion_5_centering() {
    let start = Instant::now();
    let worst = TestFunction::ALL
        .iter()
        .map(|f| (integrate(|x| f.eval(x), -2.5, 2.5, 200) / 5.0).abs())
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    report(
        5,
        "centering",
        worst < 1e-9,
        format!("max |mean| {worst:.2e} (< 1e-9), {secs:.3}s"),
    );
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn ks_uniform(sample: &[f64], lo: f64, hi: f64) -> f64 {
    let mut s: Vec<f64> = sample.iter().map(|x| (x - lo) / (hi - lo)).collect();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &u)| (u - i as f64 / n).abs().max(((i + 1) as f64 / n - u).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn criterion_6_covariate_generator() {
    let start = Instant::now();
    let x = gen_covariates(100_000, 6, 3, 0.9, 6).unwrap();
    let cols: Vec<Vec<f64>> = (0..6).map(|j| x.column(j).iter().cloned().collect()).collect();
    let (mut within, mut across): (f64, f64) = (0.0, 0.0);
    for a in 0..6 {
        for b in a + 1..6 {
            let r = pearson(&cols[a], &cols[b]);
            if a / 3 == b / 3 {
                within = within.max((r - 0.9).abs());
            } else {
                across = across.max(r.abs());
            }
        }
    }
    let ks = cols
        .iter()
        .map(|c| ks_uniform(c, SIM_DOMAIN.lo, SIM_DOMAIN.hi))
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    report(
        6,
        "covariate generator",
        within <= 0.01 && across <= 0.01 && ks < 0.01,
        format!("|within - 0.9| {within:.4} (<= 0.01), |cross| {across:.4} (<= 0.01), KS {ks:.4} (< 0.01), {secs:.2}s"),
    );
}

#[test]
fn criterion_7_coverage_reproduction() {
    let mut cfg = SimConfig::new(500, 50, TestFunction::Sine);
    cfg.d_pre = 75;
    cfg.d_re = 44;
    cfg.reps = 200;
    cfg.seed = 7;
    cfg.tuning = TuningSource::Cv {
        pilot_reps: 3,
        cv: CvSettings {
            folds: 10,
            path_points: 20,
            path_ratio: 1e-2,
            seed: 1,
        },
    };
    let r = run_experiment(&cfg).unwrap();
    let targets = [(-1.5, 0.91, 0.95), (0.0, 0.93, 0.95), (1.0, 0.90, 0.93)];
    let mut pass = true;
    let mut detail = Vec::new();
    for (x, re_cov, or_cov) in targets {
        let re = r.row(Estimator::Resmooth, x).unwrap();
        let or = r.row(Estimator::Oracle, x).unwrap();
        pass &= (re.coverage - re_cov).abs() <= 0.06 + 1e-12;
        pass &= (re.avg_width - 1.13).abs() <= 0.08;
        pass &= (or.coverage - or_cov).abs() <= 0.05 + 1e-12;
        detail.push(format!(
            "x={x}: resmooth {:.3}/{re_cov} width {:.3}/1.13, oracle {:.3}/{or_cov}",
            re.coverage, re.avg_width, or.coverage
        ));
    }
    report(
        7,
        "coverage reproduction",
        pass,
        format!(
            "{}; lambda {:.4}, eta {:.4}, {} failures, {:.0}s",
            detail.join("; "),
            r.tuning.lambda,
            r.tuning.eta,
            r.failures,
            r.runtime_secs
        ),
    );
}

#[test]
fn criterion_8_oracle_exactness() {
    let start = Instant::now();
    let n = 500;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.5..2.5)).collect();
    let basis = build_basis(BasisSpec::cubic_bspline(44).unwrap().with_domain(SIM_DOMAIN)).unwrap();
    let coef = DVector::from_fn(44, |k, _| (0.3 * k as f64).sin() * 2.0);
    let design = basis.eval_design(&x).unwrap();
    let f1 = &design * &coef;
    let qr = ThinQr::new(&design).unwrap();
    let points = [-1.5, 0.0, 1.0];
    let rows: Vec<DVector<f64>> = points.iter().map(|&p| basis.eval_row(p).unwrap()).collect();
    let weights: Vec<DVector<f64>> = rows.iter().map(|r| qr.weights(r)).collect();
    let truth: Vec<f64> = rows.iter().map(|r| r.dot(&coef)).collect();
    let draws = 2000;
    let mut covered = [0usize; 3];
    for _ in 0..draws {
        let y = &f1 + DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        for p in 0..3 {
            let ci = pointwise_ci(&weights[p], weights[p].dot(&y), 1.0, 0.95, Estimator::Oracle).unwrap();
            covered[p] += ci.contains(truth[p]) as usize;
        }
    }
    let per_point: Vec<f64> = covered.iter().map(|&c| c as f64 / draws as f64).collect();
    let pooled = covered.iter().sum::<usize>() as f64 / (3 * draws) as f64;
    let secs = start.elapsed().as_secs_f64();
    report(
        8,
        "oracle exactness",
        (0.94..=0.96).contains(&pooled),
        format!("pooled coverage {pooled:.4} in [0.94, 0.96], per point {per_point:.3?}, {draws} draws, {secs:.2}s"),
    );
}

#[test]
fn criterion_9_undersmoothing_widths() {
    let mut cfg = SimConfig::new(100, 50, TestFunction::Sine);
    cfg.d_pre = 75;
    cfg.d_re = 40;
    cfg.reps = 20;
    cfg.seed = 9;
    cfg.tuning = TuningSource::Fixed(Tuning { lambda: 0.3, eta: 0.1 });
    let r = run_experiment(&cfg).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for &x in &cfg.eval_points {
        let pre = r.row(Estimator::Presmooth, x).unwrap().avg_width;
        let re = r.row(Estimator::Resmooth, x).unwrap().avg_width;
        let or = r.row(Estimator::Oracle, x).unwrap().avg_width;
        pass &= pre > 1.5 * re && (re - or).abs() <= 0.05 * or;
        detail.push(format!("x={x}: presmooth {pre:.3}, resmooth {re:.3}, oracle {or:.3}"));
    }
    report(
        9,
        "undersmoothing widths",
        pass,
        format!("{}; {} reps, {:.0}s", detail.join("; "), r.reps, r.runtime_secs),
    );
}
