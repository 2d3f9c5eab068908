use samtwostep::error::Error;
use samtwostep::inference::Estimator;
use samtwostep::pipeline::Tuning;
use samtwostep::simlab::{
    gen_covariates, gen_data, latent_correlation, run_experiment, SimConfig, TestFunction, TuningSource,
};

fn small(reps: usize) -> SimConfig {
    let mut cfg = SimConfig::new(120, 5, TestFunction::Sine);
    cfg.d_pre = 10;
    cfg.d_re = 6;
    cfg.reps = reps;
    cfg.seed = 3;
    cfg.tuning = TuningSource::Fixed(Tuning { lambda: 0.1, eta: 0.05 });
    cfg
}

#[test]
fn covariates_are_uniform_on_the_support() {
    let x = gen_covariates(5000, 7, 3, 0.9, 1).unwrap();
    assert!(x.iter().all(|v| *v > -2.5 && *v < 2.5));
    for j in 0..7 {
        let mean = x.column(j).mean();
        let var = x.column(j).variance();
        assert!(mean.abs() < 0.1, "mean {mean}");
        assert!((var - 25.0 / 12.0).abs() < 0.1, "variance {var}");
    }
}

#[test]
fn latent_correlation_inverts_the_copula_map() {
    for rho in [0.0, 0.3, 0.9] {
        let r = latent_correlation(rho);
        let back = 6.0 / std::f64::consts::PI * (r / 2.0).asin();
        assert!((back - rho).abs() < 1e-12);
    }
}

#[test]
fn replications_are_reproducible_and_distinct() {
    let cfg = small(2);
    let a = gen_data(&cfg, 5).unwrap();
    assert_eq!(a, gen_data(&cfg, 5).unwrap());
    assert_ne!(a.x, gen_data(&cfg, 6).unwrap().x);
    let y = &a.f1 + &a.f_rest + &a.eps;
    assert!((y - &a.y).amax() < 1e-14);
    let mut other = cfg.clone();
    other.seed = 4;
    assert_ne!(a.y, gen_data(&other, 5).unwrap().y);
}

#[test]
fn experiment_report_shape_and_determinism() {
    let cfg = small(8);
    let a = run_experiment(&cfg).unwrap();
    assert_eq!(a.rows.len(), 9);
    assert_eq!(a.failures, 0);
    for r in &a.rows {
        assert!((0.0..=1.0).contains(&r.coverage));
        assert!(r.avg_width > 0.0);
    }
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.rows, b.rows);
    let mut csv_a = Vec::new();
    let mut csv_b = Vec::new();
    a.write_csv(&mut csv_a).unwrap();
    b.write_csv(&mut csv_b).unwrap();
    assert_eq!(csv_a, csv_b);
}

#[test]
fn one_replication_gives_binary_coverage() {
    let r = run_experiment(&small(1)).unwrap();
    assert!(r.rows.iter().all(|row| row.coverage == 0.0 || row.coverage == 1.0));
    assert!(r.row(Estimator::Oracle, 0.0).is_some());
}

#[test]
fn failing_replications_are_counted() {
    let mut cfg = small(4);
    cfg.n = 30;
    cfg.d_pre = 40;
    match run_experiment(&cfg) {
        Err(Error::TooManyFailures { failures, reps }) => assert_eq!((failures, reps), (4, 4)),
        other => panic!("expected too many failures, got {:?}", other.map(|r| r.rows)),
    }
}

#[test]
fn invalid_configurations_are_usage_errors() {
    let mut cfg = small(2);
    cfg.d_re = 50;
    assert!(run_experiment(&cfg).unwrap_err().is_usage());
    let mut cfg = small(2);
    cfg.eval_points = vec![3.0];
    assert!(run_experiment(&cfg).unwrap_err().is_usage());
}
