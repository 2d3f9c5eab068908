//! Simulation design and replicated coverage experiments.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::basis::{Interval, KnotPlacement};
use crate::error::{Error, Result};
use crate::glasso::{theoretical_eta, theoretical_lambda, SolverOptions};
use crate::inference::{pointwise_ci, Estimator, PointwiseCI};
use crate::linalg::ThinQr;
use crate::pipeline::{cv_eta, cv_lambda, fit_two_step_on, CvSettings, Tuning, TwoStepConfig};

/// Covariate support used by the simulation design.
pub const SIM_DOMAIN: Interval = Interval::new(-2.5, 2.5);

/// First stream used for pilot replications, far from the main-run streams.
const PILOT_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFunction {
    Sine,
    Line,
    Expo,
    Quad,
}

impl TestFunction {
    pub const ALL: [TestFunction; 4] = [
        TestFunction::Sine,
        TestFunction::Line,
        TestFunction::Expo,
        TestFunction::Quad,
    ];

    /// The function, centered for the uniform distribution on (-2.5, 2.5).
    pub fn eval(self, x: f64) -> f64 {
        match self {
            TestFunction::Sine => 2.0 * (2.0 * x).sin(),
            TestFunction::Line => x,
            TestFunction::Expo => (-x).exp() - 0.4 * 2.5f64.sinh(),
            TestFunction::Quad => x * x - 25.0 / 12.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TestFunction::Sine => "sine",
            TestFunction::Line => "line",
            TestFunction::Expo => "expo",
            TestFunction::Quad => "quad",
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestFunction::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown test function '{s}' (sine, line, expo, quad)")))
    }
}

pub fn test_function(name: &str) -> Result<TestFunction> {
    name.parse()
}

/// Latent Gaussian correlation giving uniform marginals with Pearson correlation `rho`.
pub fn latent_correlation(rho: f64) -> f64 {
    2.0 * (PI * rho / 6.0).sin()
}

/// Uniform covariates on (-2.5, 2.5), equicorrelated within consecutive blocks.
pub fn gen_covariates(n: usize, q: usize, block_size: usize, rho_target: f64, seed: u64) -> Result<DMatrix<f64>> {
    gen_covariates_with(n, q, block_size, rho_target, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn gen_covariates_with<R: Rng>(
    n: usize,
    q: usize,
    block_size: usize,
    rho_target: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if block_size == 0 {
        return Err(Error::InvalidArgument("block size must be at least 1".into()));
    }
    if !(rho_target.abs() < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target correlation must lie in (-1, 1), got {rho_target}"
        )));
    }
    let rho = latent_correlation(rho_target);
    let chol = |size: usize| {
        let corr = DMatrix::from_fn(size, size, |i, j| if i == j { 1.0 } else { rho });
        corr.cholesky().map(|c| c.l()).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "latent correlation {rho} is not positive definite for blocks of {size}"
            ))
        })
    };
    let full = chol(block_size.min(q.max(1)))?;
    let normal = Normal::standard();
    let mut x = DMatrix::zeros(n, q);
    let mut z = vec![0.0; block_size];
    for i in 0..n {
        let mut start = 0;
        while start < q {
            let size = block_size.min(q - start);
            let l = if size == full.nrows() {
                full.clone()
            } else {
                chol(size)?
            };
            for v in z.iter_mut().take(size) {
                *v = rng.sample(StandardNormal);
            }
            for a in 0..size {
                let latent: f64 = (0..=a).map(|b| l[(a, b)] * z[b]).sum();
                x[(i, start + a)] = -2.5 + 5.0 * normal.cdf(latent);
            }
            start += size;
        }
    }
    Ok(x)
}

/// How the penalties of each replication are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TuningSource {
    /// Averages of cross-validated choices over a pilot run.
    Cv {
        pilot_reps: usize,
        cv: CvSettings,
    },
    Fixed(Tuning),
    /// Theory-driven penalties; `c_eta` is the unspecified constant in `eta`.
    Theoretical {
        x: f64,
        c_eta: f64,
        psi: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub q: usize,
    pub function: TestFunction,
    pub s0: usize,
    pub rho: f64,
    pub d_pre: usize,
    pub d_re: usize,
    pub reps: usize,
    pub level: f64,
    pub eval_points: Vec<f64>,
    pub seed: u64,
    pub sigma: f64,
    pub tuning: TuningSource,
    pub solver: SolverOptions,
    /// Knot placement of every cubic B-spline basis.
    #[serde(default = "default_knots")]
    pub knots: KnotPlacement,
}

fn default_knots() -> KnotPlacement {
    KnotPlacement::Quantile
}

/// Solver settings for simulation runs; looser than the library default to keep
/// thousands of fits affordable.
pub const SIM_SOLVER: SolverOptions = SolverOptions {
    tol: 1e-6,
    max_sweeps: 10_000,
};

impl SimConfig {
    pub fn new(n: usize, q: usize, function: TestFunction) -> Self {
        SimConfig {
            n,
            q,
            function,
            s0: q.div_ceil(20),
            rho: 0.9,
            d_pre: 75,
            d_re: 40,
            reps: 500,
            level: 0.95,
            eval_points: vec![-1.5, 0.0, 1.0],
            seed: 0,
            sigma: 1.0,
            tuning: TuningSource::Cv {
                pilot_reps: 10,
                cv: CvSettings::default(),
            },
            solver: SIM_SOLVER,
            knots: KnotPlacement::Quantile,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n == 0 || self.q == 0 {
            return bad("n and q must be positive".into());
        }
        if self.s0 == 0 || self.s0 > self.q {
            return bad(format!("s0 must lie in 1..={}, got {}", self.q, self.s0));
        }
        if self.d_re > self.d_pre {
            return bad(format!("d_re ({}) exceeds d_pre ({})", self.d_re, self.d_pre));
        }
        if self.d_re < 4 {
            return bad("cubic B-spline dimensions must be at least 4".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level must lie in (0, 1), got {}", self.level));
        }
        if let Some(x) = self.eval_points.iter().find(|x| !(x.abs() < 2.5)) {
            return bad(format!("evaluation point {x} outside (-2.5, 2.5)"));
        }
        if !(self.rho.abs() < 1.0) {
            return bad(format!("correlation must lie in (-1, 1), got {}", self.rho));
        }
        if !(self.sigma >= 0.0) {
            return bad("sigma must be nonnegative".into());
        }
        match &self.tuning {
            TuningSource::Cv { pilot_reps, cv } => {
                if *pilot_reps == 0
                    || cv.folds < 2
                    || cv.path_points < 2
                    || !(cv.path_ratio > 0.0 && cv.path_ratio < 1.0)
                {
                    return bad("invalid cross-validation settings".into());
                }
            }
            TuningSource::Fixed(t) => {
                if !(t.lambda >= 0.0 && t.eta >= 0.0) {
                    return bad("fixed penalties must be nonnegative".into());
                }
            }
            TuningSource::Theoretical { x, c_eta, psi } => {
                if !(*x > 0.0 && *c_eta > 0.0 && *psi > 0.0 && *psi <= 1.0) {
                    return bad("theoretical tuning needs x > 0, c_eta > 0, psi in (0, 1]".into());
                }
            }
        }
        Ok(())
    }

    pub fn two_step(&self) -> Result<TwoStepConfig> {
        let mut c = TwoStepConfig::cubic_with_knots(self.d_pre, self.d_re, vec![SIM_DOMAIN; self.q], self.knots)?;
        c.solver = self.solver;
        Ok(c)
    }
}

/// One simulated data set together with its true components at the data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub f1: DVector<f64>,
    pub f_rest: DVector<f64>,
    pub eps: DVector<f64>,
}

/// Replication `rep`, drawn from its own stream of the configured seed.
pub fn gen_data(cfg: &SimConfig, rep: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep);
    let x = gen_covariates_with(cfg.n, cfg.q, cfg.s0, cfg.rho, &mut rng)?;
    let eps = DVector::from_fn(cfg.n, |_, _| cfg.sigma * rng.sample::<f64, _>(StandardNormal));
    let f = cfg.function;
    let f1 = DVector::from_fn(cfg.n, |i, _| f.eval(x[(i, 0)]));
    let f_rest = DVector::from_fn(cfg.n, |i, _| {
        (1..cfg.s0.min(cfg.q)).map(|j| f.eval(x[(i, j)]) / (j + 1) as f64).sum()
    });
    let y = &f1 + &f_rest + &eps;
    Ok(Dataset { x, y, f1, f_rest, eps })
}

/// Resolves the penalties used for every replication.
pub fn resolve_tuning(cfg: &SimConfig) -> Result<Tuning> {
    match &cfg.tuning {
        TuningSource::Fixed(t) => Ok(*t),
        TuningSource::Theoretical { x, c_eta, psi } => {
            let d2 = cfg.d_pre - 1;
            Ok(Tuning {
                lambda: theoretical_lambda(cfg.sigma, cfg.d_pre, cfg.n, cfg.q, *x),
                eta: theoretical_eta(*c_eta, d2, cfg.n, cfg.d_pre, cfg.q, cfg.s0, *psi, *x),
            })
        }
        TuningSource::Cv { pilot_reps, cv } => {
            let two = cfg.two_step()?;
            let picks = (0..*pilot_reps as u64)
                .into_par_iter()
                .map(|r| {
                    let data = gen_data(cfg, PILOT_STREAM + r)?;
                    let design = two.design(&data.x)?;
                    let settings = CvSettings {
                        seed: cv.seed.wrapping_add(r),
                        ..cv.clone()
                    };
                    Ok((
                        cv_lambda(&design, &data.y, &settings, &cfg.solver)?,
                        cv_eta(&design, &settings, &cfg.solver)?,
                    ))
                })
                .collect::<Result<Vec<(f64, f64)>>>()?;
            let k = picks.len() as f64;
            Ok(Tuning {
                lambda: picks.iter().map(|p| p.0).sum::<f64>() / k,
                eta: picks.iter().map(|p| p.1).sum::<f64>() / k,
            })
        }
    }
}

/// Intervals of one replication: `intervals[p][e]` for point `p` and estimator `e` (in [`Estimator::ALL`] order).
#[derive(Debug, Clone, PartialEq)]
pub struct RepIntervals {
    pub intervals: Vec<[PointwiseCI; 3]>,
    pub rho_hat: f64,
    pub condition: f64,
    pub converged: bool,
}

/// Fits all three estimators on replication `rep` and forms intervals at `points`.
pub fn run_replication(
    cfg: &SimConfig,
    two: &TwoStepConfig,
    tuning: Tuning,
    rep: u64,
    points: &[f64],
) -> Result<RepIntervals> {
    let data = gen_data(cfg, rep)?;
    let x1: Vec<f64> = data.x.column(0).iter().cloned().collect();
    let design = two.design(&data.x)?;
    let fit = fit_two_step_on(two, design, x1.clone(), &data.y, tuning)?;

    let coarse = two.coarse_basis(cfg.d_re, &x1)?;
    let oracle_qr = ThinQr::new(&coarse.eval_design(&x1)?)?;
    let oracle_coef = oracle_qr.solve(&(&data.f1 + &data.eps));

    let mut intervals = Vec::with_capacity(points.len());
    for &x in points {
        let row = coarse.eval_row(x)?;
        let oracle = pointwise_ci(
            &oracle_qr.weights(&row),
            row.dot(&oracle_coef),
            cfg.sigma,
            cfg.level,
            Estimator::Oracle,
        )?;
        intervals.push([
            oracle,
            fit.presmooth_ci(x, cfg.sigma, cfg.level)?,
            fit.resmooth_ci(x, cfg.sigma, cfg.level)?,
        ]);
    }
    Ok(RepIntervals {
        intervals,
        rho_hat: fit.debiased.rho_hat,
        condition: fit.debiased.condition,
        converged: fit.lasso.fit.converged && fit.projections.all_converged(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub x: f64,
    pub estimator: Estimator,
    pub coverage: f64,
    pub avg_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub config: SimConfig,
    pub tuning: Tuning,
    pub rows: Vec<CoverageRow>,
    pub reps: usize,
    pub failures: usize,
    /// Replication indices (streams of `config.seed`) that failed, with the reason.
    pub failed: Vec<(u64, String)>,
    pub unconverged: usize,
    pub mean_rho_hat: f64,
    pub max_condition: f64,
    pub runtime_secs: f64,
}

impl CoverageReport {
    pub fn row(&self, estimator: Estimator, x: f64) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.x == x)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "n",
            "q",
            "fn",
            "x",
            "estimator",
            "coverage",
            "avg_width",
            "reps",
            "failures",
        ])?;
        let c = &self.config;
        for r in &self.rows {
            w.write_record([
                c.n.to_string(),
                c.q.to_string(),
                c.function.to_string(),
                r.x.to_string(),
                r.estimator.to_string(),
                format!("{:.6}", r.coverage),
                format!("{:.6}", r.avg_width),
                self.reps.to_string(),
                self.failures.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Runs all replications, keeping their outcomes in replication order.
fn replicate(cfg: &SimConfig, tuning: Tuning, points: &[f64]) -> Result<Vec<Result<RepIntervals>>> {
    let two = cfg.two_step()?;
    Ok((0..cfg.reps as u64)
        .into_par_iter()
        .map(|rep| run_replication(cfg, &two, tuning, rep, points))
        .collect())
}

struct Split {
    ok: Vec<RepIntervals>,
    failed: Vec<(u64, String)>,
}

fn split_outcomes(cfg: &SimConfig, outcomes: Vec<Result<RepIntervals>>) -> Result<Split> {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (rep, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => ok.push(r),
            Err(e) if e.is_usage() => return Err(e),
            Err(e) => failed.push((rep as u64, e.to_string())),
        }
    }
    if failed.len() * 20 > cfg.reps || ok.is_empty() {
        return Err(Error::TooManyFailures {
            failures: failed.len(),
            reps: cfg.reps,
        });
    }
    Ok(Split { ok, failed })
}

pub fn run_experiment(cfg: &SimConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    let start = Instant::now();
    let tuning = resolve_tuning(cfg)?;
    let split = split_outcomes(cfg, replicate(cfg, tuning, &cfg.eval_points)?)?;
    let ok = &split.ok;
    let truth: Vec<f64> = cfg.eval_points.iter().map(|&x| cfg.function.eval(x)).collect();
    let mut rows = Vec::new();
    for (e, estimator) in Estimator::ALL.into_iter().enumerate() {
        for (p, &x) in cfg.eval_points.iter().enumerate() {
            let covered = ok.iter().filter(|r| r.intervals[p][e].contains(truth[p])).count();
            let width: f64 = ok.iter().map(|r| r.intervals[p][e].width()).sum();
            rows.push(CoverageRow {
                x,
                estimator,
                coverage: covered as f64 / ok.len() as f64,
                avg_width: width / ok.len() as f64,
            });
        }
    }
    Ok(CoverageReport {
        config: cfg.clone(),
        tuning,
        rows,
        reps: cfg.reps,
        failures: split.failed.len(),
        failed: split.failed,
        unconverged: ok.iter().filter(|r| !r.converged).count(),
        mean_rho_hat: ok.iter().map(|r| r.rho_hat).sum::<f64>() / ok.len() as f64,
        max_condition: ok.iter().map(|r| r.condition).fold(0.0, f64::max),
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Interval bounds of one estimator along a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub estimator: Estimator,
    pub center: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// The three panels: one replication's intervals, bounds averaged over
/// replications, and pointwise coverage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureCurves {
    pub grid: Vec<f64>,
    pub truth: Vec<f64>,
    pub single_run: Vec<Band>,
    pub averaged: Vec<Band>,
    pub coverage: Vec<(Estimator, Vec<f64>)>,
    pub tuning: Tuning,
    pub failures: usize,
}

pub fn figure_curves(cfg: &SimConfig, grid: &[f64]) -> Result<FigureCurves> {
    let cfg = SimConfig {
        eval_points: grid.to_vec(),
        ..cfg.clone()
    };
    cfg.validate()?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("figure grid is empty".into()));
    }
    let tuning = resolve_tuning(&cfg)?;
    let split = split_outcomes(&cfg, replicate(&cfg, tuning, grid)?)?;
    let ok = &split.ok;
    let truth: Vec<f64> = grid.iter().map(|&x| cfg.function.eval(x)).collect();
    let k = ok.len() as f64;
    let mut single_run = Vec::new();
    let mut averaged = Vec::new();
    let mut coverage = Vec::new();
    for (e, estimator) in Estimator::ALL.into_iter().enumerate() {
        let first = &ok[0];
        single_run.push(Band {
            estimator,
            center: first.intervals.iter().map(|p| p[e].center).collect(),
            lo: first.intervals.iter().map(|p| p[e].lo()).collect(),
            hi: first.intervals.iter().map(|p| p[e].hi()).collect(),
        });
        let mean = |f: &dyn Fn(&PointwiseCI) -> f64| -> Vec<f64> {
            (0..grid.len())
                .map(|p| ok.iter().map(|r| f(&r.intervals[p][e])).sum::<f64>() / k)
                .collect()
        };
        averaged.push(Band {
            estimator,
            center: mean(&|c| c.center),
            lo: mean(&|c| c.lo()),
            hi: mean(&|c| c.hi()),
        });
        coverage.push((
            estimator,
            (0..grid.len())
                .map(|p| ok.iter().filter(|r| r.intervals[p][e].contains(truth[p])).count() as f64 / k)
                .collect(),
        ));
    }
    Ok(FigureCurves {
        grid: grid.to_vec(),
        truth,
        single_run,
        averaged,
        coverage,
        tuning,
        failures: split.failed.len(),
    })
}

impl FigureCurves {
    fn write_band_csv(&self, bands: &[Band], path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "estimator", "estimate", "lo", "hi", "truth"])?;
        for b in bands {
            for (p, x) in self.grid.iter().enumerate() {
                w.write_record([
                    format!("{x:.6}"),
                    b.estimator.to_string(),
                    format!("{:.6}", b.center[p]),
                    format!("{:.6}", b.lo[p]),
                    format!("{:.6}", b.hi[p]),
                    format!("{:.6}", self.truth[p]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `figure_single_run.csv`, `figure_average_bounds.csv`,
    /// `figure_coverage.csv` and `figure.svg` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        let paths: Vec<_> = [
            "figure_single_run.csv",
            "figure_average_bounds.csv",
            "figure_coverage.csv",
            "figure.svg",
        ]
        .iter()
        .map(|f| dir.join(f))
        .collect();
        self.write_band_csv(&self.single_run, &paths[0])?;
        self.write_band_csv(&self.averaged, &paths[1])?;
        let mut w = csv::Writer::from_path(&paths[2])?;
        w.write_record(["x", "estimator", "coverage"])?;
        for (e, cov) in &self.coverage {
            for (x, c) in self.grid.iter().zip(cov) {
                w.write_record([format!("{x:.6}"), e.to_string(), format!("{c:.6}")])?;
            }
        }
        w.flush()?;
        std::fs::write(&paths[3], self.svg())?;
        Ok(paths)
    }

    /// Three stacked panels rendered as plain SVG.
    pub fn svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 220.0;
        const PAD: f64 = 40.0;
        let colors = ["#1b9e77", "#d95f02", "#7570b3"];
        let (x0, x1) = (self.grid[0], *self.grid.last().expect("non-empty grid"));
        let span = if x1 > x0 { x1 - x0 } else { 1.0 };
        let sx = |x: f64| PAD + (x - x0) / span * (W - 2.0 * PAD);
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"11\">\n",
            3.0 * H
        );
        let panel = |out: &mut String, top: f64, title: &str, series: Vec<(usize, Vec<f64>, bool)>| {
            let all: Vec<f64> = series
                .iter()
                .flat_map(|s| s.1.iter().cloned())
                .filter(|v| v.is_finite())
                .collect();
            let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
            let sy = |v: f64| top + H - PAD + (lo - v) / (hi - lo) * (H - 2.0 * PAD);
            out.push_str(&format!(
                "<rect x=\"{PAD}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>\n<text x=\"{PAD}\" y=\"{}\">{title}</text>\n",
                top + PAD,
                W - 2.0 * PAD,
                H - 2.0 * PAD,
                top + PAD - 6.0
            ));
            out.push_str(&format!(
                "<text x=\"4\" y=\"{:.1}\">{hi:.2}</text>\n<text x=\"4\" y=\"{:.1}\">{lo:.2}</text>\n",
                sy(hi) + 4.0,
                sy(lo)
            ));
            for (color, values, dashed) in series {
                let points: Vec<String> = self
                    .grid
                    .iter()
                    .zip(&values)
                    .map(|(x, v)| format!("{:.1},{:.1}", sx(*x), sy(*v)))
                    .collect();
                let stroke = if color < colors.len() { colors[color] } else { "#000" };
                let dash = if dashed { " stroke-dasharray=\"4 3\"" } else { "" };
                out.push_str(&format!(
                    "<polyline fill=\"none\" stroke=\"{stroke}\"{dash} points=\"{}\"/>\n",
                    points.join(" ")
                ));
            }
        };
        let bands = |bands: &[Band]| {
            let mut s: Vec<(usize, Vec<f64>, bool)> = Vec::new();
            for (i, b) in bands.iter().enumerate() {
                s.push((i, b.lo.clone(), true));
                s.push((i, b.hi.clone(), true));
            }
            s.push((usize::MAX, self.truth.clone(), false));
            s
        };
        panel(&mut out, 0.0, "single replication", bands(&self.single_run));
        panel(&mut out, H, "average bounds", bands(&self.averaged));
        let cov = self
            .coverage
            .iter()
            .enumerate()
            .map(|(i, (_, c))| (i, c.clone(), false))
            .collect();
        panel(&mut out, 2.0 * H, "pointwise coverage", cov);
        for (i, e) in Estimator::ALL.iter().enumerate() {
            out.push_str(&format!(
                "<text x=\"{}\" y=\"14\" fill=\"{}\">{e}</text>\n",
                W - 3.0 * 70.0 + i as f64 * 70.0,
                colors[i]
            ));
        }
        out.push_str("</svg>\n");
        out
    }
}
