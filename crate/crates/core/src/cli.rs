//! Command-line front end: flat key=value configs, run manifests and the
//! `simulate`, `fit`, `theory` and `replay` commands.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{Interval, KnotPlacement};
use crate::error::{Error, Result};
use crate::glasso::{theoretical_eta, theoretical_lambda, SolverOptions};
use crate::inference::{
    check_rate_conditions, kappa_minimax, residual_sigma, theoretical_deltas, Estimator, TheoryParams,
};
use crate::pipeline::{cv_eta, cv_lambda, fit_two_step_on, CvSettings, ResmoothSpec, Tuning, TwoStepConfig};
use crate::resmooth::Kernel;
use crate::simlab::{figure_curves, run_experiment, test_function, SimConfig, TuningSource};

pub const THREADS_ENV: &str = "SAMTWOSTEP_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "samtwostep",
    version,
    about = "Inference for one component of a sparse additive model"
)]
pub struct Cli {
    /// Worker threads (falls back to SAMTWOSTEP_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coverage experiment on simulated data.
    Simulate(SimulateArgs),
    /// Two-step fit of a CSV data set with header y,x1,...,xq.
    Fit(FitArgs),
    /// Theoretical penalties, error terms, rate conditions and the minimax constant.
    Theory(TheoryArgs),
    /// Re-runs the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    /// Flat key=value file; flags override its entries.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "samtwostep-out")]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long = "fn")]
    #[serde(rename = "fn")]
    pub function: Option<String>,
    #[arg(long)]
    pub s0: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub d_pre: Option<usize>,
    #[arg(long)]
    pub d_re: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Comma-separated evaluation points.
    #[arg(long, allow_hyphen_values = true)]
    pub points: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// cv, fixed or theoretical.
    #[arg(long)]
    pub tuning: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub pilot_reps: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub path_points: Option<usize>,
    #[arg(long)]
    pub path_ratio: Option<f64>,
    #[arg(long)]
    pub cv_seed: Option<u64>,
    /// Confidence parameter of the theoretical penalties.
    #[arg(long)]
    pub x: Option<f64>,
    #[arg(long)]
    pub c_eta: Option<f64>,
    #[arg(long)]
    pub psi: Option<f64>,
    /// uniform or quantile.
    #[arg(long)]
    pub knots: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    /// Also write pointwise curves over a grid and an SVG plot.
    #[arg(long)]
    pub figure: bool,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_hi: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FitArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "samtwostep-out")]
    #[serde(skip)]
    pub out: PathBuf,
    /// Input CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub d_pre: Option<usize>,
    #[arg(long)]
    pub d_re: Option<usize>,
    /// ls (least squares on a coarse basis) or local-poly.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub knots: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub path_points: Option<usize>,
    #[arg(long)]
    pub path_ratio: Option<f64>,
    #[arg(long)]
    pub cv_seed: Option<u64>,
    /// Noise level; estimated from the Lasso residuals when absent.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Comma-separated evaluation points.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Common covariate support as lo,hi; inferred per column when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub domain: Option<String>,
    /// presmooth or resmooth.
    #[arg(long)]
    pub estimator: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    #[arg(long)]
    pub diagnostics: bool,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TheoryArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "samtwostep-out")]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long)]
    pub rate_check: bool,
    #[arg(long)]
    pub kappa: bool,
    /// Theoretical lambda and eta.
    #[arg(long)]
    pub penalties: bool,
    /// The three error terms of the presmoothing bound.
    #[arg(long)]
    pub deltas: bool,
    #[arg(long)]
    pub gamma0: Option<f64>,
    #[arg(long)]
    pub gamma1: Option<f64>,
    #[arg(long)]
    pub r1: Option<f64>,
    #[arg(long)]
    pub r2: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub rho1: Option<f64>,
    #[arg(long)]
    pub cs: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub invdens: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub d1: Option<usize>,
    #[arg(long)]
    pub d2: Option<usize>,
    #[arg(long)]
    pub s0: Option<usize>,
    #[arg(long)]
    pub s1: Option<usize>,
    #[arg(long)]
    pub psi: Option<f64>,
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub rho0: Option<f64>,
    #[arg(long)]
    pub x: Option<f64>,
    #[arg(long)]
    pub y: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Defaults to a `replay` directory next to the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Merged key=value settings: file entries overridden by flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment, underscores in keys read as dashes.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Malformed(format!("config line {}: expected key=value", i + 1)))?;
            let key = k.trim().replace('_', "-");
            if key.is_empty() {
                return Err(Error::Malformed(format!("config line {}: empty key", i + 1)));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Settings { values })
    }

    /// Overlays the flags that were given; keys are checked against the flag names.
    fn merge<T: Serialize>(file: Option<&Path>, flags: &T) -> Result<Self> {
        let serde_json::Value::Object(map) = serde_json::to_value(flags)? else {
            unreachable!("argument structs serialize to objects")
        };
        let mut settings = match file {
            Some(path) => Settings::parse(&fs::read_to_string(path)?)?,
            None => Settings::default(),
        };
        if let Some(bad) = settings.values.keys().find(|k| !map.contains_key(*k)) {
            return Err(Error::InvalidArgument(format!("unknown config key '{bad}'")));
        }
        for (k, v) in map {
            match v {
                serde_json::Value::Null | serde_json::Value::Bool(false) => {}
                serde_json::Value::String(s) => {
                    settings.values.insert(k, s);
                }
                other => {
                    settings.values.insert(k, other.to_string());
                }
            }
        }
        Ok(settings)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::InvalidArgument(format!("{key} = '{v}': {e}")))
            })
            .transpose()
    }

    pub fn or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key)?
            .ok_or_else(|| Error::InvalidArgument(format!("missing required setting '{key}'")))
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        self.or(key, false)
    }

    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(key).map(|v| parse_list(key, v)).transpose()
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("{key}: '{s}': {e}")))
        })
        .collect()
}

/// Record of one run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub started: String,
    pub finished: String,
    pub version: String,
    pub threads: usize,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

fn write_manifest(
    out: &Path,
    command: &str,
    config: serde_json::Value,
    seed: Option<u64>,
    started: String,
    mut outputs: Vec<PathBuf>,
) -> Result<PathBuf> {
    let path = out.join("manifest.json");
    outputs.push(path.clone());
    let manifest = RunManifest {
        command: command.to_string(),
        config,
        seed,
        started,
        finished: Utc::now().to_rfc3339(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads: rayon::current_num_threads(),
        outputs,
    };
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Evaluation grid of a curve run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl FigureGrid {
    pub fn points(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.points)
    }
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect(),
    }
}

/// Fully resolved `simulate` configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRun {
    pub sim: SimConfig,
    pub figure: Option<FigureGrid>,
}

impl SimulateRun {
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let function = test_function(&s.require::<String>("fn")?)?;
        let mut sim = SimConfig::new(s.require("n")?, s.require("q")?, function);
        sim.s0 = s.or("s0", sim.s0)?;
        sim.rho = s.or("rho", sim.rho)?;
        sim.d_pre = s.or("d-pre", sim.d_pre)?;
        sim.d_re = s.or("d-re", sim.d_re)?;
        sim.reps = s.or("reps", sim.reps)?;
        sim.level = s.or("level", sim.level)?;
        if let Some(points) = s.list("points")? {
            sim.eval_points = points;
        }
        sim.seed = s.or("seed", sim.seed)?;
        sim.sigma = s.or("sigma", sim.sigma)?;
        sim.knots = s.or("knots", sim.knots)?;
        sim.solver = SolverOptions {
            tol: s.or("tol", sim.solver.tol)?,
            max_sweeps: s.or("max-sweeps", sim.solver.max_sweeps)?,
        };
        let fixed = s.raw("lambda").is_some() || s.raw("eta").is_some();
        let kind = s.or("tuning", if fixed { "fixed".to_string() } else { "cv".to_string() })?;
        sim.tuning = match kind.as_str() {
            "cv" => {
                let defaults = CvSettings::default();
                TuningSource::Cv {
                    pilot_reps: s.or("pilot-reps", 10)?,
                    cv: CvSettings {
                        folds: s.or("folds", defaults.folds)?,
                        path_points: s.or("path-points", defaults.path_points)?,
                        path_ratio: s.or("path-ratio", defaults.path_ratio)?,
                        seed: s.or("cv-seed", defaults.seed)?,
                    },
                }
            }
            "fixed" => TuningSource::Fixed(Tuning {
                lambda: s.require("lambda")?,
                eta: s.require("eta")?,
            }),
            "theoretical" => TuningSource::Theoretical {
                x: s.or("x", 2.0)?,
                c_eta: s.or("c-eta", 1.0)?,
                psi: s.or("psi", 1.0)?,
            },
            other => return Err(Error::InvalidArgument(format!("unknown tuning source '{other}'"))),
        };
        let figure = if s.flag("figure")? {
            Some(FigureGrid {
                lo: s.or("grid-lo", -2.4)?,
                hi: s.or("grid-hi", 2.4)?,
                points: s.or("grid-points", 97)?,
            })
        } else {
            None
        };
        sim.validate()?;
        Ok(SimulateRun { sim, figure })
    }

    pub fn execute(&self, out: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(out)?;
        let report = run_experiment(&self.sim)?;
        let csv = out.join("coverage.csv");
        report.save_csv(&csv)?;
        let json = out.join("report.json");
        fs::write(&json, serde_json::to_string_pretty(&report)?)?;
        let mut outputs = vec![csv, json];
        if let Some(grid) = &self.figure {
            let curves = figure_curves(&self.sim, &grid.points())?;
            outputs.extend(curves.save(out)?);
        }
        Ok(outputs)
    }
}

/// How `fit` chooses its penalties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FitTuning {
    Fixed(Tuning),
    Cv(CvSettings),
}

/// Fully resolved `fit` configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRun {
    pub data: PathBuf,
    pub model: TwoStepConfig,
    pub tuning: FitTuning,
    pub sigma: Option<f64>,
    pub level: f64,
    pub grid: Vec<f64>,
    pub estimator: Estimator,
    pub diagnostics: bool,
}

/// Response and covariates read from a `y,x1,...,xq` CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
}

pub fn read_data(path: &Path) -> Result<DataSet> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = reader.headers()?.clone();
    let q = header.len().saturating_sub(1);
    if q == 0 || &header[0] != "y" {
        return Err(Error::Malformed("header must read y,x1,...,xq".into()));
    }
    for (j, name) in header.iter().skip(1).enumerate() {
        if name != format!("x{}", j + 1) {
            return Err(Error::Malformed(format!(
                "column {} is named '{name}', expected x{}",
                j + 2,
                j + 1
            )));
        }
    }
    let mut y = Vec::new();
    let mut x = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Malformed(format!("row {}, column {}: '{field}' is not a number", i + 2, j + 1)))?;
            if !v.is_finite() {
                return Err(Error::Malformed(format!(
                    "row {}, column {}: non-finite value",
                    i + 2,
                    j + 1
                )));
            }
            if j == 0 {
                y.push(v);
            } else {
                x.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(Error::Malformed("no data rows".into()));
    }
    Ok(DataSet {
        x: DMatrix::from_row_slice(y.len(), q, &x),
        y: DVector::from_vec(y),
    })
}

impl FitRun {
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let data: PathBuf = s.require("data")?;
        let set = read_data(&data)?;
        let domains = match s.raw("domain") {
            Some(v) => {
                let b = parse_list("domain", v)?;
                if b.len() != 2 || !(b[1] > b[0]) {
                    return Err(Error::InvalidArgument("domain must read lo,hi with lo < hi".into()));
                }
                vec![Interval::new(b[0], b[1]); set.x.ncols()]
            }
            None => set
                .x
                .column_iter()
                .map(|c| {
                    let (lo, hi) = (c.min(), c.max());
                    if hi > lo {
                        Ok(Interval::new(lo, hi))
                    } else {
                        Err(Error::InvalidArgument("a covariate is constant; pass --domain".into()))
                    }
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let d_pre: usize = s.require("d-pre")?;
        let knots: KnotPlacement = s.or("knots", KnotPlacement::Uniform)?;
        let method = s.or("method", "ls".to_string())?;
        let resmooth = match method.as_str() {
            "ls" => ResmoothSpec::LeastSquares {
                dimension: s.require("d-re")?,
            },
            "local-poly" => ResmoothSpec::LocalPolynomial {
                bandwidth: s.require("bandwidth")?,
                degree: s.or("degree", 1)?,
                kernel: s.or("kernel", Kernel::default())?,
            },
            other => return Err(Error::InvalidArgument(format!("unknown resmoothing method '{other}'"))),
        };
        let mut model = TwoStepConfig::cubic_with_knots(d_pre, 4, domains, knots)?;
        model.resmooth = resmooth;
        model.solver = SolverOptions {
            tol: s.or("tol", model.solver.tol)?,
            max_sweeps: s.or("max-sweeps", model.solver.max_sweeps)?,
        };
        let tuning = match (s.get::<f64>("lambda")?, s.get::<f64>("eta")?) {
            (Some(lambda), Some(eta)) => FitTuning::Fixed(Tuning { lambda, eta }),
            (None, None) => {
                let d = CvSettings::default();
                FitTuning::Cv(CvSettings {
                    folds: s.or("folds", d.folds)?,
                    path_points: s.or("path-points", d.path_points)?,
                    path_ratio: s.or("path-ratio", d.path_ratio)?,
                    seed: s.or("cv-seed", d.seed)?,
                })
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "give both lambda and eta, or neither for cross-validation".into(),
                ))
            }
        };
        let first = model.domains[0];
        let grid = match s.list("grid")? {
            Some(g) => g,
            None => linspace(first.lo, first.hi, s.or("grid-points", 101)?),
        };
        if let Some(x) = grid.iter().find(|x| !first.contains(**x)) {
            return Err(Error::InvalidArgument(format!(
                "grid point {x} outside [{}, {}]",
                first.lo, first.hi
            )));
        }
        let estimator = match s.or("estimator", "resmooth".to_string())?.as_str() {
            "resmooth" => Estimator::Resmooth,
            "presmooth" => Estimator::Presmooth,
            other => return Err(Error::InvalidArgument(format!("unknown estimator '{other}'"))),
        };
        let sigma: Option<f64> = s.get("sigma")?;
        if let Some(sig) = sigma {
            if !(sig >= 0.0) {
                return Err(Error::InvalidArgument("sigma must be nonnegative".into()));
            }
        }
        let level = s.or("level", 0.95)?;
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidArgument("level must lie in (0, 1)".into()));
        }
        Ok(FitRun {
            data,
            model,
            tuning,
            sigma,
            level,
            grid,
            estimator,
            diagnostics: s.flag("diagnostics")?,
        })
    }

    pub fn execute(&self, out: &Path) -> Result<Vec<PathBuf>> {
        let set = read_data(&self.data)?;
        let design = self.model.design(&set.x)?;
        let solver = self.model.solver;
        let tuning = match &self.tuning {
            FitTuning::Fixed(t) => *t,
            FitTuning::Cv(cv) => Tuning {
                lambda: cv_lambda(&design, &set.y, cv, &solver)?,
                eta: cv_eta(&design, cv, &solver)?,
            },
        };
        let x1: Vec<f64> = set.x.column(0).iter().cloned().collect();
        let fit = fit_two_step_on(&self.model, design, x1, &set.y, tuning)?;
        let sigma = match self.sigma {
            Some(s) => s,
            None => {
                let df: usize = fit
                    .lasso
                    .fit
                    .active
                    .iter()
                    .map(|&j| fit.design.full().group(j).dim())
                    .sum();
                residual_sigma(&set.y, &fit.lasso.fit.fitted, df).map_err(|_| {
                    Error::InvalidArgument("too few observations to estimate sigma; pass --sigma".into())
                })?
            }
        };
        fs::create_dir_all(out)?;
        let curve = out.join("curve.csv");
        let mut w = csv::Writer::from_path(&curve)?;
        w.write_record(["x", "estimate", "lo", "hi"])?;
        for &x in &self.grid {
            let ci = match self.estimator {
                Estimator::Presmooth => fit.presmooth_ci(x, sigma, self.level)?,
                _ => fit.resmooth_ci(x, sigma, self.level)?,
            };
            w.write_record([x, ci.center, ci.lo(), ci.hi()].map(|v| v.to_string()))?;
        }
        w.flush()?;
        let mut outputs = vec![curve];
        if self.diagnostics {
            let path = out.join("diagnostics.json");
            let proj = &fit.projections;
            let diag = serde_json::json!({
                "lambda": tuning.lambda,
                "eta": tuning.eta,
                "sigma": sigma,
                "rho_hat": fit.debiased.rho_hat,
                "condition_number": fit.debiased.condition,
                "lasso": {
                    "active": fit.lasso.fit.active,
                    "kkt_gaps": fit.lasso.fit.kkt_gaps,
                    "converged": fit.lasso.fit.converged,
                    "sweeps": fit.lasso.fit.sweeps,
                },
                "projections": {
                    "active": proj.fits.iter().map(|f| f.active.clone()).collect::<Vec<_>>(),
                    "max_kkt_gap": proj.max_kkt_gap(),
                    "converged": proj.all_converged(),
                },
            });
            fs::write(&path, serde_json::to_string_pretty(&diag)?)?;
            outputs.push(path);
        }
        Ok(outputs)
    }
}

/// `theory` settings with the selected calculators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryRun {
    pub settings: Settings,
}

impl TheoryRun {
    /// Lines of the `key=value` table.
    pub fn table(&self) -> Result<Vec<(String, String)>> {
        let s = &self.settings;
        let mut rows = Vec::new();
        let mut any = false;
        if s.flag("rate-check")? {
            any = true;
            let c = check_rate_conditions(
                s.require("gamma0")?,
                s.require("gamma1")?,
                s.require("r1")?,
                s.require("r2")?,
                s.require("beta")?,
            )?;
            rows.push(("rate_first".into(), c.first.to_string()));
            rows.push(("rate_second".into(), c.second.to_string()));
            rows.push(("rate_third".into(), c.third.to_string()));
            rows.push(("rate_all".into(), c.all().to_string()));
        }
        if s.flag("kappa")? {
            any = true;
            let k = kappa_minimax(
                s.require("rho1")?,
                s.require("cs")?,
                s.require("sigma")?,
                s.require("invdens")?,
            )?;
            rows.push(("kappa".into(), k.to_string()));
        }
        if s.flag("penalties")? {
            any = true;
            let sigma: f64 = s.require("sigma")?;
            let (d, n, q): (usize, usize, usize) = (s.require("d")?, s.require("n")?, s.require("q")?);
            let x: f64 = s.or("x", 2.0)?;
            if !(sigma >= 0.0) || n == 0 || q == 0 || d == 0 || !(x > 0.0) {
                return Err(Error::InvalidArgument(
                    "penalties need sigma >= 0, x > 0 and positive d, n, q".into(),
                ));
            }
            rows.push(("lambda".into(), theoretical_lambda(sigma, d, n, q, x).to_string()));
            let c: f64 = s.or("c", 1.0)?;
            let psi: f64 = s.or("psi", 1.0)?;
            let d1: usize = s.or("d1", d)?;
            let s1: usize = s.or("s1", 1)?;
            if !(c > 0.0 && psi > 0.0 && psi <= 1.0) || d1 == 0 {
                return Err(Error::InvalidArgument(
                    "eta needs c > 0, psi in (0, 1] and d1 > 0".into(),
                ));
            }
            rows.push(("eta".into(), theoretical_eta(c, d, n, d1, q, s1, psi, x).to_string()));
        }
        if s.flag("deltas")? {
            any = true;
            let d = TheoryParams::default();
            let p = TheoryParams {
                r1: s.or("r1", d.r1)?,
                r2: s.or("r2", d.r2)?,
                s0: s.or("s0", d.s0)?,
                s1: s.or("s1", d.s1)?,
                psi: s.or("psi", d.psi)?,
                phi: s.or("phi", d.phi)?,
                rho0: s.or("rho0", d.rho0)?,
                gamma0: s.or("gamma0", d.gamma0)?,
                gamma1: s.or("gamma1", d.gamma1)?,
                x: s.or("x", d.x)?,
                y: s.or("y", d.y)?,
                sigma: s.or("sigma", d.sigma)?,
            };
            let (d1, d2, d3) = theoretical_deltas(
                &p,
                s.require("d1")?,
                s.require("d2")?,
                s.require("n")?,
                s.require("lambda")?,
                s.require("eta")?,
            )?;
            rows.push(("delta1".into(), d1.to_string()));
            rows.push(("delta2".into(), d2.to_string()));
            rows.push(("delta3".into(), d3.to_string()));
        }
        if !any {
            return Err(Error::InvalidArgument(
                "choose at least one of --rate-check, --kappa, --penalties, --deltas".into(),
            ));
        }
        Ok(rows)
    }

    pub fn execute(&self, out: &Path) -> Result<(Vec<PathBuf>, String)> {
        let text: String = self.table()?.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        fs::create_dir_all(out)?;
        let path = out.join("theory.txt");
        fs::write(&path, &text)?;
        Ok((vec![path], text))
    }
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let requested = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("{THREADS_ENV}='{v}' is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = requested {
        if n == 0 {
            return Err(Error::InvalidArgument("thread count must be positive".into()));
        }
        // a pool built earlier in the same process keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    let started = Utc::now().to_rfc3339();
    match cli.command {
        Command::Simulate(args) => {
            let run = SimulateRun::from_settings(&Settings::merge(args.config.as_deref(), &args)?)?;
            simulate(&run, &args.out, started)
        }
        Command::Fit(args) => {
            let run = FitRun::from_settings(&Settings::merge(args.config.as_deref(), &args)?)?;
            fit(&run, &args.out, started)
        }
        Command::Theory(args) => {
            let run = TheoryRun {
                settings: Settings::merge(args.config.as_deref(), &args)?,
            };
            theory(&run, &args.out, started)
        }
        Command::Replay(args) => {
            let manifest = RunManifest::load(&args.manifest)?;
            let out = match args.out {
                Some(o) => o,
                None => args.manifest.parent().unwrap_or(Path::new(".")).join("replay"),
            };
            let config = manifest.config;
            match manifest.command.as_str() {
                "simulate" => simulate(&serde_json::from_value(config)?, &out, started),
                "fit" => fit(&serde_json::from_value(config)?, &out, started),
                "theory" => theory(&serde_json::from_value(config)?, &out, started),
                other => Err(Error::Malformed(format!("manifest records unknown command '{other}'"))),
            }
        }
    }
}

fn simulate(run: &SimulateRun, out: &Path, started: String) -> Result<()> {
    let outputs = run.execute(out)?;
    let path = write_manifest(
        out,
        "simulate",
        serde_json::to_value(run)?,
        Some(run.sim.seed),
        started,
        outputs,
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

fn fit(run: &FitRun, out: &Path, started: String) -> Result<()> {
    let outputs = run.execute(out)?;
    let seed = match &run.tuning {
        FitTuning::Cv(cv) => Some(cv.seed),
        FitTuning::Fixed(_) => None,
    };
    let path = write_manifest(out, "fit", serde_json::to_value(run)?, seed, started, outputs)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn theory(run: &TheoryRun, out: &Path, started: String) -> Result<()> {
    let (outputs, text) = run.execute(out)?;
    print!("{text}");
    write_manifest(out, "theory", serde_json::to_value(run)?, None, started, outputs)?;
    Ok(())
}
