//! The two-step procedure on one data set: Lasso presmoothing, debiasing,
//! resmoothing and pointwise intervals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{affine_rescale, build_basis_on, Basis, BasisSpec, Interval, KnotPlacement};
use crate::despars::{
    debias, fit_full_lasso, relaxed_projections, AdditiveDesign, DebiasedFit, LassoSplit, ProjectionSet,
};
use crate::error::{Error, Result};
use crate::glasso::{cross_validate, cross_validate_multi, lambda_path, lambda_path_multi, SolverOptions};
use crate::inference::{pointwise_ci, Estimator, PointwiseCI};
use crate::resmooth::{composite_weights, pseudo_responses, Kernel, Resmoothed, Resmoother};

/// Second-step smoother specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum ResmoothSpec {
    /// Least squares on a basis with the family and degree of the presmoother.
    LeastSquares { dimension: usize },
    LocalPolynomial {
        bandwidth: f64,
        degree: usize,
        kernel: Kernel,
    },
}

/// Penalty levels for the full Lasso (`lambda`) and the relaxed projections (`eta`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub lambda: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSettings {
    pub folds: usize,
    pub path_points: usize,
    pub path_ratio: f64,
    pub seed: u64,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings {
            folds: 10,
            path_points: 50,
            path_ratio: 1e-3,
            seed: 0,
        }
    }
}

/// Bases and solver settings of the two-step procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStepConfig {
    /// Presmoothing basis for the first covariate, on the unit interval.
    pub first: BasisSpec,
    /// Basis for every other covariate, on the unit interval.
    pub nuisance: BasisSpec,
    pub resmooth: ResmoothSpec,
    /// Support of each covariate; values are mapped affinely to the unit interval.
    pub domains: Vec<Interval>,
    pub solver: SolverOptions,
}

impl TwoStepConfig {
    /// Cubic B-splines of dimension `d_pre` for presmoothing and `d_re` for resmoothing.
    pub fn cubic(d_pre: usize, d_re: usize, domains: Vec<Interval>) -> Result<Self> {
        Self::cubic_with_knots(d_pre, d_re, domains, KnotPlacement::Uniform)
    }

    pub fn cubic_with_knots(d_pre: usize, d_re: usize, domains: Vec<Interval>, knots: KnotPlacement) -> Result<Self> {
        let spec = BasisSpec::cubic_bspline(d_pre)?.with_knots(knots);
        Ok(TwoStepConfig {
            first: spec,
            nuisance: spec,
            resmooth: ResmoothSpec::LeastSquares { dimension: d_re },
            domains,
            solver: SolverOptions::default(),
        })
    }

    fn first_domain(&self) -> Result<Interval> {
        self.domains
            .first()
            .copied()
            .ok_or_else(|| Error::InvalidArgument("no covariate domains given".into()))
    }

    /// Presmoothing basis for the first covariate on its own scale.
    pub fn first_basis(&self, x1: &[f64]) -> Result<Basis> {
        build_basis_on(self.first.with_domain(self.first_domain()?), x1)
    }

    /// Basis of the given dimension, same family, degree and knot placement as the presmoother.
    pub fn coarse_basis(&self, dimension: usize, x1: &[f64]) -> Result<Basis> {
        let p = self.first.degree;
        let spec = match self.first.family {
            crate::basis::BasisFamily::BSpline => {
                if dimension <= p {
                    return Err(Error::InvalidArgument(format!(
                        "resmoothing dimension {dimension} too small for degree {p}"
                    )));
                }
                BasisSpec::bspline(p, dimension - p)
            }
            crate::basis::BasisFamily::PiecewiseLegendre => {
                if dimension == 0 || !dimension.is_multiple_of(p + 1) {
                    return Err(Error::InvalidArgument(format!(
                        "piecewise resmoothing dimension {dimension} must be a positive multiple of {}",
                        p + 1
                    )));
                }
                BasisSpec::piecewise_legendre(p, dimension / (p + 1))
            }
        };
        build_basis_on(spec.with_knots(self.first.knots).with_domain(self.first_domain()?), x1)
    }

    pub fn resmoother(&self, x1: &[f64]) -> Result<Resmoother> {
        Ok(match self.resmooth {
            ResmoothSpec::LeastSquares { dimension } => Resmoother::LeastSquares(self.coarse_basis(dimension, x1)?),
            ResmoothSpec::LocalPolynomial {
                bandwidth,
                degree,
                kernel,
            } => Resmoother::LocalPolynomial {
                bandwidth,
                degree,
                kernel,
            },
        })
    }

    /// Builds the additive design; nuisance covariates are mapped to the unit interval.
    pub fn design(&self, x: &DMatrix<f64>) -> Result<AdditiveDesign> {
        if self.domains.len() != x.ncols() {
            return Err(Error::InvalidArgument(format!(
                "{} covariate domains for {} covariates",
                self.domains.len(),
                x.ncols()
            )));
        }
        let mut scaled = x.clone();
        let mut nuisance = Vec::with_capacity(x.ncols().saturating_sub(1));
        for j in 1..x.ncols() {
            for i in 0..x.nrows() {
                scaled[(i, j)] = affine_rescale(x[(i, j)], self.domains[j], Interval::unit())?;
            }
            let xj: Vec<f64> = scaled.column(j).iter().cloned().collect();
            nuisance.push(build_basis_on(self.nuisance, &xj)?);
        }
        let x1: Vec<f64> = x.column(0).iter().cloned().collect();
        AdditiveDesign::with_bases(&self.first_basis(&x1)?, &nuisance, &scaled)
    }
}

/// Cross-validated `lambda` for the full Lasso.
pub fn cv_lambda(design: &AdditiveDesign, y: &DVector<f64>, cv: &CvSettings, opts: &SolverOptions) -> Result<f64> {
    let grid = lambda_path(design.full(), y, cv.path_points, cv.path_ratio)?;
    Ok(cross_validate(design.full(), y, &grid, cv.folds, cv.seed, opts)?.selected)
}

/// Cross-validated common `eta` for the relaxed projections of all first-block functions.
pub fn cv_eta(design: &AdditiveDesign, cv: &CvSettings, opts: &SolverOptions) -> Result<f64> {
    if design.nuisance().is_empty() {
        return Ok(0.0);
    }
    let responses = design.first().raw();
    let grid = lambda_path_multi(design.nuisance(), responses, cv.path_points, cv.path_ratio)?;
    Ok(cross_validate_multi(design.nuisance(), responses, &grid, cv.folds, cv.seed ^ 0x5eed, opts)?.selected)
}

/// The fitted two-step estimator.
pub struct TwoStepFit {
    pub design: AdditiveDesign,
    pub x1: Vec<f64>,
    pub tuning: Tuning,
    pub lasso: LassoSplit,
    pub projections: ProjectionSet,
    pub debiased: DebiasedFit,
    pub resmoothed: Resmoothed,
}

pub fn fit_two_step(config: &TwoStepConfig, x: &DMatrix<f64>, y: &DVector<f64>, tuning: Tuning) -> Result<TwoStepFit> {
    let design = config.design(x)?;
    fit_two_step_on(config, design, x.column(0).iter().cloned().collect(), y, tuning)
}

/// Like [`fit_two_step`] for a design that has already been built.
pub fn fit_two_step_on(
    config: &TwoStepConfig,
    design: AdditiveDesign,
    x1: Vec<f64>,
    y: &DVector<f64>,
    tuning: Tuning,
) -> Result<TwoStepFit> {
    if y.len() != design.n() {
        return Err(Error::InvalidArgument("response length differs from the design".into()));
    }
    let lasso = fit_full_lasso(&design, y, tuning.lambda, &config.solver)?;
    let projections = relaxed_projections(&design, tuning.eta, &config.solver, None)?;
    let debiased = debias(y, design.first(), &lasso, &projections)?;
    let resmoothed = config.resmoother(&x1)?.fit(&pseudo_responses(&debiased), &x1)?;
    Ok(TwoStepFit {
        design,
        x1,
        tuning,
        lasso,
        projections,
        debiased,
        resmoothed,
    })
}

impl TwoStepFit {
    pub fn presmooth_ci(&self, x: f64, sigma: f64, level: f64) -> Result<PointwiseCI> {
        let w = self.debiased.weights(x)?;
        pointwise_ci(&w, self.debiased.evaluate(x)?, sigma, level, Estimator::Presmooth)
    }

    pub fn resmooth_ci(&self, x: f64, sigma: f64, level: f64) -> Result<PointwiseCI> {
        let (estimate, s) = self.resmoothed.at(x)?;
        let w = composite_weights(&self.debiased, &s);
        pointwise_ci(&w, estimate, sigma, level, Estimator::Resmooth)
    }
}
