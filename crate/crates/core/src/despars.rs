//! Desparsified presmoothing estimator of the first additive component.
//!
//! The first block is orthonormalised in the empirical inner product (the
//! `phi` basis). Each raw first-block basis function is regressed on the
//! remaining blocks by a group Lasso; the fitted values give the relaxed
//! projections `Delta`. With `Z = Phi - Delta` and `M = Z^T Phi / n`, the
//! debiased coefficients are `M^{-1} Z^T (Y - f_{-1}) / n`.

use nalgebra::{DMatrix, DVector};

use crate::basis::{center_empirically, Basis, CenteredDesign};
use crate::error::{Error, Result};
use crate::glasso::{fit_group_lasso, fit_group_lasso_multi, GroupDesign, GroupLassoFit, SolverOptions};
use crate::linalg::{condition_number, guarded_solve, spectral_norm, ThinQr};

/// Largest accepted condition number of `Z^T X / n`.
pub const MAX_CONDITION: f64 = 1e12;

/// Gram–Schmidt orthonormalised first block.
#[derive(Debug, Clone)]
pub struct PhiBasis {
    raw: DMatrix<f64>,
    phi: DMatrix<f64>,
    transform: DMatrix<f64>,
    inverse_transform: DMatrix<f64>,
    basis: Option<Basis>,
}

/// Modified Gram–Schmidt in the empirical inner product, with one
/// re-orthogonalisation pass. Columns with disjoint support stay untouched by
/// each other, so piecewise bases keep their locality.
pub fn gram_schmidt_empirical(first_block: &DMatrix<f64>) -> Result<PhiBasis> {
    gram_schmidt_impl(first_block, None)
}

fn gram_schmidt_impl(raw: &DMatrix<f64>, basis: Option<Basis>) -> Result<PhiBasis> {
    let (n, d) = raw.shape();
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("first-block design"));
    }
    let nf = n as f64;
    let mut phi = raw.clone();
    let mut r = DMatrix::zeros(d, d);
    for k in 0..d {
        let original = (raw.column(k).norm_squared() / nf.max(1.0)).sqrt();
        for _pass in 0..2 {
            for j in 0..k {
                let c = phi.column(j).dot(&phi.column(k)) / nf;
                if c != 0.0 {
                    let pj = phi.column(j).into_owned();
                    phi.column_mut(k).axpy(-c, &pj, 1.0);
                    r[(j, k)] += c;
                }
            }
        }
        let norm = (phi.column(k).norm_squared() / nf.max(1.0)).sqrt();
        if n == 0 || !(norm > 1e-10 * original.max(f64::MIN_POSITIVE)) {
            let location = match basis.as_ref().and_then(|b| b.support_interval(k)) {
                Some(i) => format!(
                    "basis function {k} (interval {i}) has no empirical support independent of the others; \
                     the interval likely holds fewer than {} observations",
                    basis.as_ref().map(|b| b.spec().degree + 1).unwrap_or(1)
                ),
                None => format!("basis function {k} is empirically dependent on the preceding ones ({n} observations)"),
            };
            return Err(Error::RankDeficient(location));
        }
        phi.column_mut(k).scale_mut(1.0 / norm);
        r[(k, k)] = norm;
    }
    let transform = r
        .solve_upper_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::RankDeficient("Gram–Schmidt record is singular".into()))?;
    Ok(PhiBasis {
        raw: raw.clone(),
        phi,
        transform,
        inverse_transform: r,
        basis,
    })
}

impl PhiBasis {
    /// Evaluates `basis` at `x1` and orthonormalises the result.
    pub fn from_basis(basis: &Basis, x1: &[f64]) -> Result<Self> {
        let raw = basis.eval_design(x1)?;
        gram_schmidt_impl(&raw, Some(basis.clone()))
    }

    pub fn n(&self) -> usize {
        self.raw.nrows()
    }

    pub fn dim(&self) -> usize {
        self.raw.ncols()
    }

    /// Raw first-block design `B` (`n x d1`).
    pub fn raw(&self) -> &DMatrix<f64> {
        &self.raw
    }

    /// Orthonormal design `Phi = B T`.
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    /// Upper-triangular `T`.
    pub fn transform(&self) -> &DMatrix<f64> {
        &self.transform
    }

    pub fn inverse_transform(&self) -> &DMatrix<f64> {
        &self.inverse_transform
    }

    pub fn basis(&self) -> Option<&Basis> {
        self.basis.as_ref()
    }

    /// `phi(x) = T^T b(x)`.
    pub fn eval_row(&self, x: f64) -> Result<DVector<f64>> {
        let basis = self.basis.as_ref().ok_or_else(|| {
            Error::InvalidArgument("phi basis was built from a bare matrix and cannot be evaluated".into())
        })?;
        Ok(self.transform.tr_mul(&basis.eval_row(x)?))
    }

    /// Phi coordinates of a function given by raw-basis coefficients.
    pub fn to_phi_coordinates(&self, raw: &DVector<f64>) -> DVector<f64> {
        &self.inverse_transform * raw
    }

    pub fn to_raw_coordinates(&self, phi: &DVector<f64>) -> DVector<f64> {
        &self.transform * phi
    }
}

/// First block plus centered nuisance blocks of an additive model.
#[derive(Debug, Clone)]
pub struct AdditiveDesign {
    first: PhiBasis,
    nuisance: GroupDesign,
    full: GroupDesign,
    nuisance_centering: Vec<CenteredDesign>,
}

impl AdditiveDesign {
    /// `x` holds one column per covariate; column 0 is the component of interest.
    /// Nuisance blocks are centered and their last column dropped, which keeps
    /// the span of the empirically centered space and makes the block full rank.
    pub fn new(first: &Basis, nuisance: &Basis, x: &DMatrix<f64>) -> Result<Self> {
        let rest = vec![nuisance.clone(); x.ncols().saturating_sub(1)];
        Self::with_bases(first, &rest, x)
    }

    /// Like [`AdditiveDesign::new`] with one basis per nuisance covariate.
    pub fn with_bases(first: &Basis, nuisance: &[Basis], x: &DMatrix<f64>) -> Result<Self> {
        if x.ncols() == 0 {
            return Err(Error::InvalidArgument("design has no covariates".into()));
        }
        if nuisance.len() + 1 != x.ncols() {
            return Err(Error::InvalidArgument(format!(
                "{} nuisance bases for {} nuisance covariates",
                nuisance.len(),
                x.ncols() - 1
            )));
        }
        let x1: Vec<f64> = x.column(0).iter().cloned().collect();
        let phi = PhiBasis::from_basis(first, &x1)?;
        let mut blocks = Vec::with_capacity(x.ncols() - 1);
        let mut centering = Vec::with_capacity(x.ncols() - 1);
        for (j, basis) in (1..x.ncols()).zip(nuisance) {
            let xj: Vec<f64> = x.column(j).iter().cloned().collect();
            let c = center_empirically(&basis.eval_design(&xj)?)?;
            let keep = c.centered.ncols().saturating_sub(1);
            if keep == 0 {
                return Err(Error::InvalidArgument(
                    "nuisance basis needs at least two functions".into(),
                ));
            }
            blocks.push(c.centered.columns(0, keep).into_owned());
            centering.push(c);
        }
        Self::from_parts(phi, GroupDesign::from_blocks(x.nrows(), blocks)?, centering)
    }

    /// Assembles a design from a first block and an already orthonormalised nuisance design.
    pub fn from_parts(first: PhiBasis, nuisance: GroupDesign, centering: Vec<CenteredDesign>) -> Result<Self> {
        if !nuisance.is_empty() && nuisance.n() != first.n() {
            return Err(Error::InvalidArgument(
                "first and nuisance blocks differ in row count".into(),
            ));
        }
        let full = GroupDesign::with_leading_block(first.raw().clone(), &nuisance)?;
        Ok(AdditiveDesign {
            first,
            nuisance,
            full,
            nuisance_centering: centering,
        })
    }

    pub fn n(&self) -> usize {
        self.first.n()
    }

    /// Number of covariates `q`.
    pub fn q(&self) -> usize {
        self.nuisance.len() + 1
    }

    pub fn first(&self) -> &PhiBasis {
        &self.first
    }

    pub fn nuisance(&self) -> &GroupDesign {
        &self.nuisance
    }

    /// Group design with the raw first block as group 0.
    pub fn full(&self) -> &GroupDesign {
        &self.full
    }

    /// Column means subtracted from each nuisance block.
    pub fn nuisance_centering(&self) -> &[CenteredDesign] {
        &self.nuisance_centering
    }
}

/// The full-model Lasso fit split into its first-block part and the rest.
#[derive(Debug, Clone)]
pub struct LassoSplit {
    pub fit: GroupLassoFit,
    /// Coefficients of the first component in phi coordinates.
    pub beta_lasso: DVector<f64>,
    /// `f^L_{-1}` at the data.
    pub nuisance_fitted: DVector<f64>,
}

impl LassoSplit {
    pub fn new(design: &AdditiveDesign, fit: GroupLassoFit) -> Self {
        let first = design.first.raw() * &fit.coefficients[0];
        let nuisance_fitted = &fit.fitted - first;
        let beta_lasso = design.first.to_phi_coordinates(&fit.coefficients[0]);
        LassoSplit {
            fit,
            beta_lasso,
            nuisance_fitted,
        }
    }

    /// A split with a given nuisance fit and zero first-block coefficients.
    pub fn from_nuisance(design: &AdditiveDesign, nuisance_fitted: DVector<f64>) -> Self {
        let mut fit = GroupLassoFit::zero(design.full(), &nuisance_fitted, 0.0);
        fit.fitted = nuisance_fitted.clone();
        LassoSplit {
            fit,
            beta_lasso: DVector::zeros(design.first.dim()),
            nuisance_fitted,
        }
    }
}

pub fn fit_full_lasso(
    design: &AdditiveDesign,
    y: &DVector<f64>,
    lambda: f64,
    opts: &SolverOptions,
) -> Result<LassoSplit> {
    let fit = fit_group_lasso(design.full(), y, lambda, opts)?;
    Ok(LassoSplit::new(design, fit))
}

/// Group-Lasso regression of `phi_k` on the other blocks.
pub fn relaxed_projection(
    phi: &PhiBasis,
    k: usize,
    other: &GroupDesign,
    eta: f64,
    opts: &SolverOptions,
) -> Result<GroupLassoFit> {
    if k >= phi.dim() {
        return Err(Error::InvalidArgument(format!("phi index {k} out of range")));
    }
    let response = phi.phi().column(k).into_owned();
    if other.is_empty() {
        return Ok(GroupLassoFit::zero(other, &response, eta));
    }
    fit_group_lasso(other, &response, eta, opts)
}

/// Relaxed projections of every first-block function, in phi coordinates at the data.
#[derive(Debug, Clone)]
pub struct ProjectionSet {
    pub eta: f64,
    /// One fit per raw first-block function (empty when forced to zero).
    pub fits: Vec<GroupLassoFit>,
    /// `Delta` with column `k` equal to the projection of `phi_k` at the data.
    pub delta: DMatrix<f64>,
}

impl ProjectionSet {
    /// The projection forced to zero.
    pub fn zero(phi: &PhiBasis) -> Self {
        ProjectionSet {
            eta: f64::INFINITY,
            fits: Vec::new(),
            delta: DMatrix::zeros(phi.n(), phi.dim()),
        }
    }

    /// Maps fits of the raw basis functions to phi coordinates by linearity.
    pub fn from_raw_fits(phi: &PhiBasis, eta: f64, fits: Vec<GroupLassoFit>) -> Result<Self> {
        if fits.len() != phi.dim() {
            return Err(Error::InvalidArgument(
                "one projection per first-block function required".into(),
            ));
        }
        let mut raw = DMatrix::zeros(phi.n(), phi.dim());
        for (k, f) in fits.iter().enumerate() {
            raw.set_column(k, &f.fitted);
        }
        Ok(ProjectionSet {
            eta,
            delta: raw * phi.transform(),
            fits,
        })
    }

    pub fn all_converged(&self) -> bool {
        self.fits.iter().all(|f| f.converged)
    }

    pub fn max_kkt_gap(&self) -> f64 {
        self.fits.iter().map(|f| f.max_kkt_gap()).fold(0.0, f64::max)
    }
}

/// Projects all raw first-block functions on the nuisance blocks at penalty `eta`.
pub fn relaxed_projections(
    design: &AdditiveDesign,
    eta: f64,
    opts: &SolverOptions,
    warm: Option<&[GroupLassoFit]>,
) -> Result<ProjectionSet> {
    let phi = design.first();
    if design.nuisance().is_empty() {
        let fits = (0..phi.dim())
            .map(|k| GroupLassoFit::zero(design.nuisance(), &phi.raw().column(k).into_owned(), eta))
            .collect::<Vec<_>>();
        return ProjectionSet::from_raw_fits(phi, eta, fits);
    }
    let fits = fit_group_lasso_multi(design.nuisance(), phi.raw(), eta, opts, warm)?;
    ProjectionSet::from_raw_fits(phi, eta, fits)
}

/// The debiased first-component estimator.
#[derive(Debug, Clone)]
pub struct DebiasedFit {
    pub phi: PhiBasis,
    /// `Z = Phi - Delta`.
    pub z1: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    /// `M = Z^T Phi / n`.
    pub gram: DMatrix<f64>,
    /// `M^{-1} Z^T / n`, mapping `Y - f_{-1}` to coefficients.
    pub influence: DMatrix<f64>,
    pub beta_lasso: DVector<f64>,
    pub beta: DVector<f64>,
    /// `f^L_{-1}` at the data.
    pub offset: DVector<f64>,
    pub condition: f64,
    pub rho_hat: f64,
}

/// Computes `beta = M^{-1} Z^T (Y - f^L_{-1}) / n`.
pub fn debias(
    y: &DVector<f64>,
    phi: &PhiBasis,
    lasso: &LassoSplit,
    projections: &ProjectionSet,
) -> Result<DebiasedFit> {
    let n = phi.n();
    if y.len() != n || lasso.nuisance_fitted.len() != n || projections.delta.shape() != phi.phi().shape() {
        return Err(Error::InvalidArgument("debias inputs disagree in dimension".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response"));
    }
    let nf = n as f64;
    let delta = projections.delta.clone();
    let z1 = phi.phi() - &delta;
    let gram = z1.tr_mul(phi.phi()) / nf;
    let zt = z1.transpose() / nf;
    let (influence, condition) = guarded_solve(&gram, &zt, MAX_CONDITION)?;
    let beta = &influence * (y - &lasso.nuisance_fitted);
    Ok(DebiasedFit {
        phi: phi.clone(),
        rho_hat: spectral_norm(&delta) / nf.sqrt(),
        z1,
        delta,
        gram,
        influence,
        beta_lasso: lasso.beta_lasso.clone(),
        beta,
        offset: lasso.nuisance_fitted.clone(),
        condition,
    })
}

impl DebiasedFit {
    /// `f_1(x) = phi(x)^T beta`.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        Ok(self.phi.eval_row(x)?.dot(&self.beta))
    }

    /// `f_1` at the data (the pseudo-responses).
    pub fn fitted(&self) -> DVector<f64> {
        self.phi.phi() * &self.beta
    }

    /// Weights `w` on `Y` with `f_1(x) = w^T (Y - f^L_{-1})`.
    pub fn weights(&self, x: f64) -> Result<DVector<f64>> {
        Ok(self.weights_for_phi(&self.phi.eval_row(x)?))
    }

    /// Weights on `Y` of the linear functional `v^T beta`.
    pub fn weights_for_phi(&self, v: &DVector<f64>) -> DVector<f64> {
        self.influence.tr_mul(v)
    }

    /// The alternative form `beta_lasso + M^{-1} Z^T (Y - f^L) / n`.
    pub fn beta_from_lasso_residual(&self, y: &DVector<f64>) -> DVector<f64> {
        let lasso_fit = &self.offset + self.phi.phi() * &self.beta_lasso;
        &self.beta_lasso + &self.influence * (y - lasso_fit)
    }
}

/// `(I - A^T)^{-1} (Phi - Delta)^T (Y - f^L_{-1}) / n` with `A = Phi^T Delta / n`, the
/// coordinate matrix of the first-block projection of the relaxed projection.
pub fn operator_form_estimate(fit: &DebiasedFit, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (lhs, rhs) = operator_system(fit, y);
    let rhs = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
    let (sol, _) = guarded_solve(&lhs, &rhs, MAX_CONDITION)?;
    Ok(sol.column(0).into_owned())
}

fn operator_system(fit: &DebiasedFit, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let phi = fit.phi.phi();
    let nf = phi.nrows() as f64;
    let a = phi.tr_mul(&fit.delta) / nf;
    let d = a.nrows();
    let lhs = DMatrix::identity(d, d) - a.transpose();
    let rhs = (phi - &fit.delta).tr_mul(&(y - &fit.offset)) / nf;
    (lhs, rhs)
}

/// Evaluates the operator form by its Neumann series; diagnostic only.
pub fn neumann_series_estimate(fit: &DebiasedFit, y: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
    if !(fit.rho_hat < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "Neumann series needs an empirical angle below 1, got {}",
            fit.rho_hat
        )));
    }
    let (lhs, rhs) = operator_system(fit, y);
    let d = lhs.nrows();
    let at = DMatrix::identity(d, d) - &lhs;
    let mut term = rhs.clone();
    let mut sum = rhs;
    for terms in 1..=100_000 {
        term = &at * term;
        sum += &term;
        if term.norm() < 1e-12 {
            return Ok((sum, terms));
        }
    }
    Err(Error::IllConditioned {
        condition: condition_number(&lhs),
    })
}

/// `sup ||Pi g||_n` over `||g||_n <= 1` in the first block: the top singular value of `Delta / sqrt(n)`.
pub fn empirical_angle(fit: &DebiasedFit) -> f64 {
    fit.rho_hat
}

/// Least-squares fit of `f1 + eps` on the first block.
#[derive(Debug, Clone)]
pub struct OracleFit {
    /// Coefficients in phi coordinates, `Phi^T v / n`.
    pub beta: DVector<f64>,
    /// Same fit in raw coordinates via QR.
    pub raw: DVector<f64>,
}

pub fn oracle_estimate(f1_at_data: &DVector<f64>, eps: &DVector<f64>, phi: &PhiBasis) -> Result<OracleFit> {
    let v = f1_at_data + eps;
    let beta = phi.phi().tr_mul(&v) / phi.n() as f64;
    let raw = ThinQr::new(phi.raw())?.solve(&v);
    Ok(OracleFit { beta, raw })
}

/// Known components of a simulated data set, all at the data points.
#[derive(Debug, Clone)]
pub struct TrueComponents {
    /// `f = f_1 + f_{-1}`.
    pub f: DVector<f64>,
    pub f1: DVector<f64>,
    pub eps: DVector<f64>,
    /// `g_1`, which must lie in the first-block space.
    pub g1: DVector<f64>,
    pub g_rest: DVector<f64>,
}

/// The four terms whose sum is `f_1 - f_1^oracle` at the data: variance,
/// Lasso bias, approximation error of `f - g`, and first-block approximation error.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub variance: DVector<f64>,
    pub lasso_bias: DVector<f64>,
    pub approximation: DVector<f64>,
    pub first_block: DVector<f64>,
}

impl Decomposition {
    pub fn total(&self) -> DVector<f64> {
        &self.variance + &self.lasso_bias + &self.approximation + &self.first_block
    }
}

pub fn decomposition_diagnostic(fit: &DebiasedFit, c: &TrueComponents) -> Decomposition {
    let phi = fit.phi.phi();
    let nf = phi.nrows() as f64;
    let through = |v: &DVector<f64>| phi * (&fit.influence * v);
    let project = |v: &DVector<f64>| phi * (phi.tr_mul(v) / nf);
    Decomposition {
        variance: through(&c.eps) - project(&c.eps),
        lasso_bias: through(&(&c.g_rest - &fit.offset)),
        approximation: through(&(&c.f - &c.g1 - &c.g_rest)),
        first_block: &c.g1 - project(&c.f1),
    }
}
