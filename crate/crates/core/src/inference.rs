//! Pointwise confidence intervals and calculators for the theoretical rates.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Oracle,
    Presmooth,
    Resmooth,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Oracle, Estimator::Presmooth, Estimator::Resmooth];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Oracle => "oracle",
            Estimator::Presmooth => "presmooth",
            Estimator::Resmooth => "resmooth",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseCI {
    pub center: f64,
    pub half_width: f64,
    pub level: f64,
    pub estimator: Estimator,
}

impl PointwiseCI {
    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }

    /// Full length of the interval.
    pub fn width(&self) -> f64 {
        2.0 * self.half_width
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lo() <= value && value <= self.hi()
    }
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile level must lie in (0, 1), got {p}"
        )));
    }
    Ok(Normal::standard().inverse_cdf(p))
}

/// `estimate ± z sigma ||weights||` for an estimator linear in `Y`.
pub fn pointwise_ci(
    weights: &DVector<f64>,
    estimate: f64,
    sigma: f64,
    level: f64,
    estimator: Estimator,
) -> Result<PointwiseCI> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sigma must be nonnegative, got {sigma}"
        )));
    }
    let z = normal_quantile(0.5 * (1.0 + level))?;
    Ok(PointwiseCI {
        center: estimate,
        half_width: z * sigma * weights.norm(),
        level,
        estimator,
    })
}

/// Noise level estimate `sqrt(RSS / (n - df))`.
pub fn residual_sigma(y: &DVector<f64>, fitted: &DVector<f64>, df: usize) -> Result<f64> {
    let n = y.len();
    if df >= n {
        return Err(Error::InvalidArgument(format!(
            "{df} degrees of freedom leave no residual information with {n} observations"
        )));
    }
    Ok(((y - fitted).norm_squared() / (n - df) as f64).sqrt())
}

/// Smoothness, sparsity and geometry constants entering the error bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub r1: f64,
    pub r2: f64,
    pub s0: usize,
    pub s1: usize,
    pub psi: f64,
    pub phi: f64,
    pub rho0: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

impl Default for TheoryParams {
    fn default() -> Self {
        TheoryParams {
            r1: 2.0,
            r2: 2.0,
            s0: 1,
            s1: 1,
            psi: 1.0,
            phi: 1.0,
            rho0: 0.0,
            gamma0: 0.0,
            gamma1: 0.0,
            x: 2.0,
            y: 1.0,
            sigma: 1.0,
        }
    }
}

impl TheoryParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("theory parameter {what}")));
        if !(self.r1 > 0.0 && self.r2 > 0.0) {
            return bad("r1 and r2 must be positive");
        }
        if self.s0 == 0 || self.s1 == 0 {
            return bad("s0 and s1 must be positive integers");
        }
        if !(self.psi > 0.0 && self.psi <= 1.0) || !(self.phi > 0.0 && self.phi <= 1.0) {
            return bad("psi and phi must lie in (0, 1]");
        }
        if self.rho0 >= 1.0 {
            return bad("rho0 = 1 leaves no angle between the first block and the rest");
        }
        if !(self.rho0 >= 0.0) {
            return bad("rho0 must lie in [0, 1)");
        }
        if !(self.gamma0 >= 0.0 && self.gamma1 >= 0.0) {
            return bad("gamma0 and gamma1 must be nonnegative");
        }
        if !(self.x > 0.0 && self.y > 0.0 && self.sigma > 0.0) {
            return bad("x, y and sigma must be positive");
        }
        Ok(())
    }
}

/// The three error terms of the presmoothing bound: approximation, Lasso bias, variance.
pub fn theoretical_deltas(
    p: &TheoryParams,
    d1: usize,
    d2: usize,
    n: usize,
    lambda: f64,
    eta: f64,
) -> Result<(f64, f64, f64)> {
    p.validate()?;
    if d1 == 0 || d2 == 0 || n == 0 {
        return Err(Error::InvalidArgument("d1, d2 and n must be positive".into()));
    }
    if !(lambda > 0.0) || !(eta >= 0.0) {
        return Err(Error::InvalidArgument(
            "lambda must be positive and eta nonnegative".into(),
        ));
    }
    let (d1, d2, n) = (d1 as f64, d2 as f64, n as f64);
    let (s0, s1) = (p.s0 as f64, p.s1 as f64);
    let scale = 1.0 / (p.psi * (1.0 - p.rho0));
    let approx1 = d1.powf(-p.r1);
    let approx2 = d2.powf(-p.r2);
    let delta1 = (s1 * approx1 + s1 * s0 * approx2) * scale;
    let delta2 = ((eta / lambda) * (s1 * d1).sqrt() * (approx1 + s0 * approx2).powi(2)
        + s0 * s1.sqrt() * d1.sqrt() * lambda * eta)
        * scale;
    let delta3 = (s1 * (d1.ln() + p.y) / n).sqrt() * scale;
    Ok((delta1, delta2, delta3))
}

/// The three strict inequalities under which the two-step estimator attains the oracle rate `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RateConditions {
    pub first: bool,
    pub second: bool,
    pub third: bool,
}

impl RateConditions {
    pub fn all(&self) -> bool {
        self.first && self.second && self.third
    }
}

pub fn check_rate_conditions(gamma0: f64, gamma1: f64, r1: f64, r2: f64, beta: f64) -> Result<RateConditions> {
    if !(r1 > 0.0 && r2 > 0.0 && beta > 0.0) {
        return Err(Error::InvalidArgument("r1, r2 and beta must be positive".into()));
    }
    let hi = gamma0.max(gamma1);
    let lo = gamma0.min(gamma1);
    Ok(RateConditions {
        first: (1.0 + 1.0 / r2) * gamma0 + (0.5 + 0.5 / r1 + 1.0 / r2) * gamma1
            < 1.0 - (1.0 + 0.5 / r1 + 1.0 / r2) * beta,
        second: 2.0 * hi + 2.0 / r1 * gamma1 < 1.0 - 2.0 / r1 * beta,
        third: 2.0 / r2 * lo + (2.0 + 2.0 / r2) * hi < 1.0 - 2.0 / r2 * beta,
    })
}

/// Asymptotic minimax risk constant of the oracle model.
pub fn kappa_minimax(rho1: f64, c_s: f64, sigma: f64, inv_density_integral: f64) -> Result<f64> {
    if !(rho1 >= 1.0) {
        return Err(Error::InvalidArgument(format!("rho1 must be at least 1, got {rho1}")));
    }
    if !(c_s > 0.0 && sigma > 0.0 && inv_density_integral > 0.0) {
        return Err(Error::InvalidArgument(
            "C_S, sigma and the inverse-density integral must be positive".into(),
        ));
    }
    let inner = sigma * sigma * rho1 / (PI * (rho1 + 1.0)) * inv_density_integral;
    Ok(((2.0 * rho1 + 1.0) * c_s * inner.powf(2.0 * rho1)).powf(1.0 / (2.0 * rho1 + 1.0)))
}
