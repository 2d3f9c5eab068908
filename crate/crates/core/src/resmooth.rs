//! Second-step smoothing of the pseudo-responses `f_1(X_1^i)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::Basis;
use crate::despars::DebiasedFit;
use crate::error::{Error, Result};
use crate::linalg::ThinQr;

/// The presmoothing estimator at the data.
pub fn pseudo_responses(fit: &DebiasedFit) -> DVector<f64> {
    fit.fitted()
}

/// True when a grid of `m1` intervals refines one of `m_star` intervals.
pub fn check_nested(m1: usize, m_star: usize) -> bool {
    m_star != 0 && m1.is_multiple_of(m_star)
}

/// Least-squares projection on a coarse basis.
pub struct LeastSquaresSmoother {
    basis: Basis,
    qr: ThinQr,
    coefficients: DVector<f64>,
}

pub fn resmooth_least_squares(pseudo: &DVector<f64>, x1: &[f64], coarse: &Basis) -> Result<LeastSquaresSmoother> {
    if pseudo.len() != x1.len() {
        return Err(Error::InvalidArgument(
            "pseudo-responses and covariate differ in length".into(),
        ));
    }
    let design = coarse.eval_design(x1)?;
    let qr = ThinQr::new(&design)?;
    let coefficients = qr.solve(pseudo);
    Ok(LeastSquaresSmoother {
        basis: coarse.clone(),
        qr,
        coefficients,
    })
}

impl LeastSquaresSmoother {
    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        Ok(self.basis.eval_row(x)?.dot(&self.coefficients))
    }

    /// `s(x)` with `evaluate(x) = s(x)^T pseudo`.
    pub fn weights(&self, x: f64) -> Result<DVector<f64>> {
        Ok(self.qr.weights(&self.basis.eval_row(x)?))
    }

    pub fn fitted(&self) -> DVector<f64> {
        &self.qr.q * (&self.qr.r * &self.coefficients)
    }

    /// The `n x n` hat matrix `Q Q^T`.
    pub fn hat_matrix(&self) -> DMatrix<f64> {
        &self.qr.q * self.qr.q.transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    #[default]
    Epanechnikov,
    Uniform,
    Triweight,
}

impl Kernel {
    pub fn eval(self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Epanechnikov => 0.75 * (1.0 - u * u),
            Kernel::Uniform => 0.5,
            Kernel::Triweight => 35.0 / 32.0 * (1.0 - u * u).powi(3),
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            "uniform" => Ok(Kernel::Uniform),
            "triweight" => Ok(Kernel::Triweight),
            other => Err(Error::InvalidArgument(format!("unknown kernel '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalPolyFit {
    pub center: f64,
    /// Local expansion coefficients `a_0, ..., a_k`.
    pub coefficients: DVector<f64>,
    /// Number of observations with positive kernel weight.
    pub effective: usize,
    /// Weights on the pseudo-responses producing `a_0`.
    pub weights: DVector<f64>,
}

impl LocalPolyFit {
    pub fn estimate(&self) -> f64 {
        self.coefficients[0]
    }

    /// `j! a_j`, the estimate of the `j`-th derivative.
    pub fn derivative(&self, j: usize) -> Option<f64> {
        let factorial: f64 = (1..=j).map(|i| i as f64).product();
        self.coefficients.get(j).map(|a| factorial * a)
    }
}

/// Kernel-weighted least squares of `pseudo` on powers of `X_1^i - x`.
pub fn local_polynomial(
    pseudo: &DVector<f64>,
    x1: &[f64],
    x: f64,
    h: f64,
    k: usize,
    kernel: Kernel,
) -> Result<LocalPolyFit> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }
    if pseudo.len() != x1.len() {
        return Err(Error::InvalidArgument(
            "pseudo-responses and covariate differ in length".into(),
        ));
    }
    let local: Vec<(usize, f64)> = x1
        .iter()
        .enumerate()
        .map(|(i, &xi)| (i, kernel.eval((xi - x) / h) / h))
        .filter(|(_, w)| *w > 0.0)
        .collect();
    let required = k + 1;
    if local.len() < required {
        return Err(Error::InsufficientLocalData {
            effective: local.len(),
            required,
        });
    }
    // scaling the powers by h keeps the local design well conditioned
    let design = DMatrix::from_fn(local.len(), required, |r, c| {
        let (i, w) = local[r];
        w.sqrt() * ((x1[i] - x) / h).powi(c as i32)
    });
    let qr = ThinQr::new(&design).map_err(|_| Error::InsufficientLocalData {
        effective: local.len(),
        required,
    })?;
    let response = DVector::from_iterator(local.len(), local.iter().map(|&(i, w)| w.sqrt() * pseudo[i]));
    let mut coefficients = qr.solve(&response);
    for (c, a) in coefficients.iter_mut().enumerate() {
        *a /= h.powi(c as i32);
    }
    let mut e0 = DVector::zeros(required);
    e0[0] = 1.0;
    let local_weights = qr.weights(&e0);
    let mut weights = DVector::zeros(x1.len());
    for (r, &(i, w)) in local.iter().enumerate() {
        weights[i] = w.sqrt() * local_weights[r];
    }
    Ok(LocalPolyFit {
        center: x,
        coefficients,
        effective: local.len(),
        weights,
    })
}

/// Weights on `Y` of the resmoothed estimator given smoother weights `s` on
/// the pseudo-responses, with the Lasso fits held fixed.
pub fn composite_weights(fit: &DebiasedFit, s: &DVector<f64>) -> DVector<f64> {
    fit.weights_for_phi(&fit.phi.phi().tr_mul(s))
}

/// Choice of second-step smoother.
#[derive(Debug, Clone)]
pub enum Resmoother {
    LeastSquares(Basis),
    LocalPolynomial {
        bandwidth: f64,
        degree: usize,
        kernel: Kernel,
    },
}

/// A second-step smoother fitted to pseudo-responses.
pub enum Resmoothed {
    LeastSquares(LeastSquaresSmoother),
    LocalPolynomial {
        pseudo: DVector<f64>,
        x1: Vec<f64>,
        bandwidth: f64,
        degree: usize,
        kernel: Kernel,
    },
}

impl Resmoother {
    pub fn fit(&self, pseudo: &DVector<f64>, x1: &[f64]) -> Result<Resmoothed> {
        match self {
            Resmoother::LeastSquares(basis) => Ok(Resmoothed::LeastSquares(resmooth_least_squares(pseudo, x1, basis)?)),
            Resmoother::LocalPolynomial {
                bandwidth,
                degree,
                kernel,
            } => {
                if pseudo.len() != x1.len() {
                    return Err(Error::InvalidArgument(
                        "pseudo-responses and covariate differ in length".into(),
                    ));
                }
                Ok(Resmoothed::LocalPolynomial {
                    pseudo: pseudo.clone(),
                    x1: x1.to_vec(),
                    bandwidth: *bandwidth,
                    degree: *degree,
                    kernel: *kernel,
                })
            }
        }
    }
}

impl Resmoothed {
    /// Estimate at `x` and its weights on the pseudo-responses.
    pub fn at(&self, x: f64) -> Result<(f64, DVector<f64>)> {
        match self {
            Resmoothed::LeastSquares(s) => Ok((s.evaluate(x)?, s.weights(x)?)),
            Resmoothed::LocalPolynomial {
                pseudo,
                x1,
                bandwidth,
                degree,
                kernel,
            } => {
                let fit = local_polynomial(pseudo, x1, x, *bandwidth, *degree, *kernel)?;
                Ok((fit.estimate(), fit.weights))
            }
        }
    }
}
