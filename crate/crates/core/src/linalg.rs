//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Singular values, with an iteration cap on the QR sweeps.
///
/// The unbounded SVD can cycle on some inputs; on failure this retries the
/// transpose and finally falls back to the eigenvalues of the Gram matrix.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    let cap = 100 * m.nrows().max(m.ncols()).max(10);
    if let Some(svd) = m.clone().try_svd(false, false, f64::EPSILON, cap) {
        return svd.singular_values;
    }
    if let Some(svd) = m.transpose().try_svd(false, false, f64::EPSILON, cap) {
        return svd.singular_values;
    }
    let gram = if m.nrows() >= m.ncols() {
        m.tr_mul(m)
    } else {
        m * m.transpose()
    };
    gram.symmetric_eigenvalues().map(|v| v.max(0.0).sqrt())
}

/// Ratio of extreme singular values; `inf` for a singular matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 1.0;
    }
    let sv = singular_values(m);
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    singular_values(m).iter().cloned().fold(0.0, f64::max)
}

/// Solves a square system after checking its condition number against `max_condition`.
pub fn guarded_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>, max_condition: f64) -> Result<(DMatrix<f64>, f64)> {
    let condition = condition_number(m);
    if !condition.is_finite() || condition > max_condition {
        return Err(Error::IllConditioned { condition });
    }
    let sol = m.clone().lu().solve(rhs).ok_or(Error::IllConditioned { condition })?;
    Ok((sol, condition))
}

/// Thin QR factorisation with a numerical rank check on the diagonal of R.
pub struct ThinQr {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl ThinQr {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = a.shape();
        if n < d {
            return Err(Error::RankDeficient(format!(
                "{n} observations for {d} basis functions"
            )));
        }
        let qr = a.clone().qr();
        let q = qr.q();
        let r = qr.r();
        let scale = r.diagonal().iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (k, v) in r.diagonal().iter().enumerate() {
            if !(v.abs() > 1e-10 * scale) {
                return Err(Error::RankDeficient(format!(
                    "column {k} is numerically dependent on the preceding columns"
                )));
            }
        }
        Ok(ThinQr { q, r })
    }

    /// Least-squares coefficients for the response `b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let qtb = self.q.tr_mul(b);
        self.r
            .solve_upper_triangular(&qtb)
            .expect("diagonal checked at construction")
    }

    /// Returns `Q R^{-T} v`, the linear weights on responses of the functional `v^T coef`.
    pub fn weights(&self, v: &DVector<f64>) -> DVector<f64> {
        let u = self
            .r
            .tr_solve_upper_triangular(v)
            .expect("diagonal checked at construction");
        &self.q * u
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn rows_of(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn entries_of(v: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.iter().map(|&i| v[i]))
}
