//! Univariate function systems: orthonormal piecewise Legendre polynomials and
//! clamped B-splines.
//!
//! Every basis lives on a user domain `[a, b]`. Points are mapped affinely onto
//! `[0, 1]` before evaluation, where the partition intervals are
//! `(k/m, (k+1)/m]` with `x = 0` assigned to the first interval. B-splines may
//! instead put their interior knots at empirical quantiles of a sample.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest Legendre degree accepted by [`legendre_shifted`].
pub const MAX_LEGENDRE_DEGREE: usize = 50;

/// Relative slack allowed when testing whether a point lies in a domain.
const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisFamily {
    PiecewiseLegendre,
    BSpline,
}

/// Closed real interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub const fn unit() -> Self {
        Interval { lo: 0.0, hi: 1.0 }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        let slack = DOMAIN_SLACK * self.len().abs().max(1.0);
        x >= self.lo - slack && x <= self.hi + slack
    }
}

/// Linear bijection taking `from` onto `to`.
pub fn affine_rescale(x: f64, from: Interval, to: Interval) -> Result<f64> {
    let len = from.len();
    if len == 0.0 || !len.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "cannot rescale from the degenerate interval [{}, {}]",
            from.lo, from.hi
        )));
    }
    Ok(to.lo + (x - from.lo) * to.len() / len)
}

/// Shifted, rescaled Legendre polynomial `sqrt(2l+1) Q_l(2x-1)` on `[0, 1]`.
pub fn legendre_shifted(l: usize, x: f64) -> Result<f64> {
    if l > MAX_LEGENDRE_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "Legendre degree {l} exceeds {MAX_LEGENDRE_DEGREE}"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain { x, lo: 0.0, hi: 1.0 });
    }
    let mut values = [0.0; MAX_LEGENDRE_DEGREE + 1];
    shifted_legendre_all(l, x, &mut values[..=l]);
    Ok(values[l])
}

/// Fills `out[l] = sqrt(2l+1) Q_l(2x-1)` for `l < out.len()`.
fn shifted_legendre_all(_max: usize, x: f64, out: &mut [f64]) {
    let y = 2.0 * x - 1.0;
    let mut q_prev = 1.0;
    let mut q = y;
    for (l, slot) in out.iter_mut().enumerate() {
        let ql = match l {
            0 => 1.0,
            1 => y,
            _ => {
                let lf = (l - 1) as f64;
                let next = ((2.0 * lf + 1.0) * y * q - lf * q_prev) / (lf + 1.0);
                q_prev = q;
                q = next;
                next
            }
        };
        *slot = (2.0 * l as f64 + 1.0).sqrt() * ql;
    }
}

/// Where the interior knots of a B-spline go.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnotPlacement {
    /// Equidistant on the domain.
    #[default]
    Uniform,
    /// At the empirical `k/m` quantiles of the covariate sample.
    Quantile,
}

impl std::str::FromStr for KnotPlacement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(KnotPlacement::Uniform),
            "quantile" => Ok(KnotPlacement::Quantile),
            other => Err(Error::InvalidArgument(format!("unknown knot placement '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub family: BasisFamily,
    /// Polynomial degree: `t` for piecewise polynomials, spline order minus one for B-splines.
    pub degree: usize,
    /// Number of partition intervals `m`.
    pub intervals: usize,
    pub domain: Interval,
    #[serde(default)]
    pub knots: KnotPlacement,
}

impl BasisSpec {
    pub fn piecewise_legendre(degree: usize, intervals: usize) -> Self {
        BasisSpec {
            family: BasisFamily::PiecewiseLegendre,
            degree,
            intervals,
            domain: Interval::unit(),
            knots: KnotPlacement::Uniform,
        }
    }

    pub fn bspline(degree: usize, intervals: usize) -> Self {
        BasisSpec {
            family: BasisFamily::BSpline,
            degree,
            intervals,
            domain: Interval::unit(),
            knots: KnotPlacement::Uniform,
        }
    }

    /// Cubic B-spline basis of the given dimension (`m = d - 3` intervals).
    pub fn cubic_bspline(dimension: usize) -> Result<Self> {
        if dimension < 4 {
            return Err(Error::InvalidArgument(format!(
                "cubic B-spline dimension must be at least 4, got {dimension}"
            )));
        }
        Ok(Self::bspline(3, dimension - 3))
    }

    pub fn with_domain(mut self, domain: Interval) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_knots(mut self, knots: KnotPlacement) -> Self {
        self.knots = knots;
        self
    }

    pub fn dimension(&self) -> usize {
        match self.family {
            BasisFamily::PiecewiseLegendre => self.intervals * (self.degree + 1),
            BasisFamily::BSpline => self.intervals + self.degree,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.intervals == 0 {
            return Err(Error::InvalidArgument("basis needs at least one interval".into()));
        }
        if self.family == BasisFamily::PiecewiseLegendre && self.degree > MAX_LEGENDRE_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "piecewise degree {} exceeds {MAX_LEGENDRE_DEGREE}",
                self.degree
            )));
        }
        if !(self.domain.len() > 0.0) || !self.domain.len().is_finite() {
            return Err(Error::InvalidArgument(format!(
                "basis domain [{}, {}] is degenerate",
                self.domain.lo, self.domain.hi
            )));
        }
        if self.family == BasisFamily::PiecewiseLegendre && self.knots != KnotPlacement::Uniform {
            return Err(Error::InvalidArgument(
                "piecewise polynomials need a uniform partition".into(),
            ));
        }
        Ok(())
    }
}

/// An evaluable function system built from a [`BasisSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    spec: BasisSpec,
    /// Clamped knot vector on `[0, 1]` (B-splines only).
    knots: Vec<f64>,
}

/// Builds a basis with a fixed partition. Quantile knots need a sample; see [`build_basis_on`].
pub fn build_basis(spec: BasisSpec) -> Result<Basis> {
    spec.validate()?;
    if spec.knots == KnotPlacement::Quantile {
        return Err(Error::InvalidArgument("quantile knots need a covariate sample".into()));
    }
    let knots = match spec.family {
        BasisFamily::PiecewiseLegendre => Vec::new(),
        BasisFamily::BSpline => {
            let m = spec.intervals;
            clamped_knots(spec.degree, (1..m).map(|k| k as f64 / m as f64))
        }
    };
    Ok(Basis { spec, knots })
}

/// Builds a basis whose partition may depend on the covariate sample `data`.
pub fn build_basis_on(spec: BasisSpec, data: &[f64]) -> Result<Basis> {
    if spec.knots == KnotPlacement::Uniform {
        return build_basis(spec);
    }
    spec.validate()?;
    let mut u = data
        .iter()
        .map(|&x| {
            if !x.is_finite() || !spec.domain.contains(x) {
                return Err(Error::Domain {
                    x,
                    lo: spec.domain.lo,
                    hi: spec.domain.hi,
                });
            }
            Ok(affine_rescale(x, spec.domain, Interval::unit())?.clamp(0.0, 1.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    if u.is_empty() {
        return Err(Error::InvalidArgument("quantile knots need a nonempty sample".into()));
    }
    u.sort_by(f64::total_cmp);
    let m = spec.intervals;
    if u.len() <= m {
        return Err(Error::RankDeficient(format!(
            "{} points are too few for {m} quantile intervals",
            u.len()
        )));
    }
    let interior: Vec<f64> = (1..m).map(|k| empirical_quantile(&u, k as f64 / m as f64)).collect();
    let mut prev = 0.0;
    for &t in &interior {
        if !(t > prev) {
            return Err(Error::RankDeficient(format!(
                "sample too small or too tied for {m} quantile intervals"
            )));
        }
        prev = t;
    }
    if !(1.0 > prev) {
        return Err(Error::RankDeficient(format!(
            "sample too small or too tied for {m} quantile intervals"
        )));
    }
    Ok(Basis {
        spec,
        knots: clamped_knots(spec.degree, interior.into_iter()),
    })
}

fn clamped_knots(p: usize, interior: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut knots: Vec<f64> = std::iter::repeat_n(0.0, p + 1).collect();
    knots.extend(interior);
    knots.extend(std::iter::repeat_n(1.0, p + 1));
    knots
}

/// Linear interpolation between order statistics of a sorted sample.
fn empirical_quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Basis {
    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension()
    }

    pub fn domain(&self) -> Interval {
        self.spec.domain
    }

    /// Maximum number of basis functions that are nonzero at one point.
    pub fn max_nonzero(&self) -> usize {
        self.spec.degree + 1
    }

    /// Interval `k` of the `(k/m, (k+1)/m]` partition that carries basis function `index`.
    /// Only meaningful for the piecewise family.
    pub fn support_interval(&self, index: usize) -> Option<usize> {
        match self.spec.family {
            BasisFamily::PiecewiseLegendre => Some(index / (self.spec.degree + 1)),
            BasisFamily::BSpline => None,
        }
    }

    fn to_unit(&self, x: f64) -> Result<f64> {
        let d = self.spec.domain;
        if !x.is_finite() || !d.contains(x) {
            return Err(Error::Domain { x, lo: d.lo, hi: d.hi });
        }
        Ok(affine_rescale(x, d, Interval::unit())?.clamp(0.0, 1.0))
    }

    fn interval_index(&self, u: f64) -> usize {
        let m = self.spec.intervals;
        if self.spec.knots == KnotPlacement::Quantile {
            // interior knots strictly below u
            let p = self.spec.degree;
            let below = self.knots[p + 1..p + m].partition_point(|&t| t < u);
            return below.min(m - 1);
        }
        let k = (u * m as f64).ceil() as usize;
        k.saturating_sub(1).min(m - 1)
    }

    /// Interior knots on the domain scale (B-splines only).
    pub fn interior_knots(&self) -> Vec<f64> {
        if self.spec.family != BasisFamily::BSpline {
            return Vec::new();
        }
        let p = self.spec.degree;
        let d = self.spec.domain;
        self.knots[p + 1..self.knots.len() - p - 1]
            .iter()
            .map(|&t| d.lo + t * d.len())
            .collect()
    }

    /// Writes the `degree + 1` potentially nonzero values at `x` into `out` and
    /// returns the index of the first one.
    fn eval_local(&self, x: f64, out: &mut [f64]) -> Result<usize> {
        let u = self.to_unit(x)?;
        let k = self.interval_index(u);
        let p = self.spec.degree;
        let m = self.spec.intervals as f64;
        match self.spec.family {
            BasisFamily::PiecewiseLegendre => {
                let s = (m * u - k as f64).clamp(0.0, 1.0);
                shifted_legendre_all(p, s, &mut out[..=p]);
                let scale = m.sqrt();
                for v in &mut out[..=p] {
                    *v *= scale;
                }
                Ok(k * (p + 1))
            }
            BasisFamily::BSpline => {
                bspline_nonzero(&self.knots, k + p, p, u, &mut out[..=p]);
                Ok(k)
            }
        }
    }

    /// Value of basis function `index` at `x`.
    pub fn eval(&self, index: usize, x: f64) -> Result<f64> {
        if index >= self.dimension() {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} out of range for dimension {}",
                self.dimension()
            )));
        }
        let mut buf = vec![0.0; self.max_nonzero()];
        let first = self.eval_local(x, &mut buf)?;
        Ok(if index >= first && index < first + buf.len() {
            buf[index - first]
        } else {
            0.0
        })
    }

    /// All basis functions evaluated at `x`.
    pub fn eval_row(&self, x: f64) -> Result<DVector<f64>> {
        let mut row = DVector::zeros(self.dimension());
        let mut buf = vec![0.0; self.max_nonzero()];
        let first = self.eval_local(x, &mut buf)?;
        for (r, v) in buf.iter().enumerate() {
            row[first + r] = *v;
        }
        Ok(row)
    }

    /// `n x d` matrix with entry `(i, k) = b_k(x_i)`.
    pub fn eval_design(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        let mut design = DMatrix::zeros(points.len(), self.dimension());
        let mut buf = vec![0.0; self.max_nonzero()];
        for (i, &x) in points.iter().enumerate() {
            let first = self.eval_local(x, &mut buf)?;
            for (r, v) in buf.iter().enumerate() {
                design[(i, first + r)] = *v;
            }
        }
        Ok(design)
    }
}

/// Nonzero B-spline basis values at `u` in knot span `span` (de Boor's triangular scheme).
fn bspline_nonzero(knots: &[f64], span: usize, p: usize, u: f64, out: &mut [f64]) {
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    out[0] = 1.0;
    for j in 1..=p {
        left[j] = u - knots[span + 1 - j];
        right[j] = knots[span + j] - u;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom == 0.0 { 0.0 } else { out[r] / denom };
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

/// Design matrix with column means removed; the means are kept so fitted
/// functions can be centered consistently at new points.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredDesign {
    pub raw: DMatrix<f64>,
    pub means: DVector<f64>,
    pub centered: DMatrix<f64>,
}

pub fn center_empirically(design: &DMatrix<f64>) -> Result<CenteredDesign> {
    let n = design.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot center a design with no rows".into()));
    }
    let means = DVector::from_iterator(design.ncols(), design.column_iter().map(|c| c.sum() / n as f64));
    let mut centered = design.clone();
    for (mut col, mean) in centered.column_iter_mut().zip(means.iter()) {
        col.add_scalar_mut(-mean);
    }
    Ok(CenteredDesign {
        raw: design.clone(),
        means,
        centered,
    })
}

impl CenteredDesign {
    /// Centers a row of raw basis values with the stored constants.
    pub fn center_row(&self, row: &DVector<f64>) -> DVector<f64> {
        row - &self.means
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Brute-force Legendre via the explicit sum formula.
    fn legendre_explicit(l: usize, y: f64) -> f64 {
        let mut sum = 0.0;
        for k in 0..=l / 2 {
            let num = factorial(2 * l - 2 * k);
            let den = factorial(k) * factorial(l - k) * factorial(l - 2 * k);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * num / den * y.powi((l - 2 * k) as i32);
        }
        sum / 2f64.powi(l as i32)
    }

    fn factorial(k: usize) -> f64 {
        (1..=k).map(|v| v as f64).product()
    }

    #[test]
    fn legendre_examples() {
        assert_eq!(legendre_shifted(0, 0.3).unwrap(), 1.0);
        assert!(close(legendre_shifted(1, 0.5).unwrap(), 0.0, 1e-15));
        assert!(close(legendre_shifted(2, 1.0).unwrap(), 5f64.sqrt(), 1e-12));
        for l in 0..=12 {
            for &x in &[0.0, 0.13, 0.5, 0.77, 1.0] {
                let expected = (2.0 * l as f64 + 1.0).sqrt() * legendre_explicit(l, 2.0 * x - 1.0);
                assert!(close(legendre_shifted(l, x).unwrap(), expected, 1e-10), "l={l} x={x}");
            }
        }
    }

    #[test]
    fn legendre_rejects_bad_input() {
        assert!(matches!(legendre_shifted(2, 1.5), Err(Error::Domain { .. })));
        assert!(matches!(legendre_shifted(2, -0.1), Err(Error::Domain { .. })));
        assert!(legendre_shifted(51, 0.5).is_err());
        assert!(legendre_shifted(50, 1.0).is_ok());
    }

    #[test]
    fn piecewise_constant_example() {
        let b = build_basis(BasisSpec::piecewise_legendre(0, 2)).unwrap();
        assert_eq!(b.dimension(), 2);
        let r2 = 2f64.sqrt();
        assert!(close(b.eval(0, 0.25).unwrap(), r2, 1e-15));
        assert_eq!(b.eval(1, 0.25).unwrap(), 0.0);
        // right-closed intervals: 0.5 belongs to the first one, 0 too
        assert!(close(b.eval(0, 0.5).unwrap(), r2, 1e-15));
        assert!(close(b.eval(0, 0.0).unwrap(), r2, 1e-15));
        assert!(close(b.eval(1, 1.0).unwrap(), r2, 1e-15));
        let design = b.eval_design(&[0.25, 0.75]).unwrap();
        assert_eq!(design, DMatrix::from_row_slice(2, 2, &[r2, 0.0, 0.0, r2]));
    }

    #[test]
    fn dimensions() {
        assert_eq!(BasisSpec::piecewise_legendre(3, 10).dimension(), 40);
        assert_eq!(BasisSpec::bspline(3, 37).dimension(), 40);
        assert_eq!(BasisSpec::cubic_bspline(40).unwrap().intervals, 37);
        assert!(BasisSpec::cubic_bspline(3).is_err());
        assert!(build_basis(BasisSpec::bspline(3, 0)).is_err());
    }

    #[test]
    fn empty_points_give_empty_design() {
        let b = build_basis(BasisSpec::bspline(3, 5)).unwrap();
        let d = b.eval_design(&[]).unwrap();
        assert_eq!(d.shape(), (0, 8));
    }

    #[test]
    fn out_of_domain_points_fail() {
        let b = build_basis(BasisSpec::bspline(3, 5).with_domain(Interval::new(-2.5, 2.5))).unwrap();
        assert!(b.eval_design(&[0.0, 2.5, -2.5]).is_ok());
        assert!(matches!(b.eval_design(&[2.6]), Err(Error::Domain { .. })));
        assert!(b.eval_row(f64::NAN).is_err());
    }

    #[test]
    fn piecewise_rows_are_sparse() {
        let b = build_basis(BasisSpec::piecewise_legendre(2, 7)).unwrap();
        let pts: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let d = b.eval_design(&pts).unwrap();
        for row in d.row_iter() {
            assert!(row.iter().filter(|v| **v != 0.0).count() <= 3);
        }
    }

    #[test]
    fn piecewise_orthonormal_by_quadrature() {
        for t in 0..=5 {
            for m in [1, 2, 7, 10, 50] {
                let b = build_basis(BasisSpec::piecewise_legendre(t, m)).unwrap();
                let (nodes, weights) = gauss_legendre(t + 1);
                let dim = b.dimension();
                let mut gram = DMatrix::<f64>::zeros(dim, dim);
                for k in 0..m {
                    let lo = k as f64 / m as f64;
                    let h = 1.0 / m as f64;
                    for (z, w) in nodes.iter().zip(&weights) {
                        let x = lo + h * (z + 1.0) / 2.0;
                        let row = b.eval_row(x).unwrap();
                        gram += row.clone() * row.transpose() * (w * h / 2.0);
                    }
                }
                let err = (gram - DMatrix::identity(dim, dim)).abs().max();
                assert!(err < 1e-10, "t={t} m={m} err={err}");
            }
        }
    }

    #[test]
    fn piecewise_functions_are_local() {
        let b = build_basis(BasisSpec::piecewise_legendre(2, 5)).unwrap();
        for k in 0..b.dimension() {
            let interval = b.support_interval(k).unwrap();
            for i in 0..=500 {
                let x = i as f64 / 500.0;
                let owner = b.interval_index(x);
                if owner != interval {
                    assert_eq!(b.eval(k, x).unwrap(), 0.0);
                }
            }
        }
    }

    /// Recursive Cox–de Boor definition, independent of the triangular scheme.
    fn cox_de_boor(knots: &[f64], i: usize, p: usize, u: f64, last: bool) -> f64 {
        if p == 0 {
            let (a, b) = (knots[i], knots[i + 1]);
            let inside = (u >= a && u < b) || (last && u == b && a < b && b == 1.0);
            return if inside { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = knots[i + p] - knots[i];
        if d1 > 0.0 {
            v += (u - knots[i]) / d1 * cox_de_boor(knots, i, p - 1, u, last);
        }
        let d2 = knots[i + p + 1] - knots[i + 1];
        if d2 > 0.0 {
            v += (knots[i + p + 1] - u) / d2 * cox_de_boor(knots, i + 1, p - 1, u, last);
        }
        v
    }

    #[test]
    fn bspline_matches_cox_de_boor_and_sums_to_one() {
        for (p, m) in [(3, 37), (3, 4), (2, 6), (1, 3), (3, 1)] {
            let b = build_basis(BasisSpec::bspline(p, m)).unwrap();
            for i in 0..=1000 {
                let u = i as f64 / 1000.0;
                let row = b.eval_row(u).unwrap();
                let last = u == 1.0;
                for k in 0..b.dimension() {
                    let oracle = cox_de_boor(&b.knots, k, p, u, last);
                    assert!(close(row[k], oracle, 1e-12), "p={p} m={m} k={k} u={u}");
                }
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn affine_rescale_examples() {
        let from = Interval::new(-2.5, 2.5);
        let to = Interval::unit();
        assert_eq!(affine_rescale(-2.5, from, to).unwrap(), 0.0);
        assert_eq!(affine_rescale(0.0, from, to).unwrap(), 0.5);
        assert!(close(affine_rescale(1.0, from, to).unwrap(), 0.7, 1e-15));
        assert_eq!(affine_rescale(2.5, from, to).unwrap(), 1.0);
        assert!(affine_rescale(0.0, Interval::new(1.0, 1.0), to).is_err());
    }

    #[test]
    fn centering_examples() {
        let design = DMatrix::from_column_slice(3, 3, &[1.0, 1.0, 1.0, 1.0, 2.0, 3.0, -1.0, 0.0, 1.0]);
        let c = center_empirically(&design).unwrap();
        assert_eq!(c.means.as_slice(), &[1.0, 2.0, 0.0]);
        assert_eq!(c.centered.column(0).as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(c.centered.column(1).as_slice(), &[-1.0, 0.0, 1.0]);
        assert_eq!(c.centered.column(2).as_slice(), &[-1.0, 0.0, 1.0]);
        assert!(center_empirically(&DMatrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn quantile_knots_follow_the_sample() {
        let spec = BasisSpec::bspline(3, 4)
            .with_domain(Interval::new(-2.5, 2.5))
            .with_knots(KnotPlacement::Quantile);
        assert!(build_basis(spec).is_err());
        // 0, 0.1, ..., 2.0 on the domain: quartiles at 0.5, 1.0, 1.5
        let data: Vec<f64> = (0..=20).map(|i| i as f64 / 10.0).collect();
        let b = build_basis_on(spec, &data).unwrap();
        let knots = b.interior_knots();
        for (k, want) in knots.iter().zip([0.5, 1.0, 1.5]) {
            assert!(close(*k, want, 1e-12), "{knots:?}");
        }
        let p = spec.degree;
        for i in 0..=1000 {
            let x = -2.5 + 5.0 * i as f64 / 1000.0;
            let row = b.eval_row(x).unwrap();
            assert!(close(row.sum(), 1.0, 1e-12));
            let u = (x + 2.5) / 5.0;
            let last = i == 1000;
            for k in 0..b.dimension() {
                assert!(
                    close(row[k], cox_de_boor(&b.knots, k, p, u, last), 1e-12),
                    "x={x} k={k}"
                );
            }
        }
    }

    #[test]
    fn quantile_knots_reject_ties_and_piecewise() {
        let spec = BasisSpec::bspline(3, 5).with_knots(KnotPlacement::Quantile);
        assert!(matches!(build_basis_on(spec, &[0.5; 40]), Err(Error::RankDeficient(_))));
        assert!(build_basis_on(spec, &[0.1, 0.2]).is_err());
        assert!(build_basis_on(spec, &[0.1, 2.0]).is_err());
        let pw = BasisSpec::piecewise_legendre(1, 3).with_knots(KnotPlacement::Quantile);
        assert!(build_basis_on(pw, &[0.1, 0.5, 0.9]).is_err());
        let uniform = BasisSpec::bspline(3, 5);
        assert_eq!(build_basis_on(uniform, &[0.3]).unwrap(), build_basis(uniform).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn centered_columns_have_zero_mean(values in proptest::collection::vec(-100.0f64..100.0, 12)) {
            let design = DMatrix::from_column_slice(4, 3, &values);
            let c = center_empirically(&design).unwrap();
            for col in c.centered.column_iter() {
                prop_assert!((col.sum() / 4.0).abs() < 1e-12);
            }
        }

        #[test]
        fn rescale_roundtrip(x in -2.5f64..2.5) {
            let from = Interval::new(-2.5, 2.5);
            let u = affine_rescale(x, from, Interval::unit()).unwrap();
            let back = affine_rescale(u, Interval::unit(), from).unwrap();
            prop_assert!((back - x).abs() < 1e-12);
        }
    }
}
