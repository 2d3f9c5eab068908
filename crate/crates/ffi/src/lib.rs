//! C interface to the two-step estimator.
//!
//! Objects are opaque handles created by `*_new` functions and released by the
//! matching `*_free`. Every fallible call returns a [`SamStatus`]; on failure
//! [`samtwostep_last_error`] describes what went wrong on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use nalgebra::{DMatrix, DVector};
use samtwostep::basis::{build_basis, build_basis_on, Basis, BasisSpec, Interval, KnotPlacement};
use samtwostep::pipeline::{fit_two_step, Tuning, TwoStepConfig, TwoStepFit};
use samtwostep::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    RankDeficient = 4,
    IllConditioned = 5,
    NonFinite = 6,
    Numerical = 7,
    Panic = 8,
}

/// Which estimator an interval refers to.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamEstimator {
    Presmooth = 0,
    Resmooth = 1,
}

/// Interior knot placement of a B-spline basis.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamKnots {
    Uniform = 0,
    Quantile = 1,
}

/// Opaque univariate basis.
pub struct SamBasis {
    inner: Basis,
}

/// Opaque fitted two-step estimator.
pub struct SamFit {
    inner: TwoStepFit,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SamStatus {
    match e {
        Error::Domain { .. } => SamStatus::Domain,
        Error::RankDeficient(_) | Error::ZeroBlock { .. } => SamStatus::RankDeficient,
        Error::IllConditioned { .. } => SamStatus::IllConditioned,
        Error::NonFinite(_) => SamStatus::NonFinite,
        Error::InsufficientLocalData { .. } | Error::TooManyFailures { .. } => SamStatus::Numerical,
        _ => SamStatus::InvalidArgument,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), (SamStatus, String)>>(f: F) -> SamStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SamStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SamStatus::Panic
        }
    }
}

fn lift<T>(r: samtwostep::Result<T>) -> Result<T, (SamStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (SamStatus, String) {
    (SamStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: &str) -> (SamStatus, String) {
    (SamStatus::InvalidArgument, msg.to_string())
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn samtwostep_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn samtwostep_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}

/// Clamped B-spline basis of `degree` with `intervals` partition intervals on `[lo, hi]`.
///
/// With `SAM_KNOTS_QUANTILE` the interior knots are placed at quantiles of the
/// `n_sample` values in `sample`; otherwise `sample` may be null.
///
/// # Safety
/// `sample` must point to `n_sample` doubles when quantile knots are requested,
/// and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn samtwostep_basis_new_bspline(
    degree: usize,
    intervals: usize,
    lo: f64,
    hi: f64,
    knots: SamKnots,
    sample: *const f64,
    n_sample: usize,
    out: *mut *mut SamBasis,
) -> SamStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = BasisSpec::bspline(degree, intervals).with_domain(Interval::new(lo, hi));
        let basis = match knots {
            SamKnots::Uniform => lift(build_basis(spec))?,
            SamKnots::Quantile => {
                if sample.is_null() {
                    return Err(null("sample"));
                }
                let data = slice::from_raw_parts(sample, n_sample);
                lift(build_basis_on(spec.with_knots(KnotPlacement::Quantile), data))?
            }
        };
        *out = Box::into_raw(Box::new(SamBasis { inner: basis }));
        Ok(())
    })
}

/// Orthonormal piecewise Legendre basis of `degree` on `intervals` equal pieces of `[lo, hi]`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn samtwostep_basis_new_legendre(
    degree: usize,
    intervals: usize,
    lo: f64,
    hi: f64,
    out: *mut *mut SamBasis,
) -> SamStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = BasisSpec::piecewise_legendre(degree, intervals).with_domain(Interval::new(lo, hi));
        let basis = lift(build_basis(spec))?;
        *out = Box::into_raw(Box::new(SamBasis { inner: basis }));
        Ok(())
    })
}

/// Number of basis functions, or 0 for a null handle.
///
/// # Safety
/// `basis` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn samtwostep_basis_dimension(basis: *const SamBasis) -> usize {
    basis.as_ref().map_or(0, |b| b.inner.dimension())
}

/// Writes the `n x dimension` design matrix in row-major order into `out`.
///
/// # Safety
/// `points` must hold `n` doubles and `out` room for `n * dimension` doubles.
#[no_mangle]
pub unsafe extern "C" fn samtwostep_basis_eval(
    basis: *const SamBasis,
    points: *const f64,
    n: usize,
    out: *mut f64,
) -> SamStatus {
    guard(|| {
        let b = basis.as_ref().ok_or_else(|| null("basis"))?;
        if n == 0 {
            return Ok(());
        }
        if points.is_null() || out.is_null() {
            return Err(null("points or out"));
        }
        let pts = slice::from_raw_parts(points, n);
        let design = lift(b.inner.eval_design(pts))?;
        let d = design.ncols();
        let dst = slice::from_raw_parts_mut(out, n * d);
        for i in 0..n {
            for k in 0..d {
                dst[i * d + k] = design[(i, k)];
            }
        }
        Ok(())
    })
}

/// # Safety
/// `basis` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn samtwostep_basis_free(basis: *mut SamBasis) {
    if !basis.is_null() {
        drop(Box::from_raw(basis));
    }
}

/// Settings of [`samtwostep_fit_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SamFitOptions {
    /// Cubic B-spline dimension of the presmoother.
    pub d_pre: usize,
    /// Cubic B-spline dimension of the least-squares resmoother.
    pub d_re: usize,
    pub lambda: f64,
    pub eta: f64,
    pub knots: SamKnots,
    /// Relative objective tolerance of the group-Lasso solver.
    pub tol: f64,
    pub max_sweeps: usize,
}

/// Defaults: `d_pre = 20`, `d_re = 10`, uniform knots, solver tolerance `1e-8`.
/// The penalties are zero and must be set.
#[no_mangle]
pub extern "C" fn samtwostep_fit_options_default() -> SamFitOptions {
    SamFitOptions {
        d_pre: 20,
        d_re: 10,
        lambda: 0.0,
        eta: 0.0,
        knots: SamKnots::Uniform,
        tol: 1e-8,
        max_sweeps: 10_000,
    }
}

/// Fits the two-step estimator of the first component.
///
/// `x` is the `n x q` covariate matrix in row-major order with column 0 the
/// component of interest; covariate `j` is supported on `[lo[j], hi[j]]`.
///
/// # Safety
/// `y` must hold `n` doubles, `x` must hold `n * q`, `lo` and `hi` must hold `q`,
/// and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn samtwostep_fit_new(
    y: *const f64,
    x: *const f64,
    n: usize,
    q: usize,
    lo: *const f64,
    hi: *const f64,
    options: *const SamFitOptions,
    out: *mut *mut SamFit,
) -> SamStatus {
    guard(|| {
        if y.is_null() || x.is_null() || lo.is_null() || hi.is_null() || out.is_null() {
            return Err(null("an input pointer"));
        }
        let opts = options
            .as_ref()
            .copied()
            .unwrap_or_else(|| samtwostep_fit_options_default());
        if n == 0 || q == 0 {
            return Err(invalid("n and q must be positive"));
        }
        let y = DVector::from_column_slice(slice::from_raw_parts(y, n));
        let x = DMatrix::from_row_slice(n, q, slice::from_raw_parts(x, n * q));
        let (lo, hi) = (slice::from_raw_parts(lo, q), slice::from_raw_parts(hi, q));
        let domains = lo.iter().zip(hi).map(|(&a, &b)| Interval::new(a, b)).collect();
        let knots = match opts.knots {
            SamKnots::Uniform => KnotPlacement::Uniform,
            SamKnots::Quantile => KnotPlacement::Quantile,
        };
        let mut config = lift(TwoStepConfig::cubic_with_knots(opts.d_pre, opts.d_re, domains, knots))?;
        config.solver.tol = opts.tol;
        config.solver.max_sweeps = opts.max_sweeps;
        let tuning = Tuning {
            lambda: opts.lambda,
            eta: opts.eta,
        };
        let fit = lift(fit_two_step(&config, &x, &y, tuning))?;
        *out = Box::into_raw(Box::new(SamFit { inner: fit }));
        Ok(())
    })
}

/// Pointwise interval `center ± half` at `x` for noise level `sigma`.
///
/// # Safety
/// `fit` must be a live handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn samtwostep_fit_interval(
    fit: *const SamFit,
    estimator: SamEstimator,
    x: f64,
    sigma: f64,
    level: f64,
    center: *mut f64,
    half_width: *mut f64,
) -> SamStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        if center.is_null() || half_width.is_null() {
            return Err(null("output"));
        }
        let ci = match estimator {
            SamEstimator::Presmooth => lift(f.inner.presmooth_ci(x, sigma, level))?,
            SamEstimator::Resmooth => lift(f.inner.resmooth_ci(x, sigma, level))?,
        };
        *center = ci.center;
        *half_width = ci.half_width;
        Ok(())
    })
}

/// Empirical angle between the first block and the rest; NaN for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn samtwostep_fit_rho_hat(fit: *const SamFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.inner.debiased.rho_hat)
}

/// Condition number of the debiasing system; NaN for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn samtwostep_fit_condition(fit: *const SamFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.inner.debiased.condition)
}

/// Pseudo-responses (presmoothed values at the data) written into `out`, which holds `n` doubles.
///
/// # Safety
/// `fit` must be a live handle and `out` must have room for `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn samtwostep_fit_pseudo_responses(fit: *const SamFit, out: *mut f64, n: usize) -> SamStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let values = f.inner.debiased.fitted();
        if n != values.len() {
            return Err(invalid("buffer length differs from the sample size"));
        }
        slice::from_raw_parts_mut(out, n).copy_from_slice(values.as_slice());
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn samtwostep_fit_free(fit: *mut SamFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}
