//! Group Lasso with empirical-norm group penalties.
//!
//! Minimises `||Y - sum_j X_j g_j||_n^2 + 2 penalty sum_j ||X_j g_j||_n` by block
//! coordinate descent. Each block is first orthonormalised in the empirical
//! inner product, which turns every block update into a closed-form group
//! soft-threshold; the penalty acts on fitted functions, so the fit does not
//! depend on the within-group parameterisation.
//!
//! Several responses sharing one design can be solved together; the iterates
//! of each response are exactly those of an individual solve, but the block
//! products are batched.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, rows_of};

/// Blocks whose entries never exceed this in magnitude count as all-zero.
const ZERO_BLOCK_TOL: f64 = 1e-12;
/// Relative eigenvalue below which a block Gram matrix is treated as singular.
const RANK_TOL: f64 = 1e-10;
/// Ridge added to rank-deficient Gram matrices, relative to `trace / d`.
const RIDGE_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative objective decrease at which a sweep counts as converged.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_sweeps: 10_000,
        }
    }
}

/// One covariate block with its empirical orthonormalisation.
#[derive(Debug, Clone)]
pub struct Group {
    block: DMatrix<f64>,
    transform: DMatrix<f64>,
    inverse_transform: DMatrix<f64>,
    transformed: DMatrix<f64>,
    transformed_t: DMatrix<f64>,
    gram: DMatrix<f64>,
    jittered: bool,
}

impl Group {
    fn new(block: DMatrix<f64>, index: usize) -> Result<Self> {
        let (n, d) = block.shape();
        if d == 0 {
            return Err(Error::InvalidArgument(format!("group {index} has no columns")));
        }
        if block.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design block"));
        }
        if max_abs(&block) <= ZERO_BLOCK_TOL {
            return Err(Error::ZeroBlock { group: index });
        }
        let mut gram = block.tr_mul(&block) / n as f64;
        let eig = gram.clone().symmetric_eigen();
        let lmax = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let lmin = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        let mut jittered = false;
        if lmin <= RANK_TOL * lmax {
            let ridge = RIDGE_JITTER * gram.trace() / d as f64;
            for k in 0..d {
                gram[(k, k)] += ridge;
            }
            jittered = true;
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::RankDeficient(format!("group {index} Gram matrix is not positive definite")))?;
        let inverse_transform = chol.l().transpose();
        let transform = inverse_transform
            .solve_upper_triangular(&DMatrix::identity(d, d))
            .ok_or_else(|| Error::RankDeficient(format!("group {index} transform is singular")))?;
        let transformed = &block * &transform;
        let gram = transformed.tr_mul(&transformed) / n as f64;
        Ok(Group {
            block,
            transform,
            inverse_transform,
            transformed_t: transformed.transpose(),
            transformed,
            gram,
            jittered,
        })
    }

    pub fn dim(&self) -> usize {
        self.block.ncols()
    }

    /// The block in its original coordinates.
    pub fn block(&self) -> &DMatrix<f64> {
        &self.block
    }

    /// Upper-triangular `T` with `(1/n) (X T)^T (X T) = I`.
    pub fn transform(&self) -> &DMatrix<f64> {
        &self.transform
    }

    pub fn inverse_transform(&self) -> &DMatrix<f64> {
        &self.inverse_transform
    }

    /// The orthonormalised block `X T`.
    pub fn transformed(&self) -> &DMatrix<f64> {
        &self.transformed
    }

    /// Empirical Gram matrix of the transformed block (identity unless jittered).
    pub fn transformed_gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn jittered(&self) -> bool {
        self.jittered
    }
}

/// Orthonormalised design blocks sharing `n` observations.
#[derive(Debug, Clone)]
pub struct GroupDesign {
    n: usize,
    groups: Vec<Arc<Group>>,
}

pub fn orthonormalize_groups(blocks: Vec<DMatrix<f64>>) -> Result<GroupDesign> {
    let n = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    GroupDesign::from_blocks(n, blocks)
}

impl GroupDesign {
    /// Builds a design with `n` rows; `blocks` may be empty.
    pub fn from_blocks(n: usize, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        if let Some((j, b)) = blocks.iter().enumerate().find(|(_, b)| b.nrows() != n) {
            return Err(Error::InvalidArgument(format!(
                "group {j} has {} rows, expected {n}",
                b.nrows()
            )));
        }
        if !blocks.is_empty() && n == 0 {
            return Err(Error::InvalidArgument("design has no observations".into()));
        }
        let groups = blocks
            .into_iter()
            .enumerate()
            .map(|(j, b)| Group::new(b, j).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Ok(GroupDesign { n, groups })
    }

    /// A design with `leading` prepended to the groups of `rest`; shares storage with `rest`.
    pub fn with_leading_block(leading: DMatrix<f64>, rest: &GroupDesign) -> Result<Self> {
        if !rest.groups.is_empty() && leading.nrows() != rest.n {
            return Err(Error::InvalidArgument("leading block row count mismatch".into()));
        }
        let n = leading.nrows();
        let mut groups = vec![Arc::new(Group::new(leading, 0)?)];
        groups.extend(rest.groups.iter().cloned());
        Ok(GroupDesign { n, groups })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group(&self, j: usize) -> &Group {
        &self.groups[j]
    }

    pub fn groups(&self) -> impl Iterator<Item = &Group> {
        self.groups.iter().map(|g| g.as_ref())
    }

    pub fn any_jittered(&self) -> bool {
        self.groups.iter().any(|g| g.jittered)
    }

    /// Re-orthonormalises the selected rows of every block.
    pub fn subset_rows(&self, rows: &[usize]) -> Result<GroupDesign> {
        let blocks = self.groups.iter().map(|g| rows_of(&g.block, rows)).collect();
        GroupDesign::from_blocks(rows.len(), blocks)
    }

    /// `sum_j X_j coef_j` at the design rows.
    pub fn predict(&self, coefficients: &[DVector<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (g, c) in self.groups.iter().zip(coefficients) {
            if c.iter().any(|v| *v != 0.0) {
                out += &g.block * c;
            }
        }
        out
    }

    /// Smallest penalty at which the all-zero fit is optimal.
    pub fn lambda_max(&self, y: &DVector<f64>) -> f64 {
        self.groups
            .iter()
            .map(|g| (&g.transformed_t * y).norm() / self.n as f64)
            .fold(0.0, f64::max)
    }
}

/// A solved group-Lasso problem, coefficients in original block coordinates.
#[derive(Debug, Clone)]
pub struct GroupLassoFit {
    pub penalty: f64,
    pub coefficients: Vec<DVector<f64>>,
    pub active: Vec<usize>,
    pub objective: f64,
    pub kkt_gaps: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// `sum_j X_j coef_j` at the design rows.
    pub fitted: DVector<f64>,
    /// Objective after every sweep (solver parameterisation).
    pub objective_trace: Vec<f64>,
}

impl GroupLassoFit {
    pub fn max_kkt_gap(&self) -> f64 {
        self.kkt_gaps.iter().cloned().fold(0.0, f64::max)
    }

    /// Fitted values of group `j` at the design rows.
    pub fn group_fitted(&self, design: &GroupDesign, j: usize) -> DVector<f64> {
        design.group(j).block() * &self.coefficients[j]
    }

    /// The all-zero fit for `design`.
    pub fn zero(design: &GroupDesign, y: &DVector<f64>, penalty: f64) -> GroupLassoFit {
        let coefficients: Vec<_> = design.groups().map(|g| DVector::zeros(g.dim())).collect();
        let objective = objective(design, y, &coefficients, penalty);
        let mut fit = GroupLassoFit {
            penalty,
            coefficients,
            active: Vec::new(),
            objective,
            kkt_gaps: Vec::new(),
            sweeps: 0,
            converged: true,
            fitted: DVector::zeros(design.n()),
            objective_trace: vec![objective],
        };
        fit.kkt_gaps = kkt_certificate(design, y, &fit);
        fit
    }
}

/// `||y - sum_j X_j c_j||_n^2 + 2 penalty sum_j ||X_j c_j||_2 / sqrt(n)`.
pub fn objective(design: &GroupDesign, y: &DVector<f64>, coefficients: &[DVector<f64>], penalty: f64) -> f64 {
    let n = design.n() as f64;
    let mut resid = y.clone();
    let mut pen = 0.0;
    for (g, c) in design.groups().zip(coefficients) {
        if c.iter().all(|v| *v == 0.0) {
            continue;
        }
        let f = g.block() * c;
        pen += f.norm() / n.sqrt();
        resid -= f;
    }
    resid.norm_squared() / n + 2.0 * penalty * pen
}

/// Per-group optimality gaps of the subgradient conditions.
pub fn kkt_certificate(design: &GroupDesign, y: &DVector<f64>, fit: &GroupLassoFit) -> Vec<f64> {
    let n = design.n() as f64;
    let resid = y - design.predict(&fit.coefficients);
    design
        .groups()
        .zip(&fit.coefficients)
        .map(|(g, c)| {
            let grad = &g.transformed_t * &resid / n;
            let gamma = g.inverse_transform() * c;
            group_gap(&grad, &gamma, fit.penalty)
        })
        .collect()
}

fn group_gap(grad: &DVector<f64>, gamma: &DVector<f64>, penalty: f64) -> f64 {
    let norm = gamma.norm();
    if norm == 0.0 {
        (grad.norm() - penalty).max(0.0)
    } else {
        (grad - gamma * (penalty / norm)).norm()
    }
}

/// Internal solver state in transformed coordinates; column `k` belongs to response `k`.
struct Solution {
    gammas: Vec<DMatrix<f64>>,
    resid: DMatrix<f64>,
    sweeps: usize,
    converged: bool,
    traces: Vec<Vec<f64>>,
    gaps: Vec<Vec<f64>>,
}

fn check_finite(y: &DMatrix<f64>) -> Result<()> {
    if y.iter().any(|v| !v.is_finite()) {
        Err(Error::NonFinite("response"))
    } else {
        Ok(())
    }
}

fn objectives(gammas: &[DMatrix<f64>], resid: &DMatrix<f64>, penalty: f64, n: f64) -> Vec<f64> {
    (0..resid.ncols())
        .map(|k| {
            let pen: f64 = gammas.iter().map(|g| g.column(k).norm()).sum();
            resid.column(k).norm_squared() / n + 2.0 * penalty * pen
        })
        .collect()
}

fn transformed_gaps(design: &GroupDesign, s: &Solution, penalty: f64) -> Vec<Vec<f64>> {
    let n = design.n as f64;
    let k_count = s.resid.ncols();
    let mut gaps = vec![vec![0.0; design.len()]; k_count];
    for (j, g) in design.groups.iter().enumerate() {
        let grad = &g.transformed_t * &s.resid / n;
        for (k, gk) in gaps.iter_mut().enumerate() {
            let grad_k = grad.column(k).into_owned();
            let gamma_k = s.gammas[j].column(k).into_owned();
            gk[j] = group_gap(&grad_k, &gamma_k, penalty);
        }
    }
    gaps
}

/// One block update for all responses; returns whether any coefficient moved.
fn update_group(g: &Group, gamma: &mut DMatrix<f64>, resid: &mut DMatrix<f64>, penalty: f64, n: f64) -> bool {
    let mut z = &g.transformed_t * &*resid / n;
    let was_zero = gamma.iter().all(|v| *v == 0.0);
    if !was_zero {
        z += &g.gram * &*gamma;
    }
    let mut delta = DMatrix::zeros(z.nrows(), z.ncols());
    let mut moved = false;
    for k in 0..z.ncols() {
        let norm = z.column(k).norm();
        let scale = if norm > penalty { 1.0 - penalty / norm } else { 0.0 };
        for r in 0..z.nrows() {
            let new = scale * z[(r, k)];
            let d = new - gamma[(r, k)];
            if d != 0.0 {
                moved = true;
            }
            delta[(r, k)] = d;
            gamma[(r, k)] = new;
        }
    }
    if moved {
        resid.gemm(-1.0, &g.transformed, &delta, 1.0);
    }
    moved
}

fn solve(
    design: &GroupDesign,
    y: &DMatrix<f64>,
    penalty: f64,
    opts: &SolverOptions,
    init: Option<Vec<DMatrix<f64>>>,
) -> Result<Solution> {
    if !(penalty >= 0.0) || !penalty.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "penalty must be nonnegative, got {penalty}"
        )));
    }
    check_finite(y)?;
    let k_count = y.ncols();
    let n = design.n as f64;
    let mut gammas: Vec<DMatrix<f64>> = match init {
        Some(g) => g,
        None => design.groups.iter().map(|g| DMatrix::zeros(g.dim(), k_count)).collect(),
    };
    let mut resid = y.clone();
    for (g, gamma) in design.groups.iter().zip(&gammas) {
        if gamma.iter().any(|v| *v != 0.0) {
            resid.gemm(-1.0, &g.transformed, gamma, 1.0);
        }
    }
    let mut s = Solution {
        gammas: Vec::new(),
        resid,
        sweeps: 0,
        converged: false,
        traces: vec![Vec::new(); k_count],
        gaps: Vec::new(),
    };
    if design.is_empty() || k_count == 0 {
        s.gammas = gammas;
        s.converged = true;
        s.gaps = vec![Vec::new(); k_count];
        return Ok(s);
    }
    let record = |traces: &mut Vec<Vec<f64>>, obj: &[f64]| {
        for (t, o) in traces.iter_mut().zip(obj) {
            t.push(*o);
        }
    };
    let settled = |prev: &[f64], cur: &[f64]| {
        prev.iter()
            .zip(cur)
            .all(|(p, c)| p - c <= opts.tol * c.abs().max(f64::MIN_POSITIVE))
    };

    let mut prev = objectives(&gammas, &s.resid, penalty, n);
    record(&mut s.traces, &prev);
    let all: Vec<usize> = (0..design.len()).collect();
    while s.sweeps < opts.max_sweeps {
        for &j in &all {
            update_group(&design.groups[j], &mut gammas[j], &mut s.resid, penalty, n);
        }
        s.sweeps += 1;
        let cur = objectives(&gammas, &s.resid, penalty, n);
        record(&mut s.traces, &cur);
        if settled(&prev, &cur) {
            s.gammas = gammas;
            let gaps = transformed_gaps(design, &s, penalty);
            gammas = std::mem::take(&mut s.gammas);
            let worst = gaps.iter().flatten().cloned().fold(0.0, f64::max);
            if worst <= 10.0 * opts.tol {
                s.converged = true;
                s.gaps = gaps;
                break;
            }
        }
        prev = cur;

        // sweep only the active groups until they settle
        let active: Vec<usize> = all
            .iter()
            .cloned()
            .filter(|&j| gammas[j].iter().any(|v| *v != 0.0))
            .collect();
        if active.is_empty() || active.len() == all.len() {
            continue;
        }
        while s.sweeps < opts.max_sweeps {
            for &j in &active {
                update_group(&design.groups[j], &mut gammas[j], &mut s.resid, penalty, n);
            }
            s.sweeps += 1;
            let cur = objectives(&gammas, &s.resid, penalty, n);
            record(&mut s.traces, &cur);
            let done = settled(&prev, &cur);
            prev = cur;
            if done {
                break;
            }
        }
    }
    s.gammas = gammas;
    if !s.converged {
        s.gaps = transformed_gaps(design, &s, penalty);
    }
    Ok(s)
}

fn into_fits(design: &GroupDesign, y: &DMatrix<f64>, penalty: f64, s: Solution) -> Vec<GroupLassoFit> {
    (0..y.ncols())
        .map(|k| {
            let coefficients: Vec<DVector<f64>> = design
                .groups
                .iter()
                .zip(&s.gammas)
                .map(|(g, gamma)| &g.transform * gamma.column(k))
                .collect();
            let active = s
                .gammas
                .iter()
                .enumerate()
                .filter(|(_, gamma)| gamma.column(k).iter().any(|v| *v != 0.0))
                .map(|(j, _)| j)
                .collect();
            let yk = y.column(k).into_owned();
            let fitted = &yk - s.resid.column(k);
            GroupLassoFit {
                penalty,
                objective: objective(design, &yk, &coefficients, penalty),
                coefficients,
                active,
                kkt_gaps: s.gaps[k].clone(),
                sweeps: s.sweeps,
                converged: s.converged,
                fitted,
                objective_trace: s.traces[k].clone(),
            }
        })
        .collect()
}

fn warm_state(design: &GroupDesign, warm: &[&GroupLassoFit]) -> Vec<DMatrix<f64>> {
    design
        .groups
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let mut m = DMatrix::zeros(g.dim(), warm.len());
            for (k, fit) in warm.iter().enumerate() {
                m.set_column(k, &(g.inverse_transform() * &fit.coefficients[j]));
            }
            m
        })
        .collect()
}

pub fn fit_group_lasso(
    design: &GroupDesign,
    y: &DVector<f64>,
    penalty: f64,
    opts: &SolverOptions,
) -> Result<GroupLassoFit> {
    fit_group_lasso_warm(design, y, penalty, opts, None)
}

/// Like [`fit_group_lasso`], starting from the coefficients of `warm`.
pub fn fit_group_lasso_warm(
    design: &GroupDesign,
    y: &DVector<f64>,
    penalty: f64,
    opts: &SolverOptions,
    warm: Option<&GroupLassoFit>,
) -> Result<GroupLassoFit> {
    check_response_len(design, y.len())?;
    let ym = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    let init = warm.map(|w| warm_state(design, &[w]));
    let s = solve(design, &ym, penalty, opts, init)?;
    Ok(into_fits(design, &ym, penalty, s).pop().expect("one response"))
}

/// Solves one problem per column of `ys`, all on the same design and penalty.
pub fn fit_group_lasso_multi(
    design: &GroupDesign,
    ys: &DMatrix<f64>,
    penalty: f64,
    opts: &SolverOptions,
    warm: Option<&[GroupLassoFit]>,
) -> Result<Vec<GroupLassoFit>> {
    check_response_len(design, ys.nrows())?;
    let init = match warm {
        Some(w) => {
            if w.len() != ys.ncols() {
                return Err(Error::InvalidArgument("one warm start per response required".into()));
            }
            let refs: Vec<&GroupLassoFit> = w.iter().collect();
            Some(warm_state(design, &refs))
        }
        None => None,
    };
    let s = solve(design, ys, penalty, opts, init)?;
    Ok(into_fits(design, ys, penalty, s))
}

fn check_response_len(design: &GroupDesign, len: usize) -> Result<()> {
    if len != design.n() && !design.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "response has {len} entries, design has {} rows",
            design.n()
        )));
    }
    Ok(())
}

/// Log-spaced decreasing grid from `lambda_max` down to `ratio * lambda_max`.
pub fn lambda_path(design: &GroupDesign, y: &DVector<f64>, n_points: usize, ratio: f64) -> Result<Vec<f64>> {
    lambda_path_multi(
        design,
        &DMatrix::from_column_slice(y.len(), 1, y.as_slice()),
        n_points,
        ratio,
    )
}

/// Grid whose top is the largest `lambda_max` over the columns of `ys`.
pub fn lambda_path_multi(design: &GroupDesign, ys: &DMatrix<f64>, n_points: usize, ratio: f64) -> Result<Vec<f64>> {
    if n_points < 2 {
        return Err(Error::InvalidArgument(
            "a penalty path needs at least two points".into(),
        ));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "path ratio must lie in (0, 1), got {ratio}"
        )));
    }
    check_finite(ys)?;
    let top = ys
        .column_iter()
        .map(|c| design.lambda_max(&c.into_owned()))
        .fold(0.0, f64::max);
    if !(top > 0.0) {
        return Err(Error::InvalidArgument(
            "response is orthogonal to every group (zero lambda_max)".into(),
        ));
    }
    let step = ratio.ln() / (n_points - 1) as f64;
    Ok((0..n_points)
        .map(|i| if i == 0 { top } else { top * (step * i as f64).exp() })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub selected: f64,
    pub selected_index: usize,
    pub grid: Vec<f64>,
    /// Mean held-out squared error per grid point.
    pub curve: Vec<f64>,
}

/// K-fold cross-validation over a decreasing penalty grid with warm starts.
pub fn cross_validate(
    design: &GroupDesign,
    y: &DVector<f64>,
    grid: &[f64],
    folds: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<CvResult> {
    cross_validate_multi(
        design,
        &DMatrix::from_column_slice(y.len(), 1, y.as_slice()),
        grid,
        folds,
        seed,
        opts,
    )
}

/// Cross-validation of one common penalty for several responses; the curve
/// averages held-out error over responses.
pub fn cross_validate_multi(
    design: &GroupDesign,
    ys: &DMatrix<f64>,
    grid: &[f64],
    folds: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<CvResult> {
    let n = design.n();
    if folds < 2 || n < folds {
        return Err(Error::InvalidArgument(format!(
            "cross-validation needs 2 <= folds <= n, got folds={folds}, n={n}"
        )));
    }
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::InvalidArgument(
            "penalty grid must be strictly decreasing".into(),
        ));
    }
    check_response_len(design, ys.nrows())?;
    check_finite(ys)?;
    let assignment = fold_assignment(n, folds, seed);
    let per_fold = (0..folds)
        .into_par_iter()
        .map(|f| fold_errors(design, ys, grid, &assignment, f, opts))
        .collect::<Result<Vec<_>>>()?;
    let curve: Vec<f64> = (0..grid.len())
        .map(|g| per_fold.iter().map(|e| e[g]).sum::<f64>() / folds as f64)
        .collect();
    let best = curve.iter().cloned().fold(f64::INFINITY, f64::min);
    // ties go to the larger penalty, i.e. the earliest grid entry
    let selected_index = curve
        .iter()
        .position(|&c| c <= best * (1.0 + 1e-12))
        .expect("non-empty grid");
    Ok(CvResult {
        selected: grid[selected_index],
        selected_index,
        grid: grid.to_vec(),
        curve,
    })
}

/// Random partition: observation `i` goes to fold `assignment[i]`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % folds;
    }
    assignment
}

fn fold_errors(
    design: &GroupDesign,
    ys: &DMatrix<f64>,
    grid: &[f64],
    assignment: &[usize],
    fold: usize,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    let train: Vec<usize> = (0..design.n()).filter(|&i| assignment[i] != fold).collect();
    let test: Vec<usize> = (0..design.n()).filter(|&i| assignment[i] == fold).collect();
    let train_design = design.subset_rows(&train)?;
    let y_train = rows_of(ys, &train);
    let y_test = rows_of(ys, &test);
    let test_blocks: Vec<DMatrix<f64>> = design.groups().map(|g| rows_of(g.block(), &test)).collect();
    let mut state: Option<Vec<DMatrix<f64>>> = None;
    let mut errors = Vec::with_capacity(grid.len());
    for &penalty in grid {
        let s = solve(&train_design, &y_train, penalty, opts, state.take())?;
        let mut pred = DMatrix::zeros(test.len(), ys.ncols());
        for ((g, gamma), block) in train_design.groups.iter().zip(&s.gammas).zip(&test_blocks) {
            if gamma.iter().any(|v| *v != 0.0) {
                pred += block * (&g.transform * gamma);
            }
        }
        let sse = (&y_test - pred).norm_squared();
        errors.push(sse / (test.len() * ys.ncols()) as f64);
        state = Some(s.gammas);
    }
    Ok(errors)
}

/// `2 sigma sqrt(d/n) + 2 sigma sqrt((2x + 2 log q)/n)`.
pub fn theoretical_lambda(sigma: f64, d: usize, n: usize, q: usize, x: f64) -> f64 {
    let n = n as f64;
    2.0 * sigma * (d as f64 / n).sqrt() + 2.0 * sigma * ((2.0 * x + 2.0 * (q as f64).ln()) / n).sqrt()
}

/// `C (sqrt(d L / n) + sqrt(s1) d L / (psi n))` with `L = x + log d1 + log q`.
#[allow(clippy::too_many_arguments)]
pub fn theoretical_eta(c: f64, d: usize, n: usize, d1: usize, q: usize, s1: usize, psi: f64, x: f64) -> f64 {
    let l = x + (d1 as f64).ln() + (q as f64).ln();
    let (d, n) = (d as f64, n as f64);
    c * ((d * l / n).sqrt() + (s1 as f64).sqrt() * d * l / (psi * n))
}
