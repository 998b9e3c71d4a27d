//! Stationary-vector solvers and small numeric helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sparse::SparseTransitionMatrix;

/// Largest chain solved by dense LU; bigger ones use Gauss-Seidel.
pub const DEFAULT_DENSE_LIMIT: usize = 4000;
pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;
/// Required max-norm residual of `pi Q`.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub dense_limit: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            dense_limit: DEFAULT_DENSE_LIMIT,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: RESIDUAL_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarySolution {
    /// Probability vector, sums to one.
    pub pi: Vec<f64>,
    /// `max |(pi Q)_j|`.
    pub residual: f64,
    /// Zero for the dense path.
    pub iterations: usize,
}

/// Neumaier compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Max-norm of `x Q`.
pub fn residual(q: &SparseTransitionMatrix, x: &[f64]) -> f64 {
    max_abs(&q.left_mul(x))
}

/// Solves `pi Q = 0`, `sum(pi) = 1` for an irreducible generator `Q`
/// (off-diagonals nonnegative, rows summing to zero).
pub fn stationary(q: &SparseTransitionMatrix, opts: &SolverOptions) -> Result<StationarySolution> {
    let n = q.dim();
    if n == 0 {
        return Err(Error::Degenerate("empty chain".into()));
    }
    if n == 1 {
        return Ok(StationarySolution { pi: vec![1.0], residual: 0.0, iterations: 0 });
    }
    let sol = if n <= opts.dense_limit { dense_stationary(q)? } else { gauss_seidel(q, opts)? };
    if !(sol.residual <= opts.tolerance) {
        return Err(Error::NonConvergence { iterations: sol.iterations, residual: sol.residual });
    }
    Ok(sol)
}

fn dense_stationary(q: &SparseTransitionMatrix) -> Result<StationarySolution> {
    let n = q.dim();
    // A = Q^T with the last balance equation replaced by the normalization.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (r, c, v) in q.triplets() {
        a[(c, r)] = v;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let lu = a.clone().lu();
    let mut x = lu.solve(&b).ok_or_else(|| Error::Singular("balance equations are singular".into()))?;
    // one step of iterative refinement
    let r = &b - &a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let mut pi: Vec<f64> = x.iter().copied().collect();
    clean_and_normalize(&mut pi)?;
    let residual = residual(q, &pi);
    Ok(StationarySolution { pi, residual, iterations: 0 })
}

fn gauss_seidel(q: &SparseTransitionMatrix, opts: &SolverOptions) -> Result<StationarySolution> {
    let n = q.dim();
    gauss_seidel_from(q, vec![1.0 / n as f64; n], opts)
}

/// Gauss-Seidel sweeps on `pi Q = 0` from the given positive start vector.
/// Does not check the final residual against the tolerance.
pub fn gauss_seidel_from(
    q: &SparseTransitionMatrix,
    start: Vec<f64>,
    opts: &SolverOptions,
) -> Result<StationarySolution> {
    let n = q.dim();
    assert_eq!(start.len(), n);
    let qt = q.transpose();
    let diag: Vec<f64> = (0..n).map(|j| q.get(j, j)).collect();
    if let Some(j) = diag.iter().position(|&d| !(d < 0.0)) {
        return Err(Error::AbsorbingState { rank: j });
    }
    let mut pi = start;
    let s0 = compensated_sum(pi.iter().copied());
    pi.iter_mut().for_each(|x| *x /= s0);
    let mut res = f64::INFINITY;
    let mut it = 0;
    while it < opts.max_iterations {
        it += 1;
        for j in 0..n {
            let mut acc = 0.0;
            for (i, v) in qt.row(j) {
                if i != j {
                    acc += pi[i] * v;
                }
            }
            pi[j] = acc / -diag[j];
        }
        let s: f64 = compensated_sum(pi.iter().copied());
        pi.iter_mut().for_each(|x| *x /= s);
        if it % 10 == 0 || it == opts.max_iterations {
            res = residual(q, &pi);
            if res <= opts.tolerance * 0.1 {
                break;
            }
        }
    }
    res = res.min(residual(q, &pi));
    Ok(StationarySolution { pi, residual: res, iterations: it })
}

/// Zeroes round-off negatives and rescales to sum one.
fn clean_and_normalize(pi: &mut [f64]) -> Result<()> {
    for x in pi.iter_mut() {
        if *x < 0.0 {
            if *x < -1e-9 {
                return Err(Error::Singular(format!("negative stationary mass {x:e}")));
            }
            *x = 0.0;
        }
    }
    let s = compensated_sum(pi.iter().copied());
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Degenerate("stationary vector has no mass".into()));
    }
    pi.iter_mut().for_each(|x| *x /= s);
    Ok(())
}
