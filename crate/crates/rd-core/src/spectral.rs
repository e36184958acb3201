//! Discrete Dirichlet Laplacian on the interval: operator assembly, shifted
//! solves, and the principal eigenpair.
//!
//! The operator stored here is `A = -Lap_h`, the *negative* of the standard
//! three-point second difference with homogeneous Dirichlet ends, so `A` is
//! symmetric positive definite with spectrum `(4/h^2) sin^2(m pi h / (2L))`,
//! `m = 1..n`. All routines act on interior-node fields (see [`Grid1D`]).

use crate::error::{RdError, Result};
use crate::grid::Grid1D;

/// Relative pivot floor for the tridiagonal elimination.
const PIVOT_FLOOR: f64 = 1e-14;

/// Relative residual target for the eigen iteration: accept once
/// `max |A y - lambda y| <= EIGEN_TOL * lambda`.
const EIGEN_TOL: f64 = 1e-11;

/// Iteration cap for [`principal_eigenpair`].
const EIGEN_MAX_ITER: usize = 10_000;

/// Negative discrete Laplacian `A = -Lap_h` on a [`Grid1D`]: constant
/// tridiagonal with diagonal `2/h^2` and off-diagonal `-1/h^2`.
#[derive(Debug, Clone)]
pub struct Laplacian {
    n: usize,
    diag: f64,
    off: f64,
}

/// Assemble `A = -Lap_h` for the grid.
pub fn build_laplacian(grid: &Grid1D) -> Laplacian {
    let h = grid.spacing();
    Laplacian {
        n: grid.n_interior(),
        diag: 2.0 / (h * h),
        off: -1.0 / (h * h),
    }
}

impl Laplacian {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Diagonal entry `2/h^2`.
    pub fn diag(&self) -> f64 {
        self.diag
    }

    /// Off-diagonal entry `-1/h^2`.
    pub fn off(&self) -> f64 {
        self.off
    }

    /// `y = A x` with zero Dirichlet values beyond both ends.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let left = if i > 0 { x[i - 1] } else { 0.0 };
            let right = if i + 1 < self.n { x[i + 1] } else { 0.0 };
            y[i] = self.diag * x[i] + self.off * (left + right);
        }
        y
    }
}

/// Cached elimination for a constant-coefficient symmetric tridiagonal matrix
/// `diag` on the diagonal, `off` on both off-diagonals. Built once, then
/// applied to many right-hand sides (the time steppers lean on this).
#[derive(Debug, Clone)]
pub(crate) struct TridiagFactor {
    off: f64,
    /// Pivots of the LDL^T-style forward sweep.
    pivots: Vec<f64>,
}

impl TridiagFactor {
    pub(crate) fn new(diag: f64, off: f64, n: usize) -> Result<Self> {
        let scale = diag.abs() + 2.0 * off.abs();
        let floor = PIVOT_FLOOR * scale.max(1.0);
        let mut pivots = vec![0.0; n];
        let mut prev = diag;
        for (row, p) in pivots.iter_mut().enumerate() {
            if row > 0 {
                prev = diag - off * off / prev;
            }
            if prev.abs() < floor {
                return Err(RdError::SingularPivot { pivot: prev, row });
            }
            *p = prev;
        }
        Ok(Self { off, pivots })
    }

    /// Solve in place.
    pub(crate) fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.pivots.len();
        debug_assert_eq!(b.len(), n);
        for i in 1..n {
            b[i] -= self.off / self.pivots[i - 1] * b[i - 1];
        }
        b[n - 1] /= self.pivots[n - 1];
        for i in (0..n - 1).rev() {
            b[i] = (b[i] - self.off * b[i + 1]) / self.pivots[i];
        }
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Eigenvalue and eigenvector of the discrete operator, vector scaled to
/// max-norm one with a positive peak.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// Smallest eigenpair of `A = -Lap_h` by inverse power iteration.
///
/// Starts from the all-ones vector and sweeps until the max-norm residual
/// `|A y - lambda y|` drops below `1e-11 lambda` (the Rayleigh quotient
/// converges much faster than the vector, so stagnation of the value alone
/// would leave the vector short of solver accuracy). Errors out after 10000
/// sweeps. The returned vector has max-norm one and strictly positive entries.
pub fn principal_eigenpair(grid: &Grid1D) -> Result<EigenPair> {
    let a = build_laplacian(grid);
    let factor = TridiagFactor::new(a.diag, a.off, a.n)?;
    let mut x = vec![1.0; a.n];
    let mut rayleigh = f64::INFINITY;
    for _ in 0..EIGEN_MAX_ITER {
        let mut y = factor.solve(&x);
        let peak = y.iter().fold(0.0f64, |m, &v| if v.abs() > m.abs() { v } else { m });
        for v in &mut y {
            *v /= peak;
        }
        let ay = a.apply(&y);
        let num: f64 = y.iter().zip(&ay).map(|(u, v)| u * v).sum();
        let den: f64 = y.iter().map(|u| u * u).sum();
        rayleigh = num / den;
        let residual = ay
            .iter()
            .zip(&y)
            .map(|(av, v)| (av - rayleigh * v).abs())
            .fold(0.0, f64::max);
        x = y;
        if residual <= EIGEN_TOL * rayleigh.abs() {
            let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
            if min <= 0.0 {
                return Err(RdError::EigenIteration {
                    max_iter: EIGEN_MAX_ITER,
                    rayleigh,
                });
            }
            return Ok(EigenPair {
                value: rayleigh,
                vector: x,
            });
        }
    }
    Err(RdError::EigenIteration {
        max_iter: EIGEN_MAX_ITER,
        rayleigh,
    })
}

/// Solve `(d A + sigma I) x = rhs` with `A = -Lap_h`.
///
/// Requires `d > 0`. A nonnegative `sigma` keeps the system positive
/// definite; a negative `sigma` is accepted as long as no elimination pivot
/// collapses, otherwise [`RdError::SingularPivot`] is returned.
pub fn solve_shifted(grid: &Grid1D, d: f64, sigma: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    if !(d.is_finite() && d > 0.0) {
        return Err(RdError::InvalidParameter(format!(
            "diffusion coefficient must be positive, got {d}"
        )));
    }
    let a = build_laplacian(grid);
    let factor = TridiagFactor::new(d * a.diag + sigma, d * a.off, a.n)?;
    Ok(factor.solve(rhs))
}

/// Analytic eigenvalue of `-Lap_h`, mode `m` (1-based): `(4/h^2) sin^2(m pi h / (2L))`.
pub fn discrete_eigenvalue(grid: &Grid1D, m: usize) -> f64 {
    let h = grid.spacing();
    let s = (m as f64 * std::f64::consts::PI * h / (2.0 * grid.length())).sin();
    4.0 / (h * h) * s * s
}
