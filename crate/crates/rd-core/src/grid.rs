//! Uniform grid on an interval with homogeneous Dirichlet ends.

use crate::error::{RdError, Result};

/// Interior nodes of a uniform mesh over `(0, L)`.
///
/// Endpoint values are pinned to zero and never stored: a field on the grid is
/// a `Vec<f64>` of length [`Grid1D::n_interior`], entry `i` living at
/// `x = (i + 1) * h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    length: f64,
    n_interior: usize,
    h: f64,
}

impl Grid1D {
    /// `length` is the interval length `L > 0`; `n_interior >= 2` is the
    /// number of interior nodes, giving spacing `h = L / (n_interior + 1)`.
    pub fn new(length: f64, n_interior: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(RdError::InvalidGrid(format!(
                "interval length must be positive and finite, got {length}"
            )));
        }
        if n_interior < 2 {
            return Err(RdError::InvalidGrid(format!(
                "need at least 2 interior nodes, got {n_interior}"
            )));
        }
        let h = length / (n_interior + 1) as f64;
        Ok(Self {
            length,
            n_interior,
            h,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Coordinate of interior node `i` (zero-based).
    pub fn node(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_interior).map(|i| self.node(i)).collect()
    }

    /// Sample `f(x)` at the interior nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n_interior).map(|i| f(self.node(i))).collect()
    }

    /// Trapezoid integral over `(0, L)` of a field that vanishes at both ends;
    /// with zero endpoint values this is `h` times the sum of entries.
    pub fn integrate(&self, field: &[f64]) -> f64 {
        debug_assert_eq!(field.len(), self.n_interior);
        self.h * field.iter().sum::<f64>()
    }
}
