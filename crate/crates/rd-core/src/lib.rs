//! Tools for reaction-diffusion equations whose reaction term depends on a
//! temporally distributed, spatially averaged feedback
//!
//! ```text
//! u_t = d u_xx + F(u, v),      v(x, t) = (g ** H(u))(x, t),
//! ```
//!
//! on an interval with homogeneous Dirichlet ends, where `**` convolves
//! `H(u)` against a Gamma-family memory kernel `g` in time and against the
//! diffusion Green's function in space. For the two kernels supported here
//! the pair `(u, v)` is equivalent to a local system of two (weak kernel) or
//! three (strong kernel) reaction-diffusion equations, which is what the
//! numerical routines operate on; the direct convolution form is retained as
//! an independent cross-check.
//!
//! The crate provides the discrete spectral machinery ([`spectral`]), the
//! kernel reduction and history handling ([`kernel`]), a catalog of population
//! models ([`model`]), closed-form bifurcation quantities ([`bifurcation`]),
//! steady-state solving and continuation ([`steady`]), and time integration of
//! both the local systems and the original nonlocal equation ([`timeint`]).

pub mod bifurcation;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod model;
pub mod spectral;
pub mod steady;
pub mod timeint;

pub use error::{RdError, Result};
pub use grid::Grid1D;
