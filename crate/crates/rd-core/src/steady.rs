//! Steady states of the local systems.
//!
//! The weak-kernel system stacks two fields per grid node, the strong-kernel
//! system three, so the steady-state Jacobian is block tridiagonal with 2x2
//! or 3x3 diagonal blocks and scalar diffusive coupling `d/h^2` on both
//! off-diagonals. A damped Newton iteration with a block Thomas solve is the
//! workhorse; on top of it sit linearized spectra, branch continuation in the
//! diffusion parameter (natural and amplitude-parametrized), and a seeded
//! multi-start search used to probe uniqueness and nonexistence.

use nalgebra::{Complex, DMatrix, DVector, SMatrix, SVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bifurcation::BifSummary;
use crate::error::{RdError, Result};
use crate::grid::Grid1D;
use crate::kernel::KernelOrder;
use crate::model::ModelSpec;
use crate::spectral::EigenPair;

/// Linear stability calls require the leading real part to clear zero by
/// this margin in either direction.
pub const STABILITY_TOL: f64 = 1e-8;

/// Entries of an accepted steady state may not dip below this allowance;
/// anything lower is reported as a negative root. The slack sits two orders
/// above the Newton residual tolerance because a converged trivial state
/// carries noise of roughly residual over minimum singular value.
const NEGATIVE_FLOOR: f64 = -1e-8;

/// Interior fields of a steady state or snapshot. `w` is present exactly for
/// the strong kernel's three-field system.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Option<Vec<f64>>,
}

impl FieldState {
    pub fn zeros(n: usize, order: KernelOrder) -> Self {
        Self {
            u: vec![0.0; n],
            v: vec![0.0; n],
            w: match order {
                KernelOrder::Weak => None,
                KernelOrder::Strong => Some(vec![0.0; n]),
            },
        }
    }

    pub fn order(&self) -> KernelOrder {
        if self.w.is_some() {
            KernelOrder::Strong
        } else {
            KernelOrder::Weak
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.u.len()
    }

    /// Largest magnitude over all fields.
    pub fn max_norm(&self) -> f64 {
        let fold = |m: f64, xs: &[f64]| xs.iter().fold(m, |acc, x| acc.max(x.abs()));
        let m = fold(0.0, &self.u);
        let m = fold(m, &self.v);
        match &self.w {
            Some(w) => fold(m, w),
            None => m,
        }
    }

    /// Max-norm distance to another state of the same shape.
    pub fn distance(&self, other: &Self) -> f64 {
        let pair = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
        };
        let m = pair(&self.u, &other.u).max(pair(&self.v, &other.v));
        match (&self.w, &other.w) {
            (Some(a), Some(b)) => m.max(pair(a, b)),
            _ => m,
        }
    }

    fn from_flat(x: &[f64], nf: usize) -> Self {
        let n = x.len() / nf;
        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        let mut w = if nf == 3 { Some(Vec::with_capacity(n)) } else { None };
        for i in 0..n {
            u.push(x[nf * i]);
            v.push(x[nf * i + 1]);
            if let Some(wv) = w.as_mut() {
                wv.push(x[nf * i + 2]);
            }
        }
        Self { u, v, w }
    }

    fn to_flat(&self) -> Vec<f64> {
        let nf = field_count(self.order());
        let n = self.u.len();
        let mut x = vec![0.0; nf * n];
        for i in 0..n {
            x[nf * i] = self.u[i];
            x[nf * i + 1] = self.v[i];
            if let Some(w) = &self.w {
                x[nf * i + 2] = w[i];
            }
        }
        x
    }

    fn min_entry(&self) -> f64 {
        let fold = |m: f64, xs: &[f64]| xs.iter().fold(m, |acc, x| acc.min(*x));
        let m = fold(f64::INFINITY, &self.u);
        let m = fold(m, &self.v);
        match &self.w {
            Some(w) => fold(m, w),
            None => m,
        }
    }
}

pub fn field_count(order: KernelOrder) -> usize {
    match order {
        KernelOrder::Weak => 2,
        KernelOrder::Strong => 3,
    }
}

/// Damped-Newton controls.
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub residual_tol: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            residual_tol: 1e-10,
            max_halvings: 30,
        }
    }
}

fn validate_problem(grid: &Grid1D, d: f64, tau: f64) -> Result<()> {
    if !(d.is_finite() && d > 0.0) {
        return Err(RdError::InvalidParameter(format!(
            "diffusion coefficient must be positive and finite, got {d}"
        )));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(RdError::InvalidParameter(format!(
            "delay scale must be positive and finite, got {tau}"
        )));
    }
    let _ = grid;
    Ok(())
}

/// Steady-state residual of the local system on the flat interleaved state.
fn residual_into(
    model: &ModelSpec,
    coupling: f64,
    tau: f64,
    order: KernelOrder,
    x: &[f64],
    out: &mut [f64],
) {
    let nf = field_count(order);
    let n = x.len() / nf;
    let at = |i: isize, f: usize| -> f64 {
        if i < 0 || i as usize >= n {
            0.0
        } else {
            x[nf * i as usize + f]
        }
    };
    for i in 0..n {
        let ii = i as isize;
        let u = x[nf * i];
        let v = x[nf * i + 1];
        let lap = |f: usize| at(ii - 1, f) - 2.0 * x[nf * i + f] + at(ii + 1, f);
        out[nf * i] = coupling * lap(0) + model.f(u, v);
        match order {
            KernelOrder::Weak => {
                out[nf * i + 1] = coupling * lap(1) + (model.h(u) - v) / tau;
            }
            KernelOrder::Strong => {
                let w = x[nf * i + 2];
                out[nf * i + 1] = coupling * lap(1) + (w - v) / tau;
                out[nf * i + 2] = coupling * lap(2) + (model.h(u) - w) / tau;
            }
        }
    }
}

/// Stacked steady-state residual (interleaved per node) of a state.
pub fn steady_residual(
    model: &ModelSpec,
    grid: &Grid1D,
    d: f64,
    tau: f64,
    state: &FieldState,
) -> Result<Vec<f64>> {
    validate_problem(grid, d, tau)?;
    if state.n_nodes() != grid.n_interior() {
        return Err(RdError::InvalidGrid(format!(
            "state has {} nodes but the grid has {}",
            state.n_nodes(),
            grid.n_interior()
        )));
    }
    let h = grid.spacing();
    let x = state.to_flat();
    let mut out = vec![0.0; x.len()];
    residual_into(model, d / (h * h), tau, state.order(), &x, &mut out);
    Ok(out)
}

fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn diag_block_weak(model: &ModelSpec, coupling: f64, tau: f64, u: f64, v: f64) -> SMatrix<f64, 2, 2> {
    SMatrix::<f64, 2, 2>::new(
        -2.0 * coupling + model.f_u(u, v),
        model.f_v(u, v),
        model.h_prime(u) / tau,
        -2.0 * coupling - 1.0 / tau,
    )
}

fn diag_block_strong(model: &ModelSpec, coupling: f64, tau: f64, u: f64, v: f64) -> SMatrix<f64, 3, 3> {
    SMatrix::<f64, 3, 3>::new(
        -2.0 * coupling + model.f_u(u, v),
        model.f_v(u, v),
        0.0,
        0.0,
        -2.0 * coupling - 1.0 / tau,
        1.0 / tau,
        model.h_prime(u) / tau,
        0.0,
        -2.0 * coupling - 1.0 / tau,
    )
}

/// Solve a block-tridiagonal system whose off-diagonal blocks are both the
/// scalar `coupling` times the identity. `diag` and `rhs` are consumed as
/// workspace; the solution lands in `rhs`.
fn block_thomas<const D: usize>(
    diag: &mut [SMatrix<f64, D, D>],
    coupling: f64,
    rhs: &mut [SVector<f64, D>],
) -> Result<()> {
    let n = diag.len();
    for i in 0..n {
        if i > 0 {
            let prev_inv = diag[i - 1];
            diag[i] -= coupling * coupling * prev_inv;
            let corr = prev_inv * rhs[i - 1];
            rhs[i] -= coupling * corr;
        }
        match diag[i].try_inverse() {
            Some(inv) => diag[i] = inv,
            None => return Err(RdError::SingularPivot { pivot: 0.0, row: i }),
        }
    }
    rhs[n - 1] = diag[n - 1] * rhs[n - 1];
    for i in (0..n - 1).rev() {
        let corr = rhs[i] - coupling * rhs[i + 1];
        rhs[i] = diag[i] * corr;
    }
    Ok(())
}

fn newton_flat<const D: usize>(
    model: &ModelSpec,
    coupling: f64,
    tau: f64,
    order: KernelOrder,
    x: &mut Vec<f64>,
    opts: &NewtonOptions,
) -> Result<()> {
    let nf = field_count(order);
    let n = x.len() / nf;
    let mut res = vec![0.0; x.len()];
    residual_into(model, coupling, tau, order, x, &mut res);
    let mut norm = max_abs(&res);
    for iter in 0..opts.max_iter {
        if norm <= opts.residual_tol {
            return Ok(());
        }
        let mut diag: Vec<SMatrix<f64, D, D>> = Vec::with_capacity(n);
        for i in 0..n {
            let u = x[nf * i];
            let v = x[nf * i + 1];
            let block: SMatrix<f64, D, D> = match order {
                KernelOrder::Weak => {
                    let b = diag_block_weak(model, coupling, tau, u, v);
                    SMatrix::<f64, D, D>::from_iterator(b.iter().copied())
                }
                KernelOrder::Strong => {
                    let b = diag_block_strong(model, coupling, tau, u, v);
                    SMatrix::<f64, D, D>::from_iterator(b.iter().copied())
                }
            };
            diag.push(block);
        }
        let mut step: Vec<SVector<f64, D>> = (0..n)
            .map(|i| SVector::<f64, D>::from_iterator((0..D).map(|f| -res[nf * i + f])))
            .collect();
        block_thomas(&mut diag, coupling, &mut step)?;

        let mut t = 1.0;
        let mut accepted = false;
        let mut trial = vec![0.0; x.len()];
        for _ in 0..=opts.max_halvings {
            for i in 0..n {
                for f in 0..nf {
                    trial[nf * i + f] = x[nf * i + f] + t * step[i][f];
                }
            }
            residual_into(model, coupling, tau, order, &trial, &mut res);
            let trial_norm = max_abs(&res);
            if trial_norm.is_finite() && trial_norm < norm {
                std::mem::swap(x, &mut trial);
                norm = trial_norm;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(RdError::NewtonStalled {
                residual: norm,
                iterations: iter,
            });
        }
    }
    if norm <= opts.residual_tol {
        Ok(())
    } else {
        Err(RdError::NewtonStalled {
            residual: norm,
            iterations: opts.max_iter,
        })
    }
}

/// Damped Newton iteration for a steady state of the local system. The
/// kernel order is taken from the shape of the initial guess. Converged
/// states with entries below the roundoff floor are rejected as negative
/// roots rather than returned.
pub fn newton_solve(
    model: &ModelSpec,
    grid: &Grid1D,
    d: f64,
    tau: f64,
    guess: &FieldState,
    opts: &NewtonOptions,
) -> Result<FieldState> {
    validate_problem(grid, d, tau)?;
    if guess.n_nodes() != grid.n_interior() {
        return Err(RdError::InvalidGrid(format!(
            "guess has {} nodes but the grid has {}",
            guess.n_nodes(),
            grid.n_interior()
        )));
    }
    let h = grid.spacing();
    let coupling = d / (h * h);
    let order = guess.order();
    let mut x = guess.to_flat();
    match order {
        KernelOrder::Weak => newton_flat::<2>(model, coupling, tau, order, &mut x, opts)?,
        KernelOrder::Strong => newton_flat::<3>(model, coupling, tau, order, &mut x, opts)?,
    }
    let state = FieldState::from_flat(&x, field_count(order));
    let min_entry = state.min_entry();
    if min_entry < NEGATIVE_FLOOR {
        return Err(RdError::NegativeState { min_entry });
    }
    Ok(state)
}

/// Dense Jacobian of the steady-state residual at a state, in the
/// interleaved node-major layout.
pub fn dense_jacobian(
    model: &ModelSpec,
    grid: &Grid1D,
    d: f64,
    tau: f64,
    state: &FieldState,
) -> Result<DMatrix<f64>> {
    validate_problem(grid, d, tau)?;
    let n = grid.n_interior();
    if state.n_nodes() != n {
        return Err(RdError::InvalidGrid(format!(
            "state has {} nodes but the grid has {}",
            state.n_nodes(),
            n
        )));
    }
    let order = state.order();
    let nf = field_count(order);
    let h = grid.spacing();
    let coupling = d / (h * h);
    let mut jac = DMatrix::<f64>::zeros(nf * n, nf * n);
    for i in 0..n {
        let u = state.u[i];
        let v = state.v[i];
        match order {
            KernelOrder::Weak => {
                let b = diag_block_weak(model, coupling, tau, u, v);
                for r in 0..2 {
                    for c in 0..2 {
                        jac[(2 * i + r, 2 * i + c)] = b[(r, c)];
                    }
                }
            }
            KernelOrder::Strong => {
                let b = diag_block_strong(model, coupling, tau, u, v);
                for r in 0..3 {
                    for c in 0..3 {
                        jac[(3 * i + r, 3 * i + c)] = b[(r, c)];
                    }
                }
            }
        }
        for f in 0..nf {
            if i > 0 {
                jac[(nf * i + f, nf * (i - 1) + f)] = coupling;
            }
            if i + 1 < n {
                jac[(nf * i + f, nf * (i + 1) + f)] = coupling;
            }
        }
    }
    Ok(jac)
}

/// Leading linearized eigenvalue and the smallest singular value of the
/// steady-state Jacobian.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumSummary {
    pub leading_re: f64,
    pub leading_im: f64,
    pub min_sv: f64,
}

impl SpectrumSummary {
    pub fn is_stable(&self) -> bool {
        self.leading_re < -STABILITY_TOL
    }
}

/// Full dense spectrum of the linearization at a state: the eigenvalue of
/// largest real part and the minimum singular value.
pub fn linearized_spectrum(
    model: &ModelSpec,
    grid: &Grid1D,
    d: f64,
    tau: f64,
    state: &FieldState,
) -> Result<SpectrumSummary> {
    let jac = dense_jacobian(model, grid, d, tau, state)?;
    let svd = jac.clone().svd(false, false);
    let min_sv = svd.singular_values.iter().fold(f64::INFINITY, |m, s| m.min(*s));
    let schur = nalgebra::linalg::Schur::try_new(jac, f64::EPSILON, 100_000).ok_or(
        RdError::EigenIteration {
            max_iter: 100_000,
            rayleigh: f64::NAN,
        },
    )?;
    let eigs = schur.complex_eigenvalues();
    let mut leading = Complex::new(f64::NEG_INFINITY, 0.0);
    for e in eigs.iter() {
        if e.re > leading.re || (e.re == leading.re && e.im.abs() > leading.im.abs()) {
            leading = *e;
        }
    }
    Ok(SpectrumSummary {
        leading_re: leading.re,
        leading_im: leading.im.abs(),
        min_sv,
    })
}

/// Equilibrium ratio of the smoothed feedback to `u` along the principal
/// mode: each smoothing stage divides by `1 + tau d lambda1`.
fn stage_ratio(k: f64, tau: f64, d: f64, lambda1: f64) -> f64 {
    k / (1.0 + tau * d * lambda1)
}

/// Build a Newton seed on the principal mode from the local branch theory:
/// the predicted amplitude is `(d - d_star) / d'(0)`.
pub fn seed_from_mode(
    model: &ModelSpec,
    tau: f64,
    d: f64,
    order: KernelOrder,
    mode: &EigenPair,
    summary: &BifSummary,
) -> Result<FieldState> {
    let amp = (d - summary.d_star) / summary.d_prime0;
    if !(amp.is_finite() && amp > 0.0) {
        return Err(RdError::SeedingFailed {
            d,
            reason: format!(
                "local theory places no positive branch at this diffusion (predicted amplitude {amp:.3e})"
            ),
        });
    }
    Ok(mode_seed(model, tau, d, order, mode, amp))
}

fn mode_seed(
    model: &ModelSpec,
    tau: f64,
    d: f64,
    order: KernelOrder,
    mode: &EigenPair,
    amp: f64,
) -> FieldState {
    let e = model.origin_expansion();
    let m1 = stage_ratio(e.k, tau, d, mode.value);
    let u: Vec<f64> = mode.vector.iter().map(|p| amp * p).collect();
    match order {
        KernelOrder::Weak => {
            let v: Vec<f64> = u.iter().map(|x| m1 * x).collect();
            FieldState { u, v, w: None }
        }
        KernelOrder::Strong => {
            let w: Vec<f64> = u.iter().map(|x| m1 * x).collect();
            let v: Vec<f64> = u.iter().map(|x| m1 * m1 / e.k * x).collect();
            FieldState { u, v, w: Some(w) }
        }
    }
}

/// One resolved point on a steady-state branch.
#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub d: f64,
    /// Max-norm of the `u` field.
    pub amplitude: f64,
    pub state: FieldState,
    pub leading_re: f64,
    pub leading_im: f64,
    pub min_sv: f64,
}

/// Branch sweep controls.
#[derive(Debug, Clone, Copy)]
pub struct BranchOptions {
    pub newton: NewtonOptions,
    pub with_spectrum: bool,
    /// Bifurcation point of the tracked branch, when the caller knows it.
    /// Near the onset the amplitude scales like `d - onset`, so the second
    /// grid point (where no secant exists yet) is predicted by that ratio
    /// instead of a flat copy; without it a fine march started close to the
    /// onset can slide onto the trivial state.
    pub onset_hint: Option<f64>,
}

impl Default for BranchOptions {
    fn default() -> Self {
        Self {
            newton: NewtonOptions::default(),
            with_spectrum: true,
            onset_hint: None,
        }
    }
}

fn make_point(
    model: &ModelSpec,
    grid: &Grid1D,
    d: f64,
    tau: f64,
    state: FieldState,
    with_spectrum: bool,
) -> Result<BranchPoint> {
    let (leading_re, leading_im, min_sv) = if with_spectrum {
        let s = linearized_spectrum(model, grid, d, tau, &state)?;
        (s.leading_re, s.leading_im, s.min_sv)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    Ok(BranchPoint {
        d,
        amplitude: max_abs(&state.u),
        state,
        leading_re,
        leading_im,
        min_sv,
    })
}

/// Natural continuation over an explicit diffusion grid with a secant
/// predictor. A Newton failure past the first point reports a fold at the
/// failing diffusion value.
pub fn continue_branch(
    model: &ModelSpec,
    grid: &Grid1D,
    tau: f64,
    d_values: &[f64],
    start: &FieldState,
    opts: &BranchOptions,
) -> Result<Vec<BranchPoint>> {
    if d_values.is_empty() {
        return Err(RdError::InvalidParameter(
            "branch continuation needs a nonempty diffusion grid".into(),
        ));
    }
    let mut points: Vec<BranchPoint> = Vec::with_capacity(d_values.len());
    let mut prev_flat: Option<Vec<f64>> = None;
    let nf = field_count(start.order());
    for (idx, &d) in d_values.iter().enumerate() {
        let guess = match (points.last(), prev_flat.as_ref()) {
            (Some(last), Some(older)) => {
                let last_flat = last.state.to_flat();
                let span = d_values[idx - 1] - d_values[idx - 2];
                let ratio = if span.abs() > 0.0 {
                    (d - d_values[idx - 1]) / span
                } else {
                    1.0
                };
                let mut pred = last_flat.clone();
                for (p, (l, o)) in pred.iter_mut().zip(last_flat.iter().zip(older)) {
                    *p = l + ratio * (l - o);
                }
                FieldState::from_flat(&pred, nf)
            }
            (Some(last), None) => match opts.onset_hint {
                // One resolved point and no secant yet. Near the onset the
                // amplitude scales like `d - onset`, so rescale the first
                // solution by that ratio rather than copying it flat.
                Some(onset) if (last.d - onset).abs() > 1e-12 => {
                    let scale = ((d - onset) / (last.d - onset)).clamp(0.1, 10.0);
                    let scaled: Vec<f64> =
                        last.state.to_flat().iter().map(|x| x * scale).collect();
                    FieldState::from_flat(&scaled, nf)
                }
                _ => last.state.clone(),
            },
            _ => start.clone(),
        };
        let prev_amp = points.last().map(|p| p.amplitude);
        match newton_solve(model, grid, d, tau, &guess, &opts.newton) {
            Ok(mut state) => {
                if let Some(pa) = prev_amp {
                    if pa >= 1e-4 && max_abs(&state.u) < 0.1 * pa {
                        // Converged, but onto the trivial sheet: the tracked
                        // branch was lost. Retry from louder rescalings of
                        // the predictor before giving up.
                        let flat = guess.to_flat();
                        let mut recovered = None;
                        for boost in [2.0, 4.0] {
                            let attempt: Vec<f64> = flat.iter().map(|x| x * boost).collect();
                            let attempt = FieldState::from_flat(&attempt, nf);
                            if let Ok(s) = newton_solve(model, grid, d, tau, &attempt, &opts.newton)
                            {
                                if max_abs(&s.u) >= 0.1 * pa {
                                    recovered = Some(s);
                                    break;
                                }
                            }
                        }
                        state = recovered.ok_or(RdError::BranchLost {
                            d,
                            amplitude_before: pa,
                        })?;
                    }
                }
                prev_flat = points.last().map(|p| p.state.to_flat());
                points.push(make_point(model, grid, d, tau, state, opts.with_spectrum)?);
            }
            Err(err) => {
                if idx == 0 {
                    return Err(err);
                }
                let last = points.last().expect("idx > 0 implies a resolved point");
                return Err(RdError::FoldDetected {
                    d,
                    last_good_d: last.d,
                    index: idx,
                    min_sv: last.min_sv,
                });
            }
        }
    }
    Ok(points)
}

/// Amplitude-parametrized continuation: fix `u` at the center node to each
/// requested amplitude and solve for the state and the diffusion jointly
/// through a bordered dense system. This walks straight through folds where
/// natural continuation stalls.
pub fn continue_branch_amplitude(
    model: &ModelSpec,
    grid: &Grid1D,
    tau: f64,
    order: KernelOrder,
    s_values: &[f64],
    d_guess: f64,
    mode: &EigenPair,
    opts: &BranchOptions,
) -> Result<Vec<BranchPoint>> {
    validate_problem(grid, d_guess, tau)?;
    if s_values.is_empty() {
        return Err(RdError::InvalidParameter(
            "amplitude continuation needs a nonempty amplitude grid".into(),
        ));
    }
    let n = grid.n_interior();
    let nf = field_count(order);
    let dim = nf * n + 1;
    let center = (n - 1) / 2;
    let center_col = nf * center;
    let h = grid.spacing();
    let h2 = h * h;
    let phi_center = mode.vector[center];

    let mut points: Vec<BranchPoint> = Vec::with_capacity(s_values.len());
    // Extended unknown vector: interleaved fields then the diffusion value.
    let mut y = DVector::<f64>::zeros(dim);

    for (idx, &s) in s_values.iter().enumerate() {
        if !(s.is_finite() && s > 0.0) {
            return Err(RdError::InvalidParameter(format!(
                "amplitude grid entries must be positive, got {s}"
            )));
        }
        match idx {
            0 => {
                let seed = mode_seed(model, tau, d_guess, order, mode, s / phi_center);
                let flat = seed.to_flat();
                for (i, x) in flat.iter().enumerate() {
                    y[i] = *x;
                }
                y[dim - 1] = d_guess;
            }
            1 => {
                // Reuse the previous solution, nudging only the constraint.
            }
            _ => {
                let last = points[idx - 1].state.to_flat();
                let older = points[idx - 2].state.to_flat();
                let span = s_values[idx - 1] - s_values[idx - 2];
                let ratio = if span.abs() > 0.0 {
                    (s - s_values[idx - 1]) / span
                } else {
                    1.0
                };
                for i in 0..dim - 1 {
                    y[i] = last[i] + ratio * (last[i] - older[i]);
                }
                y[dim - 1] = points[idx - 1].d + ratio * (points[idx - 1].d - points[idx - 2].d);
            }
        }

        // Damped Newton on the bordered system.
        let mut res = DVector::<f64>::zeros(dim);
        let mut flat = vec![0.0; dim - 1];
        let eval = |y: &DVector<f64>, flat: &mut Vec<f64>, res: &mut DVector<f64>| {
            for i in 0..dim - 1 {
                flat[i] = y[i];
            }
            let d = y[dim - 1];
            let mut out = vec![0.0; dim - 1];
            residual_into(model, d / h2, tau, order, flat, &mut out);
            for i in 0..dim - 1 {
                res[i] = out[i];
            }
            res[dim - 1] = y[center_col] - s;
        };
        eval(&y, &mut flat, &mut res);
        let mut norm = res.amax();
        let mut converged = norm <= opts.newton.residual_tol;
        for _ in 0..opts.newton.max_iter {
            if converged {
                break;
            }
            let d = y[dim - 1];
            if !(d.is_finite() && d > 0.0) {
                return Err(RdError::SeedingFailed {
                    d,
                    reason: "amplitude continuation wandered to a nonpositive diffusion".into(),
                });
            }
            let state = FieldState::from_flat(&flat, nf);
            let jac_inner = dense_jacobian(model, grid, d, tau, &state)?;
            let mut jac = DMatrix::<f64>::zeros(dim, dim);
            jac.view_mut((0, 0), (dim - 1, dim - 1)).copy_from(&jac_inner);
            // d-column: derivative of the diffusive term.
            for i in 0..n {
                for f in 0..nf {
                    let xm = if i > 0 { flat[nf * (i - 1) + f] } else { 0.0 };
                    let xp = if i + 1 < n { flat[nf * (i + 1) + f] } else { 0.0 };
                    jac[(nf * i + f, dim - 1)] = (xm - 2.0 * flat[nf * i + f] + xp) / h2;
                }
            }
            jac[(dim - 1, center_col)] = 1.0;
            let lu = jac.lu();
            let step = lu.solve(&(-&res)).ok_or(RdError::SingularPivot {
                pivot: 0.0,
                row: dim - 1,
            })?;
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..=opts.newton.max_halvings {
                let trial = &y + &step * t;
                eval(&trial, &mut flat, &mut res);
                let trial_norm = res.amax();
                if trial_norm.is_finite() && trial_norm < norm {
                    y = trial;
                    norm = trial_norm;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return Err(RdError::NewtonStalled {
                    residual: norm,
                    iterations: opts.newton.max_iter,
                });
            }
            converged = norm <= opts.newton.residual_tol;
        }
        if !converged {
            return Err(RdError::NewtonStalled {
                residual: norm,
                iterations: opts.newton.max_iter,
            });
        }
        for i in 0..dim - 1 {
            flat[i] = y[i];
        }
        let state = FieldState::from_flat(&flat, nf);
        let min_entry = state.min_entry();
        if min_entry < NEGATIVE_FLOOR {
            return Err(RdError::NegativeState { min_entry });
        }
        let d = y[dim - 1];
        points.push(make_point(model, grid, d, tau, state, opts.with_spectrum)?);
    }
    Ok(points)
}

/// Outcome of a randomized multi-start steady-state search.
#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    /// Distinct positive steady states, in order of first discovery.
    pub positive: Vec<FieldState>,
    pub zero_hits: usize,
    pub failures: usize,
    pub attempts: usize,
}

/// Launch damped Newton from randomized mode-shaped starts and bucket the
/// distinct limits. Start `i` draws from stream `i` of a counter-based
/// generator, so the outcome is a function of the seed alone, independent of
/// the number of worker threads.
pub fn uniqueness_probe(
    model: &ModelSpec,
    grid: &Grid1D,
    d: f64,
    tau: f64,
    order: KernelOrder,
    mode: &EigenPair,
    n_starts: usize,
    amp_range: (f64, f64),
    seed: u64,
    threads: Option<usize>,
) -> Result<ProbeOutcome> {
    validate_problem(grid, d, tau)?;
    if n_starts == 0 {
        return Err(RdError::InvalidParameter(
            "uniqueness probe needs at least one start".into(),
        ));
    }
    let (lo, hi) = amp_range;
    if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
        return Err(RdError::InvalidParameter(format!(
            "amplitude range must satisfy 0 < lo < hi, got ({lo}, {hi})"
        )));
    }
    let workers = effective_threads(threads).min(n_starts).max(1);
    let opts = NewtonOptions::default();

    enum StartOutcome {
        Zero,
        Positive(FieldState),
        Failed,
    }

    let run_start = |i: usize| -> StartOutcome {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let amp = rng.gen_range(lo..hi);
        let mut start = mode_seed(model, tau, d, order, mode, amp);
        for x in start.u.iter_mut() {
            let noise: f64 = rng.gen_range(-1.0..1.0);
            *x = (*x * (1.0 + 0.2 * noise)).max(0.0);
        }
        match newton_solve(model, grid, d, tau, &start, &opts) {
            Ok(state) => {
                // A converged trivial root carries noise on the order of the
                // residual tolerance over the smallest singular value, which
                // near an onset (min_sv ~ 1e-3) reaches ~1e-7; classify well
                // above that so noise is never reported as a positive state.
                if max_abs(&state.u) < 1e-6 {
                    StartOutcome::Zero
                } else {
                    StartOutcome::Positive(state)
                }
            }
            Err(_) => StartOutcome::Failed,
        }
    };

    let mut outcomes: Vec<Option<StartOutcome>> = (0..n_starts).map(|_| None).collect();
    if workers <= 1 {
        for (i, slot) in outcomes.iter_mut().enumerate() {
            *slot = Some(run_start(i));
        }
    } else {
        let results = std::sync::Mutex::new(Vec::<(usize, StartOutcome)>::with_capacity(n_starts));
        std::thread::scope(|scope| {
            for t in 0..workers {
                let results = &results;
                let run_start = &run_start;
                scope.spawn(move || {
                    let mut local = Vec::new();
                    let mut i = t;
                    while i < n_starts {
                        local.push((i, run_start(i)));
                        i += workers;
                    }
                    results.lock().expect("probe worker poisoned").extend(local);
                });
            }
        });
        for (i, out) in results.into_inner().expect("probe results poisoned") {
            outcomes[i] = Some(out);
        }
    }

    let mut probe = ProbeOutcome {
        positive: Vec::new(),
        zero_hits: 0,
        failures: 0,
        attempts: n_starts,
    };
    for out in outcomes.into_iter().map(|o| o.expect("all starts ran")) {
        match out {
            StartOutcome::Zero => probe.zero_hits += 1,
            StartOutcome::Failed => probe.failures += 1,
            StartOutcome::Positive(state) => {
                let known = probe.positive.iter().any(|s| s.distance(&state) < 1e-6);
                if !known {
                    probe.positive.push(state);
                }
            }
        }
    }
    Ok(probe)
}

fn effective_threads(explicit: Option<usize>) -> usize {
    if let Some(t) = explicit {
        return t.max(1);
    }
    if let Ok(var) = std::env::var("RDTOOL_THREADS") {
        if let Ok(t) = var.trim().parse::<usize>() {
            return t.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|z| z.get())
        .unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bifurcation::{bif_summary, PrincipalMode};
    use crate::spectral::{principal_eigenpair, solve_shifted};

    fn logistic() -> ModelSpec {
        ModelSpec::logistic(1.0, 0.5, 0.4).unwrap()
    }

    fn nicholson() -> ModelSpec {
        ModelSpec::nicholson(0.8, 1.0, 0.6).unwrap()
    }

    fn setup(n: usize) -> (Grid1D, EigenPair) {
        let grid = Grid1D::new(std::f64::consts::PI, n).unwrap();
        let pair = principal_eigenpair(&grid).unwrap();
        (grid, pair)
    }

    #[test]
    fn zero_state_is_an_exact_fixed_point() {
        let (grid, _) = setup(24);
        for order in [KernelOrder::Weak, KernelOrder::Strong] {
            let zero = FieldState::zeros(24, order);
            let sol = newton_solve(&logistic(), &grid, 0.7, 0.5, &zero, &NewtonOptions::default())
                .unwrap();
            assert_eq!(sol.max_norm(), 0.0);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (grid, pair) = setup(12);
        let cases: [(ModelSpec, KernelOrder); 2] = [
            (logistic(), KernelOrder::Weak),
            (nicholson(), KernelOrder::Strong),
        ];
        for (model, order) in cases {
            let d = 0.3;
            let tau = 0.5;
            let mut state = mode_seed(&model, tau, d, order, &pair, 0.4);
            // Roughen the state so no special structure hides defects.
            for (i, x) in state.u.iter_mut().enumerate() {
                *x += 0.05 * ((i % 3) as f64 - 1.0);
                *x = x.max(0.01);
            }
            let jac = dense_jacobian(&model, &grid, d, tau, &state).unwrap();
            let base = state.to_flat();
            let nf = field_count(order);
            let dim = base.len();
            let mut worst = 0.0f64;
            for col in 0..dim {
                let step = 1e-6 * base[col].abs().max(1.0);
                let mut xp = base.clone();
                let mut xm = base.clone();
                xp[col] += step;
                xm[col] -= step;
                let sp = FieldState::from_flat(&xp, nf);
                let sm = FieldState::from_flat(&xm, nf);
                let rp = steady_residual(&model, &grid, d, tau, &sp).unwrap();
                let rm = steady_residual(&model, &grid, d, tau, &sm).unwrap();
                for row in 0..dim {
                    let fd = (rp[row] - rm[row]) / (2.0 * step);
                    let err = (fd - jac[(row, col)]).abs()
                        / jac[(row, col)].abs().max(1.0);
                    worst = worst.max(err);
                }
            }
            assert!(worst <= 1e-5, "{}: worst Jacobian error {worst}", model.name());
        }
    }

    #[test]
    fn positive_state_below_onset_is_bounded_and_stable() {
        let (grid, pair) = setup(64);
        let model = logistic();
        let mode = PrincipalMode::from_eigenpair(&grid, &pair);
        let summary = bif_summary(&model, 0.5, &mode).unwrap();
        let seed = seed_from_mode(&model, 0.5, 0.5, KernelOrder::Weak, &pair, &summary).unwrap();
        let sol = newton_solve(&model, &grid, 0.5, 0.5, &seed, &NewtonOptions::default()).unwrap();
        let res = steady_residual(&model, &grid, 0.5, 0.5, &sol).unwrap();
        assert!(max_abs(&res) <= 1e-10);
        assert!(sol.u.iter().all(|&x| x > 0.0), "interior positivity");
        assert!(max_abs(&sol.u) <= summary.u_bound + 1e-8);
        assert!(max_abs(&sol.v) <= summary.v_bound + 1e-8);
        let spec = linearized_spectrum(&model, &grid, 0.5, 0.5, &sol).unwrap();
        assert!(spec.is_stable(), "leading_re = {}", spec.leading_re);
        assert!(spec.min_sv > 1e-8, "min_sv = {}", spec.min_sv);
    }

    #[test]
    fn no_positive_state_above_the_threshold() {
        let (grid, pair) = setup(48);
        let model = logistic();
        // Threshold and bifurcation point coincide at kappa here; push past.
        for amp in [0.1, 0.5, 1.0, 1.5] {
            let seed = mode_seed(&model, 0.5, 1.05, KernelOrder::Weak, &pair, amp);
            match newton_solve(&model, &grid, 1.05, 0.5, &seed, &NewtonOptions::default()) {
                Ok(sol) => assert!(
                    max_abs(&sol.u) < 1e-8,
                    "found a positive state of amplitude {}",
                    max_abs(&sol.u)
                ),
                Err(_) => {}
            }
        }
    }

    #[test]
    fn extinction_stability_flips_across_the_critical_diffusion() {
        let (grid, pair) = setup(64);
        let model = logistic();
        let mode = PrincipalMode::from_eigenpair(&grid, &pair);
        let summary = bif_summary(&model, 0.5, &mode).unwrap();
        let zero = FieldState::zeros(64, KernelOrder::Weak);
        let below = linearized_spectrum(&model, &grid, summary.d_star - 1e-3, 0.5, &zero).unwrap();
        let above = linearized_spectrum(&model, &grid, summary.d_star + 1e-3, 0.5, &zero).unwrap();
        assert!(below.leading_re > 0.0, "unstable side: {}", below.leading_re);
        assert!(above.leading_re < 0.0, "stable side: {}", above.leading_re);
    }

    #[test]
    fn branch_amplitude_tracks_the_local_slope() {
        let (grid, pair) = setup(64);
        let model = logistic();
        let mode = PrincipalMode::from_eigenpair(&grid, &pair);
        let summary = bif_summary(&model, 0.5, &mode).unwrap();
        let slope = 1.0 / summary.d_prime0.abs();
        // Five points marching toward the bifurcation point from below.
        let d_values: Vec<f64> = (1..=5).map(|i| summary.d_star * (1.0 - 0.012 * i as f64)).collect();
        let start = seed_from_mode(&model, 0.5, d_values[0], KernelOrder::Weak, &pair, &summary)
            .unwrap();
        let points = continue_branch(&model, &grid, 0.5, &d_values, &start, &BranchOptions::default())
            .unwrap();
        for p in &points {
            assert!(p.leading_re < -STABILITY_TOL, "near-onset stability at d = {}", p.d);
            assert!(p.min_sv > 1e-8);
            let predicted = slope * (summary.d_star - p.d);
            assert!(
                (p.amplitude - predicted).abs() <= 0.25 * predicted,
                "d = {}: amplitude {} vs local prediction {}",
                p.d,
                p.amplitude,
                predicted
            );
        }
        // Amplitude grows as the diffusion falls.
        for w in points.windows(2) {
            assert!(w[1].amplitude > w[0].amplitude);
        }
    }

    #[test]
    fn long_march_with_onset_hint_stays_on_the_positive_branch() {
        let (grid, pair) = setup(64);
        let model = logistic();
        let mode = PrincipalMode::from_eigenpair(&grid, &pair);
        let summary = bif_summary(&model, 0.5, &mode).unwrap();
        // Thirty points from just below the onset down to strong interaction.
        // Without the onset hint the flat second-point guess undershoots the
        // doubling amplitude and the march slides onto the extinction state.
        let d_values: Vec<f64> = (0..30)
            .map(|i| summary.d_star * (0.995 - 0.395 * i as f64 / 29.0))
            .collect();
        let start =
            seed_from_mode(&model, 0.5, d_values[0], KernelOrder::Weak, &pair, &summary).unwrap();
        let opts = BranchOptions {
            onset_hint: Some(summary.d_star),
            ..Default::default()
        };
        let points = continue_branch(&model, &grid, 0.5, &d_values, &start, &opts).unwrap();
        assert_eq!(points.len(), 30);
        assert!(points[0].amplitude > 1e-4, "seed resolved the trivial state");
        for w in points.windows(2) {
            assert!(
                w[1].amplitude > w[0].amplitude,
                "amplitude must grow as diffusion falls: {} then {} at d = {}",
                w[0].amplitude,
                w[1].amplitude,
                w[1].d
            );
        }
        for p in &points {
            assert!(p.min_sv > 1e-8, "near-singular point at d = {}", p.d);
            assert!(p.leading_re < 0.0, "branch stability at d = {}", p.d);
        }
    }

    #[test]
    fn strong_kernel_state_satisfies_the_smoothing_identities() {
        let (grid, pair) = setup(48);
        let model = nicholson();
        let mode = PrincipalMode::from_eigenpair(&grid, &pair);
        let summary = bif_summary(&model, 0.5, &mode).unwrap();
        let seed = seed_from_mode(&model, 0.5, 0.1, KernelOrder::Strong, &pair, &summary).unwrap();
        let sol = newton_solve(&model, &grid, 0.1, 0.5, &seed, &NewtonOptions::default()).unwrap();
        let w = sol.w.as_ref().unwrap();

        // w solves (I + tau d A) w = H(u), v the same equation driven by w.
        let hu = model.eval_h(&sol.u).unwrap();
        let w_expect = solve_shifted(&grid, 0.5 * 0.1, 1.0, &hu).unwrap();
        let v_expect = solve_shifted(&grid, 0.5 * 0.1, 1.0, w).unwrap();
        let dw = w
            .iter()
            .zip(&w_expect)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let dv = sol
            .v
            .iter()
            .zip(&v_expect)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(dw <= 1e-8, "w identity residual {dw}");
        assert!(dv <= 1e-8, "v identity residual {dv}");
        // The two smoothing stages genuinely differ away from onset.
        let gap = w
            .iter()
            .zip(&sol.v)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(gap > 1e-4, "stages should not collapse, gap {gap}");
    }

    #[test]
    fn fold_in_the_cooperative_model_is_reported() {
        let (grid, pair) = setup(48);
        let model = ModelSpec::logistic_cubic(1.0, 1.5, 0.3, 1.0).unwrap();
        let mode = PrincipalMode::from_eigenpair(&grid, &pair);
        let summary = bif_summary(&model, 0.5, &mode).unwrap();
        assert!(summary.d_prime0 > 0.0, "expected a subcritical branch");

        // March the branch amplitude up and read off the fold in d.
        let s_values: Vec<f64> = (1..=30).map(|i| 0.05 * i as f64).collect();
        let points = continue_branch_amplitude(
            &model,
            &grid,
            0.5,
            KernelOrder::Weak,
            &s_values,
            summary.d_star * 1.0005,
            &pair,
            &BranchOptions {
                with_spectrum: false,
                ..Default::default()
            },
        )
        .unwrap();
        let d_max = points.iter().map(|p| p.d).fold(f64::NEG_INFINITY, f64::max);
        assert!(
            d_max > summary.d_star + 1e-3,
            "no overhang: d_max = {d_max}, d_star = {}",
            summary.d_star
        );

        // Two distinct positive states coexist inside the overhang.
        let d_test = 0.5 * (summary.d_star + d_max);
        let mut coexisting: Vec<FieldState> = Vec::new();
        for pt in &points {
            if coexisting.len() == 2 {
                break;
            }
            if (pt.d - d_test).abs() < 0.25 * (d_max - summary.d_star) {
                if let Ok(sol) =
                    newton_solve(&model, &grid, d_test, 0.5, &pt.state, &NewtonOptions::default())
                {
                    if max_abs(&sol.u) > 1e-6
                        && !coexisting.iter().any(|s| s.distance(&sol) < 1e-3)
                    {
                        coexisting.push(sol);
                    }
                }
            }
        }
        assert_eq!(
            coexisting.len(),
            2,
            "expected two coexisting positive states at d = {d_test}"
        );

        // Natural continuation into the fold cannot carry the positive branch
        // past it: either the sweep reports the fold, or any points resolved
        // beyond the overhang have dropped to the extinction state.
        let start = points[0].state.clone();
        let d_values: Vec<f64> = (0..150).map(|i| points[0].d + 0.004 * i as f64).collect();
        let tight = BranchOptions {
            newton: NewtonOptions {
                max_iter: 8,
                ..Default::default()
            },
            with_spectrum: false,
            ..Default::default()
        };
        match continue_branch(&model, &grid, 0.5, &d_values, &start, &tight) {
            Err(RdError::FoldDetected { d, last_good_d, .. }) => {
                assert!(last_good_d < d);
                assert!(d <= d_max + 0.05, "fold at {d}, overhang ends near {d_max}");
            }
            Err(RdError::BranchLost { d, .. }) => {
                // Equally valid: past the fold the solver can only land on
                // the trivial sheet, which the march reports as a lost branch.
                assert!(d <= d_max + 0.05, "branch lost at {d}, overhang ends near {d_max}");
            }
            Err(other) => panic!("expected a fold report, got {other}"),
            Ok(pts) => {
                let past: Vec<_> = pts.iter().filter(|p| p.d > d_max + 0.01).collect();
                assert!(!past.is_empty(), "sweep never reached past the overhang");
                for p in past {
                    assert!(
                        p.amplitude < 1e-6,
                        "positive branch crossed its own fold at d = {}",
                        p.d
                    );
                }
            }
        }
    }

    #[test]
    fn dissipative_cubic_branch_stays_below_onset() {
        let (grid, pair) = setup(48);
        let model = ModelSpec::logistic_cubic(1.0, 0.1, 2.0, 1.0).unwrap();
        let mode = PrincipalMode::from_eigenpair(&grid, &pair);
        let summary = bif_summary(&model, 0.5, &mode).unwrap();
        assert!(summary.d_prime0 < 0.0, "expected a supercritical branch");
        let s_values: Vec<f64> = (1..=12).map(|i| 0.02 * i as f64).collect();
        let points = continue_branch_amplitude(
            &model,
            &grid,
            0.5,
            KernelOrder::Weak,
            &s_values,
            summary.d_star * 0.999,
            &pair,
            &BranchOptions {
                with_spectrum: false,
                ..Default::default()
            },
        )
        .unwrap();
        for p in &points {
            assert!(
                p.d < summary.d_star,
                "supercritical branch leaked above onset: d = {}, d_star = {}",
                p.d,
                summary.d_star
            );
        }
    }

    #[test]
    fn probe_sees_one_attractor_below_and_none_above() {
        let (grid, pair) = setup(32);
        let model = logistic();
        let below = uniqueness_probe(
            &model,
            &grid,
            0.5,
            0.5,
            KernelOrder::Weak,
            &pair,
            12,
            (0.05, 1.8),
            42,
            Some(1),
        )
        .unwrap();
        assert_eq!(below.positive.len(), 1, "expected a unique positive state");

        let above = uniqueness_probe(
            &model,
            &grid,
            1.05,
            0.5,
            KernelOrder::Weak,
            &pair,
            12,
            (0.05, 1.8),
            42,
            Some(1),
        )
        .unwrap();
        assert!(above.positive.is_empty(), "no positive states past onset");
        assert!(above.zero_hits > 0);
    }

    #[test]
    fn probe_outcome_is_independent_of_worker_count() {
        let (grid, pair) = setup(24);
        let model = nicholson();
        let run = |threads: usize| {
            uniqueness_probe(
                &model,
                &grid,
                0.1,
                0.5,
                KernelOrder::Strong,
                &pair,
                8,
                (0.05, 1.2),
                7,
                Some(threads),
            )
            .unwrap()
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one.positive.len(), four.positive.len());
        assert_eq!(one.zero_hits, four.zero_hits);
        assert_eq!(one.failures, four.failures);
        for (a, b) in one.positive.iter().zip(&four.positive) {
            assert_eq!(a.u, b.u, "probe must be bitwise deterministic");
        }
    }

    #[test]
    fn mismatched_state_shapes_are_rejected() {
        let (grid, _) = setup(16);
        let zero = FieldState::zeros(10, KernelOrder::Weak);
        assert!(matches!(
            newton_solve(&logistic(), &grid, 0.5, 0.5, &zero, &NewtonOptions::default()),
            Err(RdError::InvalidGrid(_))
        ));
        assert!(matches!(
            steady_residual(&logistic(), &grid, 0.5, 0.5, &zero),
            Err(RdError::InvalidGrid(_))
        ));
    }
}
