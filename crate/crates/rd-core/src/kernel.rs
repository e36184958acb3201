//! Memory kernels, the diffusion semigroup in its sine-mode expansion, and
//! quadrature of kernel-weighted history.
//!
//! The nonlocal feedback acting on a field `u` is
//!
//! ```text
//! v(x, t) = int_{-inf}^{t} g(t - s) [ e^{(t-s) d Lap} H(u(., s)) ](x) ds,
//! ```
//!
//! the time convolution of `H(u)` against a memory kernel `g`, propagated in
//! space by the Dirichlet heat semigroup. This module evaluates that integral
//! directly (trapezoid in time, sine modes in space) and computes the initial
//! fields the equivalent local systems need:
//!
//! * weak kernel: `v(., 0)`;
//! * strong kernel: `v(., 0)` and the intermediate relaxation field `w(., 0)`.
//!
//! Everything here deliberately avoids the local relaxation equations for
//! `v`; the quadrature path stays an independent cross-check of them.

use std::collections::VecDeque;

use crate::error::{RdError, Result};
use crate::grid::Grid1D;

/// Exponent at which a damped quadrature term is dropped (`e^{-50} ~ 2e-22`).
const DECAY_CUTOFF: f64 = 50.0;

/// Memory horizon in units of `tau`; the kernel mass beyond `40 tau` is below
/// `2e-16` for both kernels.
const HORIZON_TAUS: f64 = 40.0;

/// Memory kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelOrder {
    /// `g(t) = e^{-t/tau} / tau`: decaying memory, mean lag `tau`.
    Weak,
    /// `g(t) = t e^{-t/tau} / tau^2`: humped memory peaking at lag `tau`.
    Strong,
}

/// A memory kernel with its time scale.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    order: KernelOrder,
    tau: f64,
}

impl KernelSpec {
    pub fn new(order: KernelOrder, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(RdError::InvalidParameter(format!(
                "kernel time scale must be positive and finite, got {tau}"
            )));
        }
        Ok(Self { order, tau })
    }

    pub fn order(&self) -> KernelOrder {
        self.order
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Kernel density at lag `t >= 0`; negative lags are rejected.
    pub fn value(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(RdError::NegativeKernelTime { t });
        }
        let e = (-t / self.tau).exp();
        Ok(match self.order {
            KernelOrder::Weak => e / self.tau,
            KernelOrder::Strong => t * e / (self.tau * self.tau),
        })
    }

    /// Lookback horizon `40 tau` at which the kernel is truncated.
    pub fn horizon(&self) -> f64 {
        HORIZON_TAUS * self.tau
    }
}

/// Sine-mode expansion of the Dirichlet heat propagator on a [`Grid1D`].
///
/// Mode `m` (1-based) is the sampled eigenfunction `sqrt(2/L) sin(m pi x / L)`
/// carrying the interval eigenvalue `lambda_m = (m pi / L)^2`. The sampled
/// modes are exactly orthonormal under the `h`-weighted inner product, so
/// projection and synthesis are mutually inverse on the span.
pub struct GreenExpansion {
    grid: Grid1D,
    lambdas: Vec<f64>,
    modes: Vec<Vec<f64>>,
}

impl GreenExpansion {
    /// Expansion with the leading `n_modes` modes, `1 <= n_modes <= n_interior`.
    pub fn new(grid: &Grid1D, n_modes: usize) -> Result<Self> {
        let n = grid.n_interior();
        if n_modes == 0 || n_modes > n {
            return Err(RdError::InvalidParameter(format!(
                "mode count must lie in 1..={n}, got {n_modes}"
            )));
        }
        let l = grid.length();
        let norm = (2.0 / l).sqrt();
        let pi = std::f64::consts::PI;
        let mut lambdas = Vec::with_capacity(n_modes);
        let mut modes = Vec::with_capacity(n_modes);
        for m in 1..=n_modes {
            let k = m as f64 * pi / l;
            lambdas.push(k * k);
            modes.push(grid.sample(|x| norm * (k * x).sin()));
        }
        Ok(Self {
            grid: grid.clone(),
            lambdas,
            modes,
        })
    }

    /// Expansion with the complete discrete basis (`n_interior` modes).
    pub fn complete(grid: &Grid1D) -> Self {
        Self::new(grid, grid.n_interior()).expect("full basis always valid")
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn n_modes(&self) -> usize {
        self.lambdas.len()
    }

    /// Interval eigenvalue of mode `m_idx + 1`.
    pub fn eigenvalue(&self, m_idx: usize) -> f64 {
        self.lambdas[m_idx]
    }

    pub fn mode(&self, m_idx: usize) -> &[f64] {
        &self.modes[m_idx]
    }

    /// `h`-weighted mode coefficients of a field.
    pub fn project(&self, field: &[f64]) -> Vec<f64> {
        let h = self.grid.spacing();
        self.modes
            .iter()
            .map(|phi| h * phi.iter().zip(field).map(|(p, f)| p * f).sum::<f64>())
            .collect()
    }

    /// Field with the given mode coefficients.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.n_modes());
        let mut out = vec![0.0; self.grid.n_interior()];
        for (c, phi) in coeffs.iter().zip(&self.modes) {
            if *c == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(phi) {
                *o += c * p;
            }
        }
        out
    }

    /// Apply the heat propagator `e^{t d Lap}` to a field: each mode
    /// coefficient is damped by `e^{-d lambda_m t}`.
    pub fn propagate(&self, d: f64, t: f64, field: &[f64]) -> Result<Vec<f64>> {
        if !(d.is_finite() && d > 0.0) {
            return Err(RdError::InvalidParameter(format!(
                "diffusion coefficient must be positive, got {d}"
            )));
        }
        if !(t >= 0.0) {
            return Err(RdError::Domain(format!(
                "heat propagator needs nonnegative time, got {t}"
            )));
        }
        let mut coeffs = self.project(field);
        for (c, lam) in coeffs.iter_mut().zip(&self.lambdas) {
            let x = d * lam * t;
            *c *= if x > DECAY_CUTOFF { 0.0 } else { (-x).exp() };
        }
        Ok(self.synthesize(&coeffs))
    }
}

/// Apply the Dirichlet heat propagator; free-function form of
/// [`GreenExpansion::propagate`].
pub fn green_apply(exp: &GreenExpansion, d: f64, t: f64, field: &[f64]) -> Result<Vec<f64>> {
    exp.propagate(d, t, field)
}

/// Prescribed state on `t <= 0`.
///
/// `horizon` is the lookback window: for `s < -horizon` the history is
/// treated as identically zero.
pub struct HistoryFn {
    profile: HistoryProfile,
    horizon: f64,
}

enum HistoryProfile {
    /// `eta(x, s) = p(x)` for every `s <= 0`.
    Stationary(Box<dyn Fn(f64) -> f64 + Send + Sync>),
    /// General `eta(x, s)`.
    TimeVarying(Box<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl HistoryFn {
    pub fn stationary(profile: impl Fn(f64) -> f64 + Send + Sync + 'static, horizon: f64) -> Self {
        Self {
            profile: HistoryProfile::Stationary(Box::new(profile)),
            horizon,
        }
    }

    pub fn time_varying(
        eta: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        horizon: f64,
    ) -> Self {
        Self {
            profile: HistoryProfile::TimeVarying(Box::new(eta)),
            horizon,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn is_stationary(&self) -> bool {
        matches!(self.profile, HistoryProfile::Stationary(_))
    }

    /// Sample `eta(., s)` at the interior nodes; `s` must be `<= 0` and
    /// states older than the horizon are zero.
    pub fn sample_at(&self, grid: &Grid1D, s: f64) -> Vec<f64> {
        debug_assert!(s <= 0.0);
        if s < -self.horizon {
            return vec![0.0; grid.n_interior()];
        }
        match &self.profile {
            HistoryProfile::Stationary(p) => grid.sample(p),
            HistoryProfile::TimeVarying(f) => grid.sample(|x| f(x, s)),
        }
    }

    /// The field handed to the integrator at `t = 0`.
    pub fn initial_field(&self, grid: &Grid1D) -> Vec<f64> {
        self.sample_at(grid, 0.0)
    }
}

fn check_quadrature_step(dt: f64, tau: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(RdError::InvalidParameter(format!(
            "quadrature step must be positive, got {dt}"
        )));
    }
    if dt > tau / 4.0 {
        return Err(RdError::QuadratureStep { dt, tau });
    }
    Ok(())
}

/// Trapezoid weight on the lag lattice `0..=n_lags`.
fn lattice_weight(j: usize, n_lags: usize, dt: f64) -> f64 {
    if j == 0 || j == n_lags {
        0.5 * dt
    } else {
        dt
    }
}

/// Shared worker for the history-to-initial maps: per mode `m`,
/// `sum_j w_j weight(l_j) e^{-d lambda_m l_j} c_m(-l_j)` over the lag lattice.
/// `weight` is the kernel density that multiplies the history at lag `l`.
fn history_quadrature(
    exp: &GreenExpansion,
    d: f64,
    h: &dyn Fn(f64) -> f64,
    eta: &HistoryFn,
    dt: f64,
    lookback: f64,
    weight: &dyn Fn(f64) -> f64,
) -> Vec<f64> {
    let n_lags = (lookback / dt).ceil() as usize;
    let mut acc = vec![0.0; exp.n_modes()];
    if eta.is_stationary() {
        let field: Vec<f64> = eta
            .sample_at(exp.grid(), 0.0)
            .iter()
            .map(|&u| h(u))
            .collect();
        let coeffs = exp.project(&field);
        for j in 0..=n_lags {
            let lag = j as f64 * dt;
            // History switches off beyond its own horizon.
            if lag > eta.horizon() {
                break;
            }
            let w = lattice_weight(j, n_lags, dt) * weight(lag);
            for (m, a) in acc.iter_mut().enumerate() {
                let x = d * exp.eigenvalue(m) * lag;
                if x > DECAY_CUTOFF {
                    break;
                }
                *a += w * (-x).exp() * coeffs[m];
            }
        }
    } else {
        for j in 0..=n_lags {
            let lag = j as f64 * dt;
            if lag > eta.horizon() {
                break;
            }
            let field: Vec<f64> = eta
                .sample_at(exp.grid(), -lag)
                .iter()
                .map(|&u| h(u))
                .collect();
            let coeffs = exp.project(&field);
            let w = lattice_weight(j, n_lags, dt) * weight(lag);
            for (m, a) in acc.iter_mut().enumerate() {
                let x = d * exp.eigenvalue(m) * lag;
                if x > DECAY_CUTOFF {
                    break;
                }
                *a += w * (-x).exp() * coeffs[m];
            }
        }
    }
    acc
}

/// Initial feedback field `v(., 0)` for the weak-kernel local system:
/// the kernel-weighted, diffusion-propagated history of `H(eta)`.
///
/// `dt` is the trapezoid step (use the integrator's step); it must satisfy
/// `dt <= tau/4`.
pub fn history_to_initial_weak(
    exp: &GreenExpansion,
    d: f64,
    kernel: &KernelSpec,
    h: &dyn Fn(f64) -> f64,
    eta: &HistoryFn,
    dt: f64,
) -> Result<Vec<f64>> {
    if kernel.order() != KernelOrder::Weak {
        return Err(RdError::InvalidParameter(
            "weak-kernel initial map called with a strong kernel".into(),
        ));
    }
    check_quadrature_step(dt, kernel.tau())?;
    let lookback = kernel.horizon().max(eta.horizon());
    let tau = kernel.tau();
    let coeffs = history_quadrature(exp, d, h, eta, dt, lookback, &|lag: f64| {
        (-lag / tau).exp() / tau
    });
    Ok(exp.synthesize(&coeffs))
}

/// Initial fields `(v(., 0), w(., 0))` for the strong-kernel local system.
///
/// `v` weights the history by the strong kernel itself, `w` by the weak
/// kernel of the same time scale (the intermediate relaxation stage).
pub fn history_to_initial_strong(
    exp: &GreenExpansion,
    d: f64,
    kernel: &KernelSpec,
    h: &dyn Fn(f64) -> f64,
    eta: &HistoryFn,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if kernel.order() != KernelOrder::Strong {
        return Err(RdError::InvalidParameter(
            "strong-kernel initial map called with a weak kernel".into(),
        ));
    }
    check_quadrature_step(dt, kernel.tau())?;
    let lookback = kernel.horizon().max(eta.horizon());
    let tau = kernel.tau();
    let v_coeffs = history_quadrature(exp, d, h, eta, dt, lookback, &|lag: f64| {
        lag * (-lag / tau).exp() / (tau * tau)
    });
    let w_coeffs = history_quadrature(exp, d, h, eta, dt, lookback, &|lag: f64| {
        (-lag / tau).exp() / tau
    });
    Ok((exp.synthesize(&v_coeffs), exp.synthesize(&w_coeffs)))
}

/// A forward trajectory sampled on a uniform time lattice: `slices[j]` is the
/// field at `t = j * dt`.
pub struct SampledTrajectory<'a> {
    pub dt: f64,
    pub slices: &'a [Vec<f64>],
}

/// Evaluate the nonlocal feedback `v(., t)` by direct quadrature over the
/// trajectory (for `s` in `[0, t]`) spliced with the prescribed history (for
/// `s <= 0`).
///
/// `t` must sit on the trajectory's time lattice, and the lattice step must
/// satisfy the `dt <= tau/4` sampling bound. The combined coverage
/// `t + eta.horizon()` must reach the kernel lookback `max(40 tau,
/// eta.horizon())`, otherwise [`RdError::InsufficientHistory`] is returned.
pub fn nonlocal_convolution(
    exp: &GreenExpansion,
    d: f64,
    kernel: &KernelSpec,
    h: &dyn Fn(f64) -> f64,
    traj: &SampledTrajectory,
    eta: &HistoryFn,
    t: f64,
) -> Result<Vec<f64>> {
    check_quadrature_step(traj.dt, kernel.tau())?;
    let dt = traj.dt;
    let k = (t / dt).round() as i64;
    if k < 0 || (t - k as f64 * dt).abs() > 1e-9 * t.abs().max(1.0) {
        return Err(RdError::Domain(format!(
            "evaluation time {t} is off the trajectory lattice (step {dt})"
        )));
    }
    let k = k as usize;
    if k >= traj.slices.len() {
        return Err(RdError::Domain(format!(
            "trajectory holds {} slices, cannot evaluate at index {k}",
            traj.slices.len()
        )));
    }
    let lookback = kernel.horizon().max(eta.horizon());
    let have = t + eta.horizon();
    if have + 1e-12 < lookback {
        return Err(RdError::InsufficientHistory {
            have,
            need: lookback,
        });
    }

    let n_lags = (lookback / dt).ceil() as usize;
    let mut acc = vec![0.0; exp.n_modes()];

    // Trajectory side: lags j = 0..=min(k, n_lags).
    for j in 0..=k.min(n_lags) {
        let lag = j as f64 * dt;
        let g = kernel.value(lag)?;
        let field: Vec<f64> = traj.slices[k - j].iter().map(|&u| h(u)).collect();
        let coeffs = exp.project(&field);
        let w = lattice_weight(j, n_lags, dt) * g;
        accumulate_damped(&mut acc, &coeffs, exp, d, lag, w);
    }

    // History side: lags j = k+1..=n_lags reach states at s = t - lag <= 0.
    for j in (k + 1)..=n_lags {
        let lag = j as f64 * dt;
        let s = t - lag;
        if -s > eta.horizon() {
            break;
        }
        let g = kernel.value(lag)?;
        let field: Vec<f64> = eta.sample_at(exp.grid(), s).iter().map(|&u| h(u)).collect();
        let coeffs = exp.project(&field);
        let w = lattice_weight(j, n_lags, dt) * g;
        accumulate_damped(&mut acc, &coeffs, exp, d, lag, w);
    }

    Ok(exp.synthesize(&acc))
}

/// `acc_m += w e^{-d lambda_m lag} c_m`, truncated once the damping exceeds
/// the cutoff (eigenvalues ascend, so the tail is negligible).
fn accumulate_damped(
    acc: &mut [f64],
    coeffs: &[f64],
    exp: &GreenExpansion,
    d: f64,
    lag: f64,
    w: f64,
) {
    for (m, a) in acc.iter_mut().enumerate() {
        let x = d * exp.eigenvalue(m) * lag;
        if x > DECAY_CUTOFF {
            break;
        }
        *a += w * (-x).exp() * coeffs[m];
    }
}

/// Incremental form of [`nonlocal_convolution`] for use inside a forward
/// integration: the trajectory side is re-summed each step from a ring of
/// projected `H(u)` slices, while the history side is maintained as running
/// per-mode sums (stationary history) or re-summed from a precomputed
/// coefficient table (general history). Values agree with the standalone
/// routine to roundoff; the local relaxation equations are never consulted.
#[derive(Debug)]
pub(crate) struct FeedbackQuadrature {
    d: f64,
    kernel: KernelSpec,
    dt: f64,
    n_lags: usize,
    /// Projected `H(u)` slices; back is the newest.
    ring: VecDeque<Vec<f64>>,
    /// Time index of the newest slice; -1 before the first push.
    step_index: i64,
    tail: TailSide,
}

#[derive(Debug)]
enum TailSide {
    /// Per-mode running sums `sum_{j > k} w_j g(l_j) e^{-d lambda_m l_j}`
    /// times the fixed history coefficients.
    Stationary { sums: Vec<f64>, coeffs: Vec<f64> },
    /// `table[i]` holds the `H(eta(., -i dt))` mode coefficients.
    Tabulated { table: Vec<Vec<f64>> },
}

impl FeedbackQuadrature {
    pub(crate) fn new(
        exp: &GreenExpansion,
        d: f64,
        kernel: &KernelSpec,
        h: &dyn Fn(f64) -> f64,
        eta: &HistoryFn,
        dt: f64,
        cap_entries: usize,
    ) -> Result<Self> {
        check_quadrature_step(dt, kernel.tau())?;
        let lookback = kernel.horizon().max(eta.horizon());
        // A forward run starts at t = 0, where the quadrature sees only the
        // prescribed history; it must span the whole kernel lookback.
        if eta.horizon() + 1e-12 < lookback {
            return Err(RdError::InsufficientHistory {
                have: eta.horizon(),
                need: lookback,
            });
        }
        let n_lags = (lookback / dt).ceil() as usize;
        let modes = exp.n_modes();
        let ring_entries = (n_lags + 1) * modes;
        let table_entries = if eta.is_stationary() {
            0
        } else {
            (n_lags + 1) * modes
        };
        if ring_entries + table_entries > cap_entries {
            return Err(RdError::HistoryBudget {
                needed: ring_entries + table_entries,
                cap: cap_entries,
            });
        }

        let tail = if eta.is_stationary() {
            let field: Vec<f64> = eta
                .sample_at(exp.grid(), 0.0)
                .iter()
                .map(|&u| h(u))
                .collect();
            let coeffs = exp.project(&field);
            // Tail initially covers every lag node j >= 1 (k = 0 after the
            // first push); include the history switch-off at its horizon.
            let mut sums = vec![0.0; modes];
            for j in 1..=n_lags {
                let lag = j as f64 * dt;
                if lag > eta.horizon() {
                    break;
                }
                let w = lattice_weight(j, n_lags, dt) * kernel.value(lag)?;
                for (m, sm) in sums.iter_mut().enumerate() {
                    let x = d * exp.eigenvalue(m) * lag;
                    if x > DECAY_CUTOFF {
                        break;
                    }
                    *sm += w * (-x).exp();
                }
            }
            TailSide::Stationary { sums, coeffs }
        } else {
            let table = (0..=n_lags)
                .map(|i| {
                    let s = -(i as f64) * dt;
                    let field: Vec<f64> =
                        eta.sample_at(exp.grid(), s).iter().map(|&u| h(u)).collect();
                    exp.project(&field)
                })
                .collect();
            TailSide::Tabulated { table }
        };

        Ok(Self {
            d,
            kernel: kernel.clone(),
            dt,
            n_lags,
            ring: VecDeque::with_capacity(n_lags + 2),
            step_index: -1,
            tail,
        })
    }

    /// Register the field at the next time-lattice point (`H` already applied
    /// pointwise by the caller is not expected; pass raw `u` plus `h`).
    pub(crate) fn push(
        &mut self,
        exp: &GreenExpansion,
        h: &dyn Fn(f64) -> f64,
        u: &[f64],
    ) -> Result<()> {
        let field: Vec<f64> = u.iter().map(|&x| h(x)).collect();
        self.ring.push_back(exp.project(&field));
        if self.ring.len() > self.n_lags + 1 {
            self.ring.pop_front();
        }
        self.step_index += 1;
        // The lag node j = k leaves the history side when time reaches k dt.
        let k = self.step_index as usize;
        if k >= 1 && k <= self.n_lags {
            if let TailSide::Stationary { sums, .. } = &mut self.tail {
                let lag = k as f64 * self.dt;
                let w = lattice_weight(k, self.n_lags, self.dt) * self.kernel.value(lag)?;
                for (m, sm) in sums.iter_mut().enumerate() {
                    let x = self.d * exp.eigenvalue(m) * lag;
                    if x > DECAY_CUTOFF {
                        break;
                    }
                    *sm -= w * (-x).exp();
                }
            }
        }
        Ok(())
    }

    /// Feedback field at the newest pushed time.
    pub(crate) fn eval(&self, exp: &GreenExpansion) -> Result<Vec<f64>> {
        debug_assert!(self.step_index >= 0, "eval before first push");
        let k = self.step_index as usize;
        let mut acc = vec![0.0; exp.n_modes()];

        // Trajectory side.
        let reach = k.min(self.n_lags).min(self.ring.len() - 1);
        for j in 0..=reach {
            let lag = j as f64 * self.dt;
            let g = self.kernel.value(lag)?;
            let w = lattice_weight(j, self.n_lags, self.dt) * g;
            let coeffs = &self.ring[self.ring.len() - 1 - j];
            for (m, a) in acc.iter_mut().enumerate() {
                let x = self.d * exp.eigenvalue(m) * lag;
                if x > DECAY_CUTOFF {
                    break;
                }
                *a += w * (-x).exp() * coeffs[m];
            }
        }

        // History side.
        match &self.tail {
            TailSide::Stationary { sums, coeffs } => {
                for (m, a) in acc.iter_mut().enumerate() {
                    *a += sums[m] * coeffs[m];
                }
            }
            TailSide::Tabulated { table } => {
                for j in (k + 1)..=self.n_lags {
                    let lag = j as f64 * self.dt;
                    let g = self.kernel.value(lag)?;
                    let w = lattice_weight(j, self.n_lags, self.dt) * g;
                    let coeffs = &table[j - k];
                    for (m, a) in acc.iter_mut().enumerate() {
                        let x = self.d * exp.eigenvalue(m) * lag;
                        if x > DECAY_CUTOFF {
                            break;
                        }
                        *a += w * (-x).exp() * coeffs[m];
                    }
                }
            }
        }

        Ok(exp.synthesize(&acc))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pi_grid(n: usize) -> Grid1D {
        Grid1D::new(PI, n).unwrap()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn weak_kernel_starts_at_inverse_tau() {
        let k = KernelSpec::new(KernelOrder::Weak, 0.5).unwrap();
        assert_eq!(k.value(0.0).unwrap(), 2.0);
    }

    #[test]
    fn strong_kernel_vanishes_at_zero_and_peaks_at_tau() {
        let k = KernelSpec::new(KernelOrder::Strong, 0.7).unwrap();
        assert_eq!(k.value(0.0).unwrap(), 0.0);
        let peak = k.value(0.7).unwrap();
        assert!(k.value(0.5).unwrap() < peak);
        assert!(k.value(0.9).unwrap() < peak);
    }

    #[test]
    fn kernels_reject_negative_lag() {
        let k = KernelSpec::new(KernelOrder::Weak, 1.0).unwrap();
        assert!(matches!(
            k.value(-0.1),
            Err(RdError::NegativeKernelTime { .. })
        ));
    }

    #[test]
    fn kernel_mass_is_one() {
        // Fine trapezoid over [0, 40 tau].
        for order in [KernelOrder::Weak, KernelOrder::Strong] {
            for tau in [0.3, 1.0, 2.0] {
                let k = KernelSpec::new(order, tau).unwrap();
                let step = 1e-4 * tau;
                let n = (k.horizon() / step) as usize;
                let mut mass = 0.0;
                for j in 0..=n {
                    let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                    mass += w * step * k.value(j as f64 * step).unwrap();
                }
                assert!(
                    (mass - 1.0).abs() < 1e-8,
                    "{order:?} tau={tau}: mass = {mass}"
                );
            }
        }
    }

    #[test]
    fn modes_are_h_orthonormal() {
        let g = pi_grid(64);
        let exp = GreenExpansion::complete(&g);
        let h = g.spacing();
        for a in 0..exp.n_modes() {
            for b in a..exp.n_modes() {
                let dot: f64 = h * exp
                    .mode(a)
                    .iter()
                    .zip(exp.mode(b))
                    .map(|(x, y)| x * y)
                    .sum::<f64>();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-10, "({a},{b}): {dot}");
            }
        }
    }

    #[test]
    fn propagator_at_time_zero_reproduces_any_field() {
        use rand::{Rng, SeedableRng};
        let g = pi_grid(48);
        let exp = GreenExpansion::complete(&g);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let field: Vec<f64> = (0..48).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let back = exp.propagate(0.8, 0.0, &field).unwrap();
        assert!(max_abs_diff(&field, &back) < 1e-8);
    }

    #[test]
    fn propagator_damps_single_mode_exactly() {
        let g = pi_grid(40);
        let exp = GreenExpansion::complete(&g);
        let phi: Vec<f64> = exp.mode(2).to_vec();
        let d = 0.6;
        let t = 0.9;
        let out = exp.propagate(d, t, &phi).unwrap();
        let factor = (-d * exp.eigenvalue(2) * t).exp();
        for (o, p) in out.iter().zip(&phi) {
            assert!((o - factor * p).abs() < 1e-12);
        }
    }

    #[test]
    fn propagator_damps_two_mode_sum_at_interval_rates() {
        // On L = pi with d = 1 the modes sin x and sin 2x decay by e^{-t} and
        // e^{-4t}.
        let g = pi_grid(200);
        let exp = GreenExpansion::complete(&g);
        let field = g.sample(|x| x.sin() + (2.0 * x).sin());
        let out = exp.propagate(1.0, 1.0, &field).unwrap();
        let c = exp.project(&out);
        let c0 = exp.project(&field);
        assert!((c[0] / c0[0] - (-1.0f64).exp()).abs() < 1e-8);
        assert!((c[1] / c0[1] - (-4.0f64).exp()).abs() < 1e-8);
        for m in 2..exp.n_modes() {
            assert!(c[m].abs() < 1e-8, "mode {m} contaminated: {}", c[m]);
        }
    }

    #[test]
    fn propagator_obeys_the_semigroup_law() {
        use rand::{Rng, SeedableRng};
        let g = pi_grid(56);
        let exp = GreenExpansion::complete(&g);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let field: Vec<f64> = (0..56).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t1 = rng.gen_range(0.01..0.8);
            let t2 = rng.gen_range(0.01..0.8);
            let once = exp.propagate(0.7, t1 + t2, &field).unwrap();
            let twice = exp
                .propagate(0.7, t1, &exp.propagate(0.7, t2, &field).unwrap())
                .unwrap();
            assert!(max_abs_diff(&once, &twice) < 1e-9);
        }
    }

    #[test]
    fn weak_initial_map_of_zero_history_is_zero() {
        let g = pi_grid(32);
        let exp = GreenExpansion::complete(&g);
        let kernel = KernelSpec::new(KernelOrder::Weak, 0.5).unwrap();
        let eta = HistoryFn::stationary(|_| 0.0, 20.0);
        let v0 = history_to_initial_weak(&exp, 1.0, &kernel, &|u| u, &eta, 0.01).unwrap();
        assert!(v0.iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn weak_initial_map_matches_closed_form_on_the_principal_mode() {
        // Stationary history eta = phi1, H = id, d = 1, tau = 0.5 on L = pi:
        // every lag damps phi1 by e^{-lag}, so
        // v0 = phi1 * int_0^inf g(l) e^{-l} dl = phi1 / (1 + d lambda1 tau).
        let g = pi_grid(128);
        let exp = GreenExpansion::complete(&g);
        let kernel = KernelSpec::new(KernelOrder::Weak, 0.5).unwrap();
        let eta = HistoryFn::stationary(f64::sin, kernel.horizon());
        let v0 = history_to_initial_weak(&exp, 1.0, &kernel, &|u| u, &eta, 0.01).unwrap();
        let expect = g.sample(|x| x.sin() / 1.5);
        assert!(max_abs_diff(&v0, &expect) < 1e-4);
    }

    #[test]
    fn weak_initial_map_for_the_small_sine_history() {
        // eta = 0.1 sin x, d = 0.5, tau = 0.5: v0 = 0.1 sin x / 1.25.
        let g = pi_grid(128);
        let exp = GreenExpansion::complete(&g);
        let kernel = KernelSpec::new(KernelOrder::Weak, 0.5).unwrap();
        let eta = HistoryFn::stationary(|x| 0.1 * x.sin(), kernel.horizon());
        let v0 = history_to_initial_weak(&exp, 0.5, &kernel, &|u| u, &eta, 1e-3).unwrap();
        let expect = g.sample(|x| 0.08 * x.sin());
        assert!(max_abs_diff(&v0, &expect) < 1e-4);
    }

    #[test]
    fn strong_initial_maps_match_closed_forms() {
        // Same stationary phi1 history: v0 = phi1/(1 + d lambda1 tau)^2 and
        // w0 = phi1/(1 + d lambda1 tau).
        let g = pi_grid(128);
        let exp = GreenExpansion::complete(&g);
        let kernel = KernelSpec::new(KernelOrder::Strong, 0.5).unwrap();
        let eta = HistoryFn::stationary(f64::sin, kernel.horizon());
        let (v0, w0) =
            history_to_initial_strong(&exp, 1.0, &kernel, &|u| u, &eta, 0.01).unwrap();
        let ev = g.sample(|x| x.sin() / 2.25);
        let ew = g.sample(|x| x.sin() / 1.5);
        assert!(max_abs_diff(&v0, &ev) < 1e-4);
        assert!(max_abs_diff(&w0, &ew) < 1e-4);
    }

    #[test]
    fn strong_w_field_equals_weak_v_field_for_the_same_history() {
        let g = pi_grid(64);
        let exp = GreenExpansion::complete(&g);
        let weak = KernelSpec::new(KernelOrder::Weak, 0.8).unwrap();
        let strong = KernelSpec::new(KernelOrder::Strong, 0.8).unwrap();
        let eta = HistoryFn::stationary(|x| 0.3 * x.sin() + 0.05 * (3.0 * x).sin(), 32.0);
        let v_weak = history_to_initial_weak(&exp, 0.4, &weak, &|u| u, &eta, 0.02).unwrap();
        let (_, w_strong) =
            history_to_initial_strong(&exp, 0.4, &strong, &|u| u, &eta, 0.02).unwrap();
        assert!(max_abs_diff(&v_weak, &w_strong) < 1e-12);
    }

    #[test]
    fn initial_maps_reject_coarse_quadrature() {
        let g = pi_grid(16);
        let exp = GreenExpansion::complete(&g);
        let kernel = KernelSpec::new(KernelOrder::Weak, 0.4).unwrap();
        let eta = HistoryFn::stationary(f64::sin, 16.0);
        match history_to_initial_weak(&exp, 1.0, &kernel, &|u| u, &eta, 0.2) {
            Err(RdError::QuadratureStep { .. }) => {}
            other => panic!("expected quadrature-step error, got {other:?}"),
        }
    }

    #[test]
    fn convolution_of_identically_zero_data_is_zero() {
        let g = pi_grid(24);
        let exp = GreenExpansion::complete(&g);
        let kernel = KernelSpec::new(KernelOrder::Weak, 0.5).unwrap();
        let eta = HistoryFn::stationary(|_| 0.0, 20.0);
        let slices = vec![vec![0.0; 24]; 101];
        let traj = SampledTrajectory {
            dt: 0.1,
            slices: &slices,
        };
        let v = nonlocal_convolution(&exp, 1.0, &kernel, &|u| u, &traj, &eta, 10.0).unwrap();
        assert!(v.iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn convolution_of_a_frozen_principal_mode_matches_the_closed_form() {
        // u(., t) = phi1 for all t and the same stationary history: at any
        // lattice time the feedback equals phi1/(1 + d lambda1 tau) up to
        // quadrature error.
        let g = pi_grid(96);
        let exp = GreenExpansion::complete(&g);
        let kernel = KernelSpec::new(KernelOrder::Weak, 0.5).unwrap();
        let eta = HistoryFn::stationary(f64::sin, kernel.horizon());
        let sine = g.sample(f64::sin);
        let slices = vec![sine; 1001];
        let traj = SampledTrajectory {
            dt: 0.01,
            slices: &slices,
        };
        let expect = g.sample(|x| x.sin() / 1.5);
        for t in [0.0, 2.05, 10.0] {
            let v = nonlocal_convolution(&exp, 1.0, &kernel, &|u| u, &traj, &eta, t).unwrap();
            assert!(max_abs_diff(&v, &expect) < 3e-4, "t = {t}");
        }
    }

    #[test]
    fn convolution_requires_enough_history_coverage() {
        let g = pi_grid(16);
        let exp = GreenExpansion::complete(&g);
        let kernel = KernelSpec::new(KernelOrder::Weak, 1.0).unwrap();
        // Horizon 5 < 40 tau and t = 1: coverage 6 < 40.
        let eta = HistoryFn::stationary(f64::sin, 5.0);
        let slices = vec![vec![0.1; 16]; 11];
        let traj = SampledTrajectory {
            dt: 0.1,
            slices: &slices,
        };
        match nonlocal_convolution(&exp, 1.0, &kernel, &|u| u, &traj, &eta, 1.0) {
            Err(RdError::InsufficientHistory { .. }) => {}
            other => panic!("expected insufficient history, got {other:?}"),
        }
    }

    #[test]
    fn incremental_quadrature_agrees_with_the_standalone_routine() {
        // A genuinely time-varying trajectory and history; the ring-based
        // evaluator must reproduce the standalone quadrature at every lattice
        // point.
        let g = pi_grid(32);
        let exp = GreenExpansion::complete(&g);
        let kernel = KernelSpec::new(KernelOrder::Strong, 0.6).unwrap();
        let eta =
            HistoryFn::time_varying(|x, s| 0.2 * x.sin() * (1.0 + 0.5 * (s * 0.3).sin()), 24.0);
        let dt = 0.05;
        let n_steps = 60;
        let slices: Vec<Vec<f64>> = (0..=n_steps)
            .map(|j| {
                let t = j as f64 * dt;
                g.sample(|x| 0.2 * x.sin() * (1.0 + 0.5 * (t * 0.3).sin()) + 0.01 * t * (2.0 * x).sin())
            })
            .collect();
        let h = |u: f64| u * u + 0.3 * u;

        let mut fq =
            FeedbackQuadrature::new(&exp, 0.7, &kernel, &h, &eta, dt, 10_000_000).unwrap();
        let traj = SampledTrajectory { dt, slices: &slices };
        for j in 0..=n_steps {
            fq.push(&exp, &h, &slices[j]).unwrap();
            let fast = fq.eval(&exp).unwrap();
            let slow =
                nonlocal_convolution(&exp, 0.7, &kernel, &h, &traj, &eta, j as f64 * dt).unwrap();
            assert!(
                max_abs_diff(&fast, &slow) < 1e-12,
                "step {j}: {}",
                max_abs_diff(&fast, &slow)
            );
        }
    }

    #[test]
    fn incremental_quadrature_enforces_the_memory_cap() {
        let g = pi_grid(64);
        let exp = GreenExpansion::complete(&g);
        let kernel = KernelSpec::new(KernelOrder::Weak, 1.0).unwrap();
        let eta = HistoryFn::stationary(f64::sin, 40.0);
        match FeedbackQuadrature::new(&exp, 1.0, &kernel, &|u| u, &eta, 0.01, 1000) {
            Err(RdError::HistoryBudget { .. }) => {}
            other => panic!("expected budget error, got {other:?}"),
        }
    }
}
