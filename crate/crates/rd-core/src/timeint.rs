//! Time integration: an implicit-explicit scheme for the local systems and a
//! direct-quadrature integrator for the original nonlocal equation.
//!
//! Diffusion and the linear relaxation terms are treated implicitly with
//! cached tridiagonal factorizations, reactions explicitly, so the step is
//! one banded solve per field. The implicit-explicit fixed points coincide
//! exactly with the Newton steady states of the same spatial discretization,
//! which is what makes a tight attractor match meaningful at any step size.
//! The nonlocal integrator never forms the auxiliary fields: it evaluates the
//! memory feedback by quadrature against the kernel at every step, providing
//! an independent check on the local reformulations.

use crate::error::{RdError, Result};
use crate::grid::Grid1D;
use crate::kernel::{
    history_to_initial_strong, history_to_initial_weak, FeedbackQuadrature, GreenExpansion,
    HistoryFn, KernelOrder, KernelSpec,
};
use crate::model::ModelSpec;
use crate::spectral::{solve_shifted, TridiagFactor};
use crate::steady::{field_count, newton_solve, FieldState, NewtonOptions};

/// Integrator controls and verdict tolerances.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between recorded snapshots (and convergence checks).
    pub output_stride: usize,
    /// Rate of change per unit time below which a checkpoint counts as
    /// settled; zero disables early stopping.
    pub convergence_tol: f64,
    /// Consecutive settled checkpoints required to stop early.
    pub convergence_window: usize,
    /// Max-norm distance to the refined steady state that counts as arrival.
    pub attractor_tol: f64,
    /// Final `u` magnitudes below this classify as extinction.
    pub zero_tol: f64,
    pub blowup_cap: f64,
    /// Scalar-entry budget for the nonlocal memory buffers.
    pub history_cap: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 200.0,
            output_stride: 1000,
            convergence_tol: 1e-7,
            convergence_window: 10,
            attractor_tol: 1e-4,
            zero_tol: 1e-3,
            blowup_cap: 1e6,
            history_cap: 2_000_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(RdError::InvalidParameter(format!(
                "time step must be positive and finite, got {}",
                self.dt
            )));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) {
            return Err(RdError::InvalidParameter(format!(
                "final time must be at least one step, got {}",
                self.t_end
            )));
        }
        if self.output_stride == 0 {
            return Err(RdError::InvalidParameter(
                "output stride must be at least one step".into(),
            ));
        }
        if self.convergence_window == 0 {
            return Err(RdError::InvalidParameter(
                "convergence window must be at least one checkpoint".into(),
            ));
        }
        for (name, val) in [
            ("convergence_tol", self.convergence_tol),
            ("attractor_tol", self.attractor_tol),
            ("zero_tol", self.zero_tol),
            ("blowup_cap", self.blowup_cap),
        ] {
            if !(val.is_finite() && val >= 0.0) {
                return Err(RdError::InvalidParameter(format!(
                    "{name} must be nonnegative and finite, got {val}"
                )));
            }
        }
        Ok(())
    }
}

/// Where the dynamics ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    ConvergedToZero,
    ConvergedToPositive,
    NotConverged,
}

/// Recorded run: checkpoint times and states, the classification, and the
/// refined steady state backing a positive verdict.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<FieldState>,
    pub verdict: Verdict,
    pub final_state: FieldState,
    pub attractor: Option<FieldState>,
}

/// One implicit-explicit step of a local system: reactions advance
/// explicitly, diffusion and relaxation implicitly through cached banded
/// factorizations.
pub struct ImexStepper {
    dt: f64,
    tau: f64,
    order: KernelOrder,
    n: usize,
    /// `I + dt d A`.
    diffuse: TridiagFactor,
    /// `I + dt d A + (dt/tau) I`.
    relax: TridiagFactor,
}

impl ImexStepper {
    pub fn new(grid: &Grid1D, d: f64, tau: f64, order: KernelOrder, dt: f64) -> Result<Self> {
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
        if !(dt.is_finite() && dt > 0.0) {
            return Err(RdError::InvalidParameter(format!(
                "time step must be positive and finite, got {dt}"
            )));
        }
        let h = grid.spacing();
        let n = grid.n_interior();
        let lam_diag = 2.0 / (h * h);
        let lam_off = -1.0 / (h * h);
        let diffuse = TridiagFactor::new(1.0 + dt * d * lam_diag, dt * d * lam_off, n)?;
        let relax = TridiagFactor::new(1.0 + dt * d * lam_diag + dt / tau, dt * d * lam_off, n)?;
        Ok(Self {
            dt,
            tau,
            order,
            n,
            diffuse,
            relax,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance the state by one step in place. Sources are evaluated at the
    /// old time level throughout.
    pub fn step(&self, model: &ModelSpec, state: &mut FieldState) -> Result<()> {
        if state.n_nodes() != self.n || state.order() != self.order {
            return Err(RdError::InvalidGrid(format!(
                "state shape ({} nodes, {} fields) does not match the stepper ({} nodes, {} fields)",
                state.n_nodes(),
                field_count(state.order()),
                self.n,
                field_count(self.order)
            )));
        }
        let dt = self.dt;
        let mut rhs_u: Vec<f64> = (0..self.n)
            .map(|i| state.u[i] + dt * model.f(state.u[i], state.v[i]))
            .collect();
        match (&mut state.w, self.order) {
            (None, KernelOrder::Weak) => {
                let mut rhs_v: Vec<f64> = (0..self.n)
                    .map(|i| state.v[i] + dt / self.tau * model.h(state.u[i]))
                    .collect();
                self.diffuse.solve_in_place(&mut rhs_u);
                self.relax.solve_in_place(&mut rhs_v);
                state.u = rhs_u;
                state.v = rhs_v;
            }
            (Some(w), KernelOrder::Strong) => {
                let mut rhs_v: Vec<f64> = (0..self.n)
                    .map(|i| state.v[i] + dt / self.tau * w[i])
                    .collect();
                let mut rhs_w: Vec<f64> = (0..self.n)
                    .map(|i| w[i] + dt / self.tau * model.h(state.u[i]))
                    .collect();
                self.diffuse.solve_in_place(&mut rhs_u);
                self.relax.solve_in_place(&mut rhs_v);
                self.relax.solve_in_place(&mut rhs_w);
                state.u = rhs_u;
                state.v = rhs_v;
                *w = rhs_w;
            }
            _ => unreachable!("state order checked above"),
        }
        Ok(())
    }
}

fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Integrate a local system from prescribed history. The initial auxiliary
/// fields are built from the history by the kernel-weighted, propagated
/// quadrature maps, so the run is equivalent to the nonlocal problem up to
/// discretization error.
pub fn simulate(
    model: &ModelSpec,
    grid: &Grid1D,
    d: f64,
    kernel: &KernelSpec,
    history: &HistoryFn,
    config: &SimConfig,
) -> Result<Trajectory> {
    config.validate()?;
    let tau = kernel.tau();
    let order = kernel.order();
    let exp = GreenExpansion::complete(grid);
    let h_fn = |u: f64| model.h(u);
    let u0 = history.initial_field(grid);
    let (v0, w0) = match order {
        KernelOrder::Weak => (
            history_to_initial_weak(&exp, d, kernel, &h_fn, history, config.dt)?,
            None,
        ),
        KernelOrder::Strong => {
            let (v, w) = history_to_initial_strong(&exp, d, kernel, &h_fn, history, config.dt)?;
            (v, Some(w))
        }
    };
    let mut state = FieldState { u: u0, v: v0, w: w0 };
    let stepper = ImexStepper::new(grid, d, tau, order, config.dt)?;

    let n_steps = ((config.t_end / config.dt).round() as usize).max(1);
    let mut times = vec![0.0];
    let mut snapshots = vec![state.clone()];
    let mut prev_check = state.clone();
    let mut prev_step = 0usize;
    let mut settled = 0usize;
    for step in 1..=n_steps {
        stepper.step(model, &mut state)?;
        let mag = max_abs(&state.u);
        if !mag.is_finite() || mag > config.blowup_cap {
            return Err(RdError::BlowUp {
                t: step as f64 * config.dt,
                magnitude: mag,
                cap: config.blowup_cap,
            });
        }
        if step % config.output_stride == 0 || step == n_steps {
            let t = step as f64 * config.dt;
            times.push(t);
            snapshots.push(state.clone());
            let span = (step - prev_step) as f64 * config.dt;
            let rate = state.distance(&prev_check) / span;
            if rate < config.convergence_tol {
                settled += 1;
            } else {
                settled = 0;
            }
            prev_check = state.clone();
            prev_step = step;
            if settled >= config.convergence_window {
                break;
            }
        }
    }
    let (verdict, attractor) = classify_local(model, grid, d, tau, &state, config);
    Ok(Trajectory {
        times,
        snapshots,
        verdict,
        final_state: state,
        attractor,
    })
}

/// Classify a finished local run: extinction by magnitude, persistence by a
/// Newton refinement from the final state. The implicit-explicit fixed
/// points are exactly the Newton roots of the same spatial discretization,
/// so the distance check does not depend on the step size.
fn classify_local(
    model: &ModelSpec,
    grid: &Grid1D,
    d: f64,
    tau: f64,
    state: &FieldState,
    config: &SimConfig,
) -> (Verdict, Option<FieldState>) {
    if max_abs(&state.u) < config.zero_tol {
        return (Verdict::ConvergedToZero, None);
    }
    match newton_solve(model, grid, d, tau, state, &NewtonOptions::default()) {
        Ok(ss) if state.distance(&ss) <= config.attractor_tol && max_abs(&ss.u) > config.zero_tol => {
            (Verdict::ConvergedToPositive, Some(ss))
        }
        _ => (Verdict::NotConverged, None),
    }
}

/// Integrate the original nonlocal equation directly: the memory feedback is
/// evaluated by quadrature against the kernel at every step, with the
/// prescribed history supplying the tail. Snapshots carry the evaluated
/// feedback in `v`; no auxiliary field is ever formed.
pub fn simulate_nonlocal(
    model: &ModelSpec,
    grid: &Grid1D,
    d: f64,
    kernel: &KernelSpec,
    history: &HistoryFn,
    config: &SimConfig,
) -> Result<Trajectory> {
    config.validate()?;
    let exp = GreenExpansion::complete(grid);
    let h_fn = |u: f64| model.h(u);
    let mut quad = FeedbackQuadrature::new(&exp, d, kernel, &h_fn, history, config.dt, config.history_cap)?;
    let h = grid.spacing();
    let n = grid.n_interior();
    let diffuse = TridiagFactor::new(
        1.0 + config.dt * d * 2.0 / (h * h),
        -config.dt * d / (h * h),
        n,
    )?;

    let mut u = history.initial_field(grid);
    quad.push(&exp, &h_fn, &u)?;
    let mut v = quad.eval(&exp)?;

    let n_steps = ((config.t_end / config.dt).round() as usize).max(1);
    let snapshot = |u: &Vec<f64>, v: &Vec<f64>| FieldState {
        u: u.clone(),
        v: v.clone(),
        w: None,
    };
    let mut times = vec![0.0];
    let mut snapshots = vec![snapshot(&u, &v)];
    let mut prev_check = u.clone();
    let mut prev_step = 0usize;
    let mut settled = 0usize;
    for step in 1..=n_steps {
        let mut rhs: Vec<f64> = (0..n)
            .map(|i| u[i] + config.dt * model.f(u[i], v[i]))
            .collect();
        diffuse.solve_in_place(&mut rhs);
        u = rhs;
        let mag = max_abs(&u);
        if !mag.is_finite() || mag > config.blowup_cap {
            return Err(RdError::BlowUp {
                t: step as f64 * config.dt,
                magnitude: mag,
                cap: config.blowup_cap,
            });
        }
        quad.push(&exp, &h_fn, &u)?;
        v = quad.eval(&exp)?;
        if step % config.output_stride == 0 || step == n_steps {
            let t = step as f64 * config.dt;
            times.push(t);
            snapshots.push(snapshot(&u, &v));
            let span = (step - prev_step) as f64 * config.dt;
            let rate = u
                .iter()
                .zip(&prev_check)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                / span;
            if rate < config.convergence_tol {
                settled += 1;
            } else {
                settled = 0;
            }
            prev_check = u.clone();
            prev_step = step;
            if settled >= config.convergence_window {
                break;
            }
        }
    }

    let final_state = snapshot(&u, &v);
    let (verdict, attractor) =
        classify_nonlocal(model, grid, d, kernel, &u, &v, config);
    Ok(Trajectory {
        times,
        snapshots,
        verdict,
        final_state,
        attractor,
    })
}

/// Classify a finished nonlocal run against the matching local system's
/// Newton roots; only the `u` component is compared, since the auxiliary
/// fields are representation details of the local side.
fn classify_nonlocal(
    model: &ModelSpec,
    grid: &Grid1D,
    d: f64,
    kernel: &KernelSpec,
    u: &[f64],
    v: &[f64],
    config: &SimConfig,
) -> (Verdict, Option<FieldState>) {
    if max_abs(u) < config.zero_tol {
        return (Verdict::ConvergedToZero, None);
    }
    let tau = kernel.tau();
    let guess = match kernel.order() {
        KernelOrder::Weak => FieldState {
            u: u.to_vec(),
            v: v.to_vec(),
            w: None,
        },
        KernelOrder::Strong => {
            let hu: Vec<f64> = u.iter().map(|&x| model.h(x)).collect();
            let w = match solve_shifted(grid, tau * d, 1.0, &hu) {
                Ok(w) => w,
                Err(_) => return (Verdict::NotConverged, None),
            };
            FieldState {
                u: u.to_vec(),
                v: v.to_vec(),
                w: Some(w),
            }
        }
    };
    match newton_solve(model, grid, d, tau, &guess, &NewtonOptions::default()) {
        Ok(ss) => {
            let du = u
                .iter()
                .zip(&ss.u)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if du <= config.attractor_tol && max_abs(&ss.u) > config.zero_tol {
                (Verdict::ConvergedToPositive, Some(ss))
            } else {
                (Verdict::NotConverged, None)
            }
        }
        Err(_) => (Verdict::NotConverged, None),
    }
}
