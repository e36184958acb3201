//! Closed-form bifurcation quantities at the extinction state.
//!
//! Linearizing the weak-kernel local system at `(u, v) = (0, 0)` and
//! restricting to spatial mode `n` gives the 2x2 block
//!
//! ```text
//! [ a - d lambda_n        b       ]          a = F_u(0,0), b = F_v(0,0),
//! [     k / tau     -1/tau - d lambda_n ],   k = H'(0),
//! ```
//!
//! whose spectral abscissa crosses zero on the principal mode at the critical
//! diffusion `d_star = mu1 / lambda_1`, where `mu1` is the positive root of
//! `mu^2 - (a - 1/tau) mu - (a + bk)/tau = 0` (it exists exactly when
//! `a + bk > 0`). This module evaluates `d_star`, the critical eigenvector
//! ratio, the local branch slope, the exchange-of-stability sign, and the
//! diffusion thresholds above which no positive steady state survives.

use crate::error::{RdError, Result};
use crate::grid::Grid1D;
use crate::model::ModelSpec;
use crate::spectral::EigenPair;

/// Principal spatial mode data entering the scalar formulas: the eigenvalue
/// and the integrals of `phi1^2` and `phi1^3` for the max-norm-scaled
/// eigenfunction.
#[derive(Debug, Clone, Copy)]
pub struct PrincipalMode {
    pub lambda1: f64,
    pub phi_sq: f64,
    pub phi_cu: f64,
}

impl PrincipalMode {
    /// Quadrature moments of a computed eigenpair (vector already max-norm 1).
    pub fn from_eigenpair(grid: &Grid1D, pair: &EigenPair) -> Self {
        let sq: Vec<f64> = pair.vector.iter().map(|p| p * p).collect();
        let cu: Vec<f64> = pair.vector.iter().map(|p| p * p * p).collect();
        Self {
            lambda1: pair.value,
            phi_sq: grid.integrate(&sq),
            phi_cu: grid.integrate(&cu),
        }
    }

    /// Continuum values for the interval `(0, L)`: `lambda1 = (pi/L)^2`,
    /// `int sin^2 = L/2`, `int sin^3 = 4L/(3 pi)`.
    pub fn analytic(length: f64) -> Self {
        let pi = std::f64::consts::PI;
        Self {
            lambda1: (pi / length) * (pi / length),
            phi_sq: length / 2.0,
            phi_cu: 4.0 * length / (3.0 * pi),
        }
    }
}

/// Positive root `mu1` of `mu^2 - (a - 1/tau) mu - (a + bk)/tau = 0`:
/// the temporal growth exponent of the principal-mode linearization in the
/// absence of diffusion. Requires `a + bk > 0`.
pub fn growth_exponent(a: f64, b: f64, k: f64, tau: f64) -> f64 {
    let half = 0.5 * (a - 1.0 / tau);
    let c = (a + b * k) / tau;
    let s = (half * half + c).sqrt();
    if half >= 0.0 {
        half + s
    } else {
        // Avoid cancellation when the root is small.
        c / (s - half)
    }
}

/// Critical diffusion `d_star = mu1 / lambda1`, in the explicit radical form
/// `(a tau - 1 + sqrt((a tau + 1)^2 + 4 b tau k)) / (2 lambda1 tau)`.
pub fn bifurcation_point(a: f64, b: f64, k: f64, tau: f64, lambda1: f64) -> f64 {
    let disc = (a * tau + 1.0) * (a * tau + 1.0) + 4.0 * b * tau * k;
    let s = disc.sqrt();
    let num = if a * tau - 1.0 >= 0.0 {
        a * tau - 1.0 + s
    } else {
        // (s^2 - (a tau - 1)^2) / (s - (a tau - 1)) without cancellation:
        // s^2 - (a tau - 1)^2 = 4 tau (a + bk).
        4.0 * tau * (a + b * k) / (s + 1.0 - a * tau)
    };
    num / (2.0 * lambda1 * tau)
}

/// Feedback component of the critical eigenvector normalized to a unit `u`
/// component: `M = 2k / (a tau + 1 + sqrt((a tau + 1)^2 + 4 b tau k))`,
/// equivalently `k / (mu1 tau + 1)`.
pub fn component_ratio(a: f64, b: f64, k: f64, tau: f64) -> f64 {
    let at1 = a * tau + 1.0;
    let s = (at1 * at1 + 4.0 * b * tau * k).sqrt();
    2.0 * k / (at1 + s)
}

/// Monotonicity of `tau -> d_star(tau)` at fixed admissible `(a, b, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DstarTrend {
    Constant,
    Decreasing,
    Increasing,
}

/// Classify the delay response of the critical diffusion: without delayed
/// feedback (`b = 0`) it is flat; delayed gain (`b > 0`) lowers it as the lag
/// grows; delayed loss (`b < 0`, admissible only with `a > -bk > 0`) raises
/// it.
pub fn dstar_trend(a: f64, b: f64, k: f64) -> Result<DstarTrend> {
    if !(k > 0.0) {
        return Err(RdError::InvalidParameter(format!(
            "feedback slope must be positive, got {k}"
        )));
    }
    if a + b * k <= 0.0 {
        return Err(RdError::Assumption(format!(
            "extinction state not destabilized: a + bk = {} <= 0",
            a + b * k
        )));
    }
    Ok(if b == 0.0 {
        DstarTrend::Constant
    } else if b > 0.0 {
        DstarTrend::Decreasing
    } else {
        DstarTrend::Increasing
    })
}

/// Everything the scalar theory says about a model at delay scale `tau`.
#[derive(Debug, Clone, Copy)]
pub struct BifSummary {
    pub lambda1: f64,
    /// Growth exponent `mu1` of the principal mode at `d = 0`.
    pub growth_exponent: f64,
    /// Critical diffusion: extinction destabilizes for `d < d_star`.
    pub d_star: f64,
    /// Critical eigenvector ratio `M`.
    pub m_ratio: f64,
    /// Slope of the bifurcating branch in `d(s)` at zero amplitude; negative
    /// means the branch bends into `d < d_star` (supercritical).
    pub d_prime0: f64,
    /// Exchange-of-stability sign `k (p + 2qM + r M^2) + M b l`: negative
    /// means the near-onset branch is linearly stable.
    pub sign_test: f64,
    /// Diffusion beyond which no positive steady state exists, when a
    /// structural witness supplies one.
    pub threshold: Option<f64>,
    /// A priori max-norm bounds on nonnegative states.
    pub u_bound: f64,
    pub v_bound: f64,
}

/// Assemble the scalar summary for a catalog model.
pub fn bif_summary(model: &ModelSpec, tau: f64, mode: &PrincipalMode) -> Result<BifSummary> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(RdError::InvalidParameter(format!(
            "delay scale must be positive and finite, got {tau}"
        )));
    }
    let e = model.origin_expansion();
    if e.a + e.b * e.k <= 0.0 {
        return Err(RdError::Assumption(format!(
            "extinction state of {} is not destabilized: F_u + F_v H' = {} <= 0 at the origin",
            model.name(),
            e.a + e.b * e.k
        )));
    }
    let mu1 = growth_exponent(e.a, e.b, e.k, tau);
    let d_star = bifurcation_point(e.a, e.b, e.k, tau, mode.lambda1);
    let m = component_ratio(e.a, e.b, e.k, tau);
    let quad_form = e.k * (e.p + 2.0 * e.q * m + e.r * m * m) + m * e.b * e.l;
    let denom = 2.0 * mode.lambda1 * (e.k + m * m * e.b * tau) * mode.phi_sq;
    let d_prime0 = quad_form * mode.phi_cu / denom;
    let (u_bound, v_bound) = model.amplitude_bounds();
    let threshold = nonexistence_threshold(model, tau, mode.lambda1).ok();
    Ok(BifSummary {
        lambda1: mode.lambda1,
        growth_exponent: mu1,
        d_star,
        m_ratio: m,
        d_prime0,
        sign_test: quad_form,
        threshold,
        u_bound,
        v_bound,
    })
}

/// Diffusion threshold above which no positive steady state exists.
///
/// Self-limiting models (`F_u(0,0) > 0`) use `rate_cap / lambda1`;
/// death/birth models (`F_u(0,0) < 0`) use the critical diffusion of the
/// dominating linear system. A model offering neither witness, or sitting on
/// the degenerate fence `F_u(0,0) = 0`, is rejected.
pub fn nonexistence_threshold(model: &ModelSpec, tau: f64, lambda1: f64) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(RdError::InvalidParameter(format!(
            "delay scale must be positive and finite, got {tau}"
        )));
    }
    let e = model.origin_expansion();
    let assumptions = model.assumptions();
    if e.a > 0.0 {
        let w = assumptions.self_limiting.ok_or_else(|| {
            RdError::Assumption(format!(
                "{} has no self-limitation witness for a nonexistence threshold",
                model.name()
            ))
        })?;
        Ok(w.rate_cap / lambda1)
    } else if e.a < 0.0 {
        let w = assumptions.death_birth.ok_or_else(|| {
            RdError::Assumption(format!(
                "{} has no death/birth witness for a nonexistence threshold",
                model.name()
            ))
        })?;
        Ok(bifurcation_point(
            -w.death_rate,
            w.birth_slope,
            w.feedback_slope,
            tau,
            lambda1,
        ))
    } else {
        Err(RdError::Assumption(format!(
            "{} sits on the degenerate fence F_u(0,0) = 0; no threshold formula applies",
            model.name()
        )))
    }
}

/// `d_star` swept over a delay grid, with its closed-form limits.
#[derive(Debug, Clone)]
pub struct DstarCurve {
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    /// Limit as `tau -> 0+`: `(a + bk)/lambda1`.
    pub limit_zero: f64,
    /// Limit as `tau -> inf`: `max(a, 0)/lambda1`.
    pub limit_infinity: f64,
}

pub fn dstar_curve(model: &ModelSpec, taus: &[f64], lambda1: f64) -> Result<DstarCurve> {
    if taus.is_empty() {
        return Err(RdError::InvalidParameter(
            "delay grid for the threshold curve is empty".into(),
        ));
    }
    let e = model.origin_expansion();
    if e.a + e.b * e.k <= 0.0 {
        return Err(RdError::Assumption(format!(
            "extinction state of {} is not destabilized",
            model.name()
        )));
    }
    let mut values = Vec::with_capacity(taus.len());
    for &tau in taus {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(RdError::InvalidParameter(format!(
                "delay grid entries must be positive, got {tau}"
            )));
        }
        values.push(bifurcation_point(e.a, e.b, e.k, tau, lambda1));
    }
    Ok(DstarCurve {
        taus: taus.to_vec(),
        values,
        limit_zero: (e.a + e.b * e.k) / lambda1,
        limit_infinity: e.a.max(0.0) / lambda1,
    })
}
