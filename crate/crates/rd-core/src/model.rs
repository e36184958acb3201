//! Catalog of population models.
//!
//! Each model supplies the instantaneous reaction `F(u, v)` and the feedback
//! map `H(u)` entering `u_t = d u_xx + F(u, v)`, `v = g ** H(u)`, together
//! with closed-form partial derivatives, the expansion of `(F, H)` at the
//! extinction state, and the structural hypotheses (self-limitation,
//! death/birth splitting, bounded birth) that drive a priori bounds and
//! nonexistence thresholds.

use crate::error::{RdError, Result};

/// Entries below this magnitude are snapped to zero by the checked
/// evaluators; anything more negative is a domain violation.
const NEG_SNAP: f64 = 1e-12;

/// First and second partial derivatives of `(F, H)` at the extinction state:
/// `a = F_u`, `b = F_v`, `k = H'`, `p = F_uu`, `q = F_uv`, `r = F_vv`,
/// `l = H''`, all evaluated at `(0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginExpansion {
    pub a: f64,
    pub b: f64,
    pub k: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub l: f64,
}

/// Self-limitation witness: `F(u, v) <= F1(u) u` for all admissible `(u, v)`,
/// where `F1(u) = F(u, 0)/u` satisfies `F1 <= rate_cap` everywhere and
/// `F1 < 0` beyond `u_cap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfLimiting {
    pub u_cap: f64,
    pub rate_cap: f64,
}

/// Death/birth splitting witness: `F(u, v) <= -death_rate * u + F2(v)` with
/// `F2(v) <= birth_slope * v`, and `H(u) <= feedback_slope * u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeathBirthSplit {
    pub death_rate: f64,
    pub birth_slope: f64,
    pub feedback_slope: f64,
}

/// Saturation of the birth pathway, in one of two places.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BirthBound {
    /// `sup_v F2(v)` is finite (saturating birth response).
    Output(f64),
    /// `sup_u H(u)` is finite (saturating feedback map).
    Input(f64),
}

/// Structural hypotheses a model satisfies, with their constants.
#[derive(Debug, Clone, Copy, Default)]
pub struct Assumptions {
    pub self_limiting: Option<SelfLimiting>,
    pub death_birth: Option<DeathBirthSplit>,
    pub birth_bound: Option<BirthBound>,
    /// Positive steady states, when they exist on an interval, are unique:
    /// holds for the models with `F = u f(u, v)`, `f` strictly decreasing in
    /// both arguments, increasing feedback, and for the saturating-uptake
    /// model via monotone/subhomogeneous structure.
    pub unique_positive_state: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticParams {
    /// Low-density growth rate.
    pub kappa: f64,
    /// Instantaneous crowding coefficient.
    pub instant: f64,
    /// Delayed crowding coefficient.
    pub delayed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticCubicParams {
    pub kappa: f64,
    /// Low-density cooperation coefficient (destabilizes small densities).
    pub boost: f64,
    /// Delayed crowding coefficient.
    pub delayed: f64,
    /// Cubic self-limitation coefficient.
    pub cubic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoodLimitedParams {
    pub kappa: f64,
    pub instant: f64,
    pub delayed: f64,
    /// Saturation of the growth response to the remaining resources.
    pub food_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NicholsonParams {
    /// Linear death rate.
    pub death: f64,
    /// Maximal per-capita birth rate.
    pub birth: f64,
    /// Overcompensation scale in the birth response.
    pub ricker: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonodParams {
    pub death: f64,
    /// Maximal uptake rate.
    pub birth: f64,
    /// Half-saturation density of the uptake response.
    pub half_sat: f64,
}

/// A reaction/feedback pair from the catalog.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    /// `F = kappa u (1 - instant u - delayed v)`, `H = u`.
    Logistic(LogisticParams),
    /// `F = kappa u (1 + boost u - delayed v - cubic u^2)`, `H = u`.
    LogisticCubic(LogisticCubicParams),
    /// `F = kappa u (1 - instant u - delayed v) / (1 + food_scale (instant u + delayed v))`, `H = u`.
    FoodLimited(FoodLimitedParams),
    /// `F = -death u + birth v e^{-ricker v}`, `H = u`.
    Nicholson(NicholsonParams),
    /// `F = -death u + birth v`, `H = u e^{-ricker u}`.
    NicholsonVariant(NicholsonParams),
    /// `F = -death u + birth v / (half_sat + v)`, `H = u`.
    Monod(MonodParams),
}

fn require_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(RdError::InvalidParameter(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}

impl ModelSpec {
    pub fn logistic(kappa: f64, instant: f64, delayed: f64) -> Result<Self> {
        require_positive("kappa", kappa)?;
        require_positive("instant", instant)?;
        require_positive("delayed", delayed)?;
        Ok(Self::Logistic(LogisticParams {
            kappa,
            instant,
            delayed,
        }))
    }

    pub fn logistic_cubic(kappa: f64, boost: f64, delayed: f64, cubic: f64) -> Result<Self> {
        require_positive("kappa", kappa)?;
        require_positive("boost", boost)?;
        require_positive("delayed", delayed)?;
        require_positive("cubic", cubic)?;
        Ok(Self::LogisticCubic(LogisticCubicParams {
            kappa,
            boost,
            delayed,
            cubic,
        }))
    }

    pub fn food_limited(kappa: f64, instant: f64, delayed: f64, food_scale: f64) -> Result<Self> {
        require_positive("kappa", kappa)?;
        require_positive("instant", instant)?;
        require_positive("delayed", delayed)?;
        require_positive("food_scale", food_scale)?;
        Ok(Self::FoodLimited(FoodLimitedParams {
            kappa,
            instant,
            delayed,
            food_scale,
        }))
    }

    pub fn nicholson(death: f64, birth: f64, ricker: f64) -> Result<Self> {
        require_positive("death", death)?;
        require_positive("birth", birth)?;
        require_positive("ricker", ricker)?;
        if birth <= death {
            return Err(RdError::InvalidParameter(format!(
                "birth rate {birth} must exceed death rate {death} for the extinction state to destabilize"
            )));
        }
        Ok(Self::Nicholson(NicholsonParams {
            death,
            birth,
            ricker,
        }))
    }

    pub fn nicholson_variant(death: f64, birth: f64, ricker: f64) -> Result<Self> {
        require_positive("death", death)?;
        require_positive("birth", birth)?;
        require_positive("ricker", ricker)?;
        if birth <= death {
            return Err(RdError::InvalidParameter(format!(
                "birth rate {birth} must exceed death rate {death} for the extinction state to destabilize"
            )));
        }
        Ok(Self::NicholsonVariant(NicholsonParams {
            death,
            birth,
            ricker,
        }))
    }

    pub fn monod(death: f64, birth: f64, half_sat: f64) -> Result<Self> {
        require_positive("death", death)?;
        require_positive("birth", birth)?;
        require_positive("half_sat", half_sat)?;
        if birth <= death * half_sat {
            return Err(RdError::InvalidParameter(format!(
                "uptake {birth} must exceed death * half_sat = {} for the extinction state to destabilize",
                death * half_sat
            )));
        }
        Ok(Self::Monod(MonodParams {
            death,
            birth,
            half_sat,
        }))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Logistic(_) => "logistic",
            Self::LogisticCubic(_) => "logistic_cubic",
            Self::FoodLimited(_) => "food_limited",
            Self::Nicholson(_) => "nicholson",
            Self::NicholsonVariant(_) => "nicholson_variant",
            Self::Monod(_) => "monod",
        }
    }

    /// Reaction `F(u, v)`; no domain checks (solver internals may probe
    /// slightly negative iterates).
    pub fn f(&self, u: f64, v: f64) -> f64 {
        match self {
            Self::Logistic(p) => p.kappa * u * (1.0 - p.instant * u - p.delayed * v),
            Self::LogisticCubic(p) => {
                p.kappa * u * (1.0 + p.boost * u - p.delayed * v - p.cubic * u * u)
            }
            Self::FoodLimited(p) => {
                let s = p.instant * u + p.delayed * v;
                p.kappa * u * (1.0 - s) / (1.0 + p.food_scale * s)
            }
            Self::Nicholson(p) => -p.death * u + p.birth * v * (-p.ricker * v).exp(),
            Self::NicholsonVariant(p) => -p.death * u + p.birth * v,
            Self::Monod(p) => -p.death * u + p.birth * v / (p.half_sat + v),
        }
    }

    /// Feedback map `H(u)`; unchecked like [`ModelSpec::f`].
    pub fn h(&self, u: f64) -> f64 {
        match self {
            Self::NicholsonVariant(p) => u * (-p.ricker * u).exp(),
            _ => u,
        }
    }

    /// `dF/du`.
    pub fn f_u(&self, u: f64, v: f64) -> f64 {
        match self {
            Self::Logistic(p) => p.kappa * (1.0 - 2.0 * p.instant * u - p.delayed * v),
            Self::LogisticCubic(p) => {
                p.kappa * (1.0 + 2.0 * p.boost * u - p.delayed * v - 3.0 * p.cubic * u * u)
            }
            Self::FoodLimited(p) => {
                let s = p.instant * u + p.delayed * v;
                let den = 1.0 + p.food_scale * s;
                let num_u = p.kappa * (1.0 - s - p.instant * u);
                let num = p.kappa * u * (1.0 - s);
                (num_u * den - num * p.food_scale * p.instant) / (den * den)
            }
            Self::Nicholson(p) | Self::NicholsonVariant(p) => -p.death,
            Self::Monod(p) => -p.death,
        }
    }

    /// `dF/dv`.
    pub fn f_v(&self, u: f64, v: f64) -> f64 {
        match self {
            Self::Logistic(p) => -p.kappa * p.delayed * u,
            Self::LogisticCubic(p) => -p.kappa * p.delayed * u,
            Self::FoodLimited(p) => {
                let s = p.instant * u + p.delayed * v;
                let den = 1.0 + p.food_scale * s;
                let num = p.kappa * u * (1.0 - s);
                (-p.kappa * u * p.delayed * den - num * p.food_scale * p.delayed) / (den * den)
            }
            Self::Nicholson(p) => p.birth * (-p.ricker * v).exp() * (1.0 - p.ricker * v),
            Self::NicholsonVariant(p) => p.birth,
            Self::Monod(p) => {
                let d = p.half_sat + v;
                p.birth * p.half_sat / (d * d)
            }
        }
    }

    /// `dH/du`.
    pub fn h_prime(&self, u: f64) -> f64 {
        match self {
            Self::NicholsonVariant(p) => (-p.ricker * u).exp() * (1.0 - p.ricker * u),
            _ => 1.0,
        }
    }

    /// Reaction applied entrywise with domain checking: entries in
    /// `[-1e-12, 0)` are snapped to zero, anything lower is rejected.
    pub fn eval_f(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        debug_assert_eq!(u.len(), v.len());
        let mut out = Vec::with_capacity(u.len());
        for (&ui, &vi) in u.iter().zip(v) {
            out.push(self.f(admissible(ui)?, admissible(vi)?));
        }
        Ok(out)
    }

    /// Feedback map applied entrywise with the same domain checking.
    pub fn eval_h(&self, u: &[f64]) -> Result<Vec<f64>> {
        u.iter().map(|&ui| Ok(self.h(admissible(ui)?))).collect()
    }

    /// Derivatives of `(F, H)` at the extinction state, in closed form.
    pub fn origin_expansion(&self) -> OriginExpansion {
        match self {
            Self::Logistic(p) => OriginExpansion {
                a: p.kappa,
                b: 0.0,
                k: 1.0,
                p: -2.0 * p.kappa * p.instant,
                q: -p.kappa * p.delayed,
                r: 0.0,
                l: 0.0,
            },
            Self::LogisticCubic(p) => OriginExpansion {
                a: p.kappa,
                b: 0.0,
                k: 1.0,
                p: 2.0 * p.kappa * p.boost,
                q: -p.kappa * p.delayed,
                r: 0.0,
                l: 0.0,
            },
            Self::FoodLimited(p) => OriginExpansion {
                a: p.kappa,
                b: 0.0,
                k: 1.0,
                p: -2.0 * p.kappa * p.instant * (1.0 + p.food_scale),
                q: -p.kappa * p.delayed * (1.0 + p.food_scale),
                r: 0.0,
                l: 0.0,
            },
            Self::Nicholson(p) => OriginExpansion {
                a: -p.death,
                b: p.birth,
                k: 1.0,
                p: 0.0,
                q: 0.0,
                r: -2.0 * p.birth * p.ricker,
                l: 0.0,
            },
            Self::NicholsonVariant(p) => OriginExpansion {
                a: -p.death,
                b: p.birth,
                k: 1.0,
                p: 0.0,
                q: 0.0,
                r: 0.0,
                l: -2.0 * p.ricker,
            },
            Self::Monod(p) => OriginExpansion {
                a: -p.death,
                b: p.birth / p.half_sat,
                k: 1.0,
                p: 0.0,
                q: 0.0,
                r: -2.0 * p.birth / (p.half_sat * p.half_sat),
                l: 0.0,
            },
        }
    }

    /// Structural hypotheses with their witnesses.
    pub fn assumptions(&self) -> Assumptions {
        match self {
            Self::Logistic(p) => Assumptions {
                self_limiting: Some(SelfLimiting {
                    u_cap: 1.0 / p.instant,
                    rate_cap: p.kappa,
                }),
                unique_positive_state: true,
                ..Default::default()
            },
            Self::LogisticCubic(p) => {
                let u_cap =
                    (p.boost + (p.boost * p.boost + 4.0 * p.cubic).sqrt()) / (2.0 * p.cubic);
                Assumptions {
                    self_limiting: Some(SelfLimiting {
                        u_cap,
                        rate_cap: p.kappa * (1.0 + p.boost * p.boost / (4.0 * p.cubic)),
                    }),
                    unique_positive_state: false,
                    ..Default::default()
                }
            }
            Self::FoodLimited(p) => Assumptions {
                self_limiting: Some(SelfLimiting {
                    u_cap: 1.0 / p.instant,
                    rate_cap: p.kappa,
                }),
                unique_positive_state: true,
                ..Default::default()
            },
            Self::Nicholson(p) => Assumptions {
                death_birth: Some(DeathBirthSplit {
                    death_rate: p.death,
                    birth_slope: p.birth,
                    feedback_slope: 1.0,
                }),
                birth_bound: Some(BirthBound::Output(
                    p.birth / (p.ricker * std::f64::consts::E),
                )),
                unique_positive_state: false,
                ..Default::default()
            },
            Self::NicholsonVariant(p) => Assumptions {
                death_birth: Some(DeathBirthSplit {
                    death_rate: p.death,
                    birth_slope: p.birth,
                    feedback_slope: 1.0,
                }),
                birth_bound: Some(BirthBound::Input(
                    1.0 / (p.ricker * std::f64::consts::E),
                )),
                unique_positive_state: false,
                ..Default::default()
            },
            Self::Monod(p) => Assumptions {
                death_birth: Some(DeathBirthSplit {
                    death_rate: p.death,
                    birth_slope: p.birth / p.half_sat,
                    feedback_slope: 1.0,
                }),
                birth_bound: Some(BirthBound::Output(p.birth)),
                unique_positive_state: true,
                ..Default::default()
            },
        }
    }

    /// Max-norm a priori bounds `(u_bound, v_bound)` on nonnegative bounded
    /// orbits and steady states, from the structural witnesses.
    pub fn amplitude_bounds(&self) -> (f64, f64) {
        match self {
            Self::Logistic(_) | Self::LogisticCubic(_) | Self::FoodLimited(_) => {
                let cap = self
                    .assumptions()
                    .self_limiting
                    .expect("self-limiting witness")
                    .u_cap;
                // H = id is increasing, so the feedback obeys the same cap.
                (cap, cap)
            }
            Self::Nicholson(p) => {
                let u = p.birth / (p.death * p.ricker * std::f64::consts::E);
                (u, u)
            }
            Self::NicholsonVariant(p) => {
                let v = 1.0 / (p.ricker * std::f64::consts::E);
                (p.birth * v / p.death, v)
            }
            Self::Monod(p) => {
                let u = p.birth / p.death;
                (u, u)
            }
        }
    }
}

fn admissible(x: f64) -> Result<f64> {
    if x >= 0.0 {
        Ok(x)
    } else if x >= -NEG_SNAP {
        Ok(0.0)
    } else {
        Err(RdError::Domain(format!(
            "density {x:e} below the admissible floor -1e-12"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn catalog(rng: &mut ChaCha8Rng) -> Vec<ModelSpec> {
        let u = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| rng.gen_range(lo..hi);
        vec![
            ModelSpec::logistic(u(rng, 0.2, 3.0), u(rng, 0.2, 2.0), u(rng, 0.2, 2.0)).unwrap(),
            ModelSpec::logistic_cubic(
                u(rng, 0.2, 3.0),
                u(rng, 0.2, 2.0),
                u(rng, 0.2, 2.0),
                u(rng, 0.2, 2.0),
            )
            .unwrap(),
            ModelSpec::food_limited(
                u(rng, 0.2, 3.0),
                u(rng, 0.2, 2.0),
                u(rng, 0.2, 2.0),
                u(rng, 0.2, 2.0),
            )
            .unwrap(),
            {
                let death = u(rng, 0.2, 1.0);
                ModelSpec::nicholson(death, death + u(rng, 0.1, 2.0), u(rng, 0.2, 2.0)).unwrap()
            },
            {
                let death = u(rng, 0.2, 1.0);
                ModelSpec::nicholson_variant(death, death + u(rng, 0.1, 2.0), u(rng, 0.2, 2.0))
                    .unwrap()
            },
            {
                let death = u(rng, 0.2, 1.0);
                let half = u(rng, 0.3, 2.0);
                ModelSpec::monod(death, death * half + u(rng, 0.1, 2.0), half).unwrap()
            },
        ]
    }

    #[test]
    fn reaction_vanishes_at_extinction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in catalog(&mut rng) {
            assert_eq!(m.f(0.0, 0.0), 0.0, "{}", m.name());
            assert_eq!(m.h(0.0), 0.0, "{}", m.name());
        }
    }

    #[test]
    fn nicholson_reaction_at_unit_density() {
        // F(1, 0) = -death for the overcompensating model.
        let m = ModelSpec::nicholson(0.8, 1.0, 0.6).unwrap();
        assert!((m.f(1.0, 0.0) + 0.8).abs() < 1e-15);
        assert_eq!(m.h(1.0), 1.0);
    }

    #[test]
    fn logistic_expansion_in_closed_form() {
        let m = ModelSpec::logistic(1.0, 0.5, 0.4).unwrap();
        let e = m.origin_expansion();
        assert_eq!(e.a, 1.0);
        assert_eq!(e.b, 0.0);
        assert_eq!(e.k, 1.0);
        assert!((e.p + 1.0).abs() < 1e-15);
        assert!((e.q + 0.4).abs() < 1e-15);
        assert_eq!(e.r, 0.0);
        assert_eq!(e.l, 0.0);
    }

    #[test]
    fn nicholson_expansion_in_closed_form() {
        let m = ModelSpec::nicholson(0.8, 1.0, 0.6).unwrap();
        let e = m.origin_expansion();
        assert_eq!(e.a, -0.8);
        assert_eq!(e.b, 1.0);
        assert_eq!(e.k, 1.0);
        assert_eq!(e.p, 0.0);
        assert_eq!(e.q, 0.0);
        assert!((e.r + 1.2).abs() < 1e-15);
        assert_eq!(e.l, 0.0);
    }

    /// Centered finite differences at the origin adjudicate every closed-form
    /// coefficient and the pointwise derivative routines.
    #[test]
    fn expansions_and_derivatives_match_finite_differences() {
        let step = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for round in 0..25 {
            for m in catalog(&mut rng) {
                let e = m.origin_expansion();
                let f = |u: f64, v: f64| m.f(u, v);
                let h = |u: f64| m.h(u);

                let a_fd = (f(step, 0.0) - f(-step, 0.0)) / (2.0 * step);
                let b_fd = (f(0.0, step) - f(0.0, -step)) / (2.0 * step);
                let k_fd = (h(step) - h(-step)) / (2.0 * step);
                let p_fd = (f(step, 0.0) - 2.0 * f(0.0, 0.0) + f(-step, 0.0)) / (step * step);
                let r_fd = (f(0.0, step) - 2.0 * f(0.0, 0.0) + f(0.0, -step)) / (step * step);
                let q_fd = (f(step, step) - f(step, -step) - f(-step, step) + f(-step, -step))
                    / (4.0 * step * step);
                let l_fd = (h(step) - 2.0 * h(0.0) + h(-step)) / (step * step);

                let ok = |closed: f64, fd: f64, tag: &str| {
                    let scale = closed.abs().max(1.0);
                    assert!(
                        (closed - fd).abs() <= 1e-6 * scale,
                        "round {round}, {}: {tag} closed {closed} vs fd {fd}",
                        m.name()
                    );
                };
                ok(e.a, a_fd, "a");
                ok(e.b, b_fd, "b");
                ok(e.k, k_fd, "k");
                ok(e.p, p_fd, "p");
                ok(e.q, q_fd, "q");
                ok(e.r, r_fd, "r");
                ok(e.l, l_fd, "l");

                // Pointwise derivatives at interior states.
                for _ in 0..4 {
                    let u = rng.gen_range(0.0..1.5);
                    let v = rng.gen_range(0.0..1.5);
                    let fu_fd = (f(u + step, v) - f(u - step, v)) / (2.0 * step);
                    let fv_fd = (f(u, v + step) - f(u, v - step)) / (2.0 * step);
                    let hp_fd = (h(u + step) - h(u - step)) / (2.0 * step);
                    assert!((m.f_u(u, v) - fu_fd).abs() <= 1e-6 * fu_fd.abs().max(1.0));
                    assert!((m.f_v(u, v) - fv_fd).abs() <= 1e-6 * fv_fd.abs().max(1.0));
                    assert!((m.h_prime(u) - hp_fd).abs() <= 1e-6 * hp_fd.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn self_limiting_witnesses_dominate_the_reaction() {
        // F(u, v) <= F1(u) u on a lattice of admissible states, F1 decreasing
        // with root u_cap, F1 <= rate_cap.
        let models = [
            ModelSpec::logistic(1.0, 0.5, 0.4).unwrap(),
            ModelSpec::logistic_cubic(1.0, 1.5, 0.3, 1.0).unwrap(),
            ModelSpec::food_limited(1.2, 0.5, 0.4, 0.7).unwrap(),
        ];
        for m in models {
            let w = m.assumptions().self_limiting.unwrap();
            // F1 deduced by v = 0 (crowding only helps): F(u,0)/u.
            for i in 1..=40 {
                for j in 0..=40 {
                    let u = w.u_cap * 2.0 * i as f64 / 40.0;
                    let v = w.u_cap * 2.0 * j as f64 / 40.0;
                    let f1 = m.f(u, 0.0) / u;
                    assert!(
                        m.f(u, v) <= f1 * u + 1e-12,
                        "{}: F({u},{v}) above F1 u",
                        m.name()
                    );
                    assert!(f1 <= w.rate_cap + 1e-12);
                }
            }
            assert!(m.f(w.u_cap, 0.0).abs() < 1e-9, "{}: cap not a root", m.name());
            for i in 1..=20 {
                let u = w.u_cap * (1.0 + 0.1 * i as f64);
                assert!(m.f(u, 0.0) < 0.0, "{}: growth past the cap", m.name());
            }
        }
    }

    #[test]
    fn logistic_family_witness_values() {
        let m = ModelSpec::logistic(1.0, 0.5, 0.4).unwrap();
        let w = m.assumptions().self_limiting.unwrap();
        assert_eq!(w.u_cap, 2.0);
        assert_eq!(w.rate_cap, 1.0);

        // boost 1.5, cubic 1: cap = (1.5 + sqrt(2.25 + 4))/2 = 2, rate cap
        // kappa (1 + 1.5^2/4) = 1.5625.
        let m = ModelSpec::logistic_cubic(1.0, 1.5, 0.3, 1.0).unwrap();
        let w = m.assumptions().self_limiting.unwrap();
        assert!((w.u_cap - 2.0).abs() < 1e-14);
        assert!((w.rate_cap - 1.5625).abs() < 1e-14);
    }

    #[test]
    fn death_birth_witnesses_dominate_the_reaction() {
        let models = [
            ModelSpec::nicholson(0.8, 1.0, 0.6).unwrap(),
            ModelSpec::nicholson_variant(0.8, 1.0, 0.6).unwrap(),
            ModelSpec::monod(0.5, 1.0, 0.8).unwrap(),
        ];
        for m in models {
            let w = m.assumptions().death_birth.unwrap();
            for i in 0..=40 {
                for j in 0..=40 {
                    let u = 3.0 * i as f64 / 40.0;
                    let v = 3.0 * j as f64 / 40.0;
                    let f2 = m.f(0.0, v);
                    assert!(
                        m.f(u, v) <= -w.death_rate * u + f2 + 1e-12,
                        "{}: split fails at ({u},{v})",
                        m.name()
                    );
                    assert!(f2 <= w.birth_slope * v + 1e-12);
                    assert!(m.h(u) <= w.feedback_slope * u + 1e-12);
                }
            }
        }
    }

    #[test]
    fn birth_bounds_cap_the_birth_pathway() {
        let m = ModelSpec::nicholson(0.8, 1.0, 0.6).unwrap();
        let BirthBound::Output(k4) = m.assumptions().birth_bound.unwrap() else {
            panic!("nicholson saturates on the output side");
        };
        // sup_v birth v e^{-ricker v} = birth/(ricker e) ~ 0.61313.
        assert!((k4 - 0.6131324019524039).abs() < 1e-12);
        for j in 0..400 {
            let v = j as f64 * 0.05;
            assert!(m.f(0.0, v) <= k4 + 1e-12);
        }

        let m = ModelSpec::nicholson_variant(0.8, 1.0, 0.6).unwrap();
        let BirthBound::Input(k5) = m.assumptions().birth_bound.unwrap() else {
            panic!("variant saturates on the input side");
        };
        assert!((k5 - 1.0 / (0.6 * std::f64::consts::E)).abs() < 1e-14);
        for j in 0..400 {
            let u = j as f64 * 0.05;
            assert!(m.h(u) <= k5 + 1e-12);
        }
    }

    #[test]
    fn amplitude_bounds_close_under_the_feedback_map() {
        // v bound = sup of H over [0, u bound] in every case.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for m in catalog(&mut rng) {
            let (ub, vb) = m.amplitude_bounds();
            assert!(ub > 0.0 && vb > 0.0);
            let sup_h = (0..=1000)
                .map(|i| m.h(ub * i as f64 / 1000.0))
                .fold(0.0, f64::max);
            assert!(sup_h <= vb + 1e-9, "{}: sup H {sup_h} vs {vb}", m.name());
        }
    }

    #[test]
    fn nicholson_amplitude_bound_value() {
        let m = ModelSpec::nicholson(0.8, 1.0, 0.6).unwrap();
        let (ub, vb) = m.amplitude_bounds();
        // birth/(death ricker e) = 1/(0.48 e) ~ 0.7664.
        assert!((ub - 0.7664).abs() < 1e-4, "{ub}");
        assert_eq!(ub, vb);
    }

    #[test]
    fn rejects_unproductive_parameters() {
        assert!(ModelSpec::logistic(0.0, 0.5, 0.4).is_err());
        assert!(ModelSpec::logistic(1.0, -0.5, 0.4).is_err());
        assert!(ModelSpec::nicholson(0.8, 0.8, 0.6).is_err());
        assert!(ModelSpec::nicholson_variant(1.0, 0.9, 0.6).is_err());
        assert!(ModelSpec::monod(0.5, 0.4, 0.8).is_err());
        assert!(ModelSpec::monod(0.5, f64::NAN, 0.8).is_err());
    }

    #[test]
    fn checked_evaluation_snaps_dust_and_rejects_genuine_negativity() {
        let m = ModelSpec::logistic(1.0, 0.5, 0.4).unwrap();
        let u = vec![0.5, -1e-13];
        let v = vec![0.1, 0.0];
        let out = m.eval_f(&u, &v).unwrap();
        assert_eq!(out[1], 0.0);
        assert!(m.eval_f(&[-1e-6], &[0.0]).is_err());
        assert!(m.eval_h(&[-1e-6]).is_err());
        assert_eq!(m.eval_h(&[-1e-13]).unwrap()[0], 0.0);
    }
}
