//! Vector fields and control laws of the super-twisting loop.
//!
//! The closed loop is written in the error/integral coordinates
//! `x1 = y`, `x2 = -k2 ∫ s(y) dτ + d(t)`, where `s` is either the signum
//! function or its boundary-layer saturation `phi_delta`. Everything here is
//! a pure function of its arguments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary-layer width used when no accuracy spec is active.
pub const DEFAULT_DELTA: f64 = 1e-4;

/// Floor on `|w1|` below which the phase-coordinate form is refused.
pub const PHASE_SINGULARITY_FLOOR: f64 = 1e-9;

/// Floor on `|g(t, y)|` used by [`feedback_linearize`].
pub const DEFAULT_INPUT_GAIN_FLOOR: f64 = 1e-12;

/// Boundary-layer width for an accuracy requirement `eta`.
pub fn default_delta(eta: f64) -> f64 {
    DEFAULT_DELTA.min(eta * 1e-3)
}

/// Controller gains plus the regularization width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub k1: f64,
    pub k2: f64,
    pub delta: f64,
}

impl Gains {
    pub fn new(k1: f64, k2: f64, delta: f64) -> Result<Self> {
        let g = Gains { k1, k2, delta };
        g.validate()?;
        Ok(g)
    }

    /// Gains with the default boundary layer.
    pub fn with_default_delta(k1: f64, k2: f64) -> Result<Self> {
        Self::new(k1, k2, DEFAULT_DELTA)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.k1) || !ok(self.k2) || !ok(self.delta) {
            return Err(Error::Domain(format!(
                "gains must be finite and positive (k1 = {}, k2 = {}, delta = {})",
                self.k1, self.k2, self.delta
            )));
        }
        Ok(())
    }
}

/// Closed-loop state in error/integral coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
}

impl SimState {
    pub fn new(t: f64, x1: f64, x2: f64) -> Self {
        SimState { t, x1, x2 }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x1.is_finite() && self.x2.is_finite()
    }
}

/// State in phase coordinates `(w1, w2) = (x1, dx1/dt)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseState {
    pub w1: f64,
    pub w2: f64,
}

/// Drift and input gain of the plant `y' = h(t, y) + g(t, y) u0 + d(t)`.
pub trait PlantFunctions {
    fn h(&self, t: f64, y: f64) -> f64;
    fn g(&self, t: f64, y: f64) -> f64;
}

/// Plant described by two closures.
pub struct FnPlant<H, G> {
    pub h: H,
    pub g: G,
}

impl<H, G> PlantFunctions for FnPlant<H, G>
where
    H: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> f64,
{
    fn h(&self, t: f64, y: f64) -> f64 {
        (self.h)(t, y)
    }
    fn g(&self, t: f64, y: f64) -> f64 {
        (self.g)(t, y)
    }
}

/// Which switching function the loop uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Switching {
    Signum,
    Regularized,
}

/// Boundary-layer saturation: `1` above `delta`, `-1` below `-delta`, linear in between.
pub fn phi_delta(q: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!(
            "boundary-layer width must be positive, got {delta}"
        )));
    }
    Ok(phi_unchecked(q, delta))
}

#[inline]
pub(crate) fn phi_unchecked(q: f64, delta: f64) -> f64 {
    if q >= delta {
        1.0
    } else if q <= -delta {
        -1.0
    } else {
        q / delta
    }
}

/// Signum with `sgn(0) = 0`.
#[inline]
pub fn sgn(q: f64) -> f64 {
    if q > 0.0 {
        1.0
    } else if q < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn switch(q: f64, gains: &Gains, mode: Switching) -> f64 {
    match mode {
        Switching::Signum => sgn(q),
        Switching::Regularized => phi_unchecked(q, gains.delta),
    }
}

/// Super-twisting law `u = -k1 |x1|^(1/2) s(x1) + integral_state`.
///
/// The integral state `∫ -k2 s(x1) dτ` belongs to the caller.
pub fn control_u(x1: f64, integral_state: f64, gains: &Gains, mode: Switching) -> f64 {
    -gains.k1 * x1.abs().sqrt() * switch(x1, gains, mode) + integral_state
}

/// Rate of the controller's integral state.
#[inline]
pub fn integral_rate(x1: f64, gains: &Gains, mode: Switching) -> f64 {
    -gains.k2 * switch(x1, gains, mode)
}

/// Feedback-linearizing outer law `u0 = (u - h) / g`.
pub fn feedback_linearize(u: f64, plant: &impl PlantFunctions, t: f64, y: f64) -> Result<f64> {
    feedback_linearize_with_floor(u, plant, t, y, DEFAULT_INPUT_GAIN_FLOOR)
}

pub fn feedback_linearize_with_floor(u: f64, plant: &impl PlantFunctions, t: f64, y: f64, floor: f64) -> Result<f64> {
    let g = plant.g(t, y);
    if !(g.abs() >= floor) {
        return Err(Error::SingularInputGain { g, floor });
    }
    Ok((u - plant.h(t, y)) / g)
}

#[inline]
fn field(x1: f64, x2: f64, gains: &Gains, q: f64, mode: Switching) -> (f64, f64) {
    let s = switch(x1, gains, mode);
    (-gains.k1 * x1.abs().sqrt() * s + x2, -gains.k2 * s + q)
}

/// Regularized closed loop.
pub fn eval_regularized(state: &SimState, gains: &Gains, q_at_t: f64) -> (f64, f64) {
    field(state.x1, state.x2, gains, q_at_t, Switching::Regularized)
}

/// Discontinuous closed loop (signum switching, `sgn(0) = 0`).
pub fn eval_discontinuous(state: &SimState, gains: &Gains, q_at_t: f64) -> (f64, f64) {
    field(state.x1, state.x2, gains, q_at_t, Switching::Signum)
}

/// Closed loop with a selectable switching function.
pub fn eval_closed_loop(state: &SimState, gains: &Gains, q_at_t: f64, mode: Switching) -> (f64, f64) {
    field(state.x1, state.x2, gains, q_at_t, mode)
}

/// Period-averaged field; `mean_q` is the period average of the perturbation rate.
pub fn eval_averaged(chi: &SimState, gains: &Gains, mean_q: f64) -> (f64, f64) {
    field(chi.x1, chi.x2, gains, mean_q, Switching::Regularized)
}

/// Phase-coordinate form, refused within [`PHASE_SINGULARITY_FLOOR`] of `w1 = 0`.
pub fn eval_phase(state: &PhaseState, gains: &Gains, q_at_t: f64) -> Result<(f64, f64)> {
    eval_phase_with_floor(state, gains, q_at_t, PHASE_SINGULARITY_FLOOR)
}

pub fn eval_phase_with_floor(state: &PhaseState, gains: &Gains, q_at_t: f64, floor: f64) -> Result<(f64, f64)> {
    let w1 = state.w1;
    if !(w1.abs() >= floor) {
        return Err(Error::NearSingular { w1: w1.abs(), floor });
    }
    let dw2 = -0.5 * gains.k1 * state.w2 / w1.abs().sqrt() - gains.k2 * sgn(w1) + q_at_t;
    Ok((state.w2, dw2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn applied_gains() -> Gains {
        Gains::new(0.9, 11.65, 1e-4).unwrap()
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi_delta(0.5, 1.0).unwrap(), 0.5);
        assert_eq!(phi_delta(2.0, 1.0).unwrap(), 1.0);
        assert_eq!(phi_delta(-0.5, 0.5).unwrap(), -1.0);
        assert!(matches!(phi_delta(0.1, 0.0), Err(Error::Domain(_))));
        assert!(matches!(phi_delta(0.1, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn control_examples() {
        let g = Gains::new(0.9, 1.0, 1e-4).unwrap();
        assert_eq!(control_u(0.0, 0.0, &g, Switching::Regularized), 0.0);
        assert_relative_eq!(control_u(1.0, 0.0, &g, Switching::Regularized), -0.9);
        assert_relative_eq!(control_u(4.0, 1.0, &g, Switching::Signum), -0.8, epsilon = 1e-12);
    }

    #[test]
    fn feedback_linearization() {
        let id = FnPlant {
            h: |_, _| 0.0,
            g: |_, _| 1.0,
        };
        assert_eq!(feedback_linearize(5.0, &id, 0.0, 0.0).unwrap(), 5.0);
        let p = FnPlant {
            h: |_, _| 2.0,
            g: |_, _| 2.0,
        };
        assert_eq!(feedback_linearize(0.0, &p, 0.0, 0.0).unwrap(), -1.0);
        let z = FnPlant {
            h: |_, _| 0.0,
            g: |_, _| 0.0,
        };
        assert!(matches!(
            feedback_linearize(1.0, &z, 0.0, 0.0),
            Err(Error::SingularInputGain { .. })
        ));
    }

    #[test]
    fn regularized_examples() {
        let g = applied_gains();
        assert_eq!(eval_regularized(&SimState::new(0.0, 0.0, 0.0), &g, 0.0), (0.0, 0.0));
        let (a, b) = eval_regularized(&SimState::new(0.0, 1.0, 0.0), &g, 0.0);
        assert_relative_eq!(a, -0.9);
        assert_relative_eq!(b, -11.65);
        let l = 12.0;
        let x1 = g.delta / 2.0;
        let (a, b) = eval_regularized(&SimState::new(0.0, x1, 1.0), &g, l);
        assert_relative_eq!(a, -0.9 * x1.sqrt() * 0.5 + 1.0, epsilon = 1e-15);
        assert_relative_eq!(b, -0.5 * 11.65 + l, epsilon = 1e-12);
    }

    #[test]
    fn discontinuous_examples() {
        let g = applied_gains();
        assert_eq!(
            eval_discontinuous(&SimState::new(0.0, 1.0, 0.0), &g, 0.0),
            (-0.9, -11.65)
        );
        assert_eq!(
            eval_discontinuous(&SimState::new(0.0, -1.0, 0.0), &g, 0.0),
            (0.9, 11.65)
        );
        assert_eq!(eval_discontinuous(&SimState::new(0.0, 0.0, 3.0), &g, 2.5), (3.0, 2.5));
    }

    #[test]
    fn averaged_matches_constant_rate() {
        let g = applied_gains();
        let s = SimState::new(0.3, 0.2, -1.0);
        assert_eq!(eval_averaged(&s, &g, 4.0), eval_regularized(&s, &g, 4.0));
        assert_eq!(eval_averaged(&SimState::default(), &g, 0.0), (0.0, 0.0));
    }

    #[test]
    fn averaged_is_period_mean_of_regularized() {
        // Simpson quadrature of the regularized field over one period of q.
        let g = applied_gains();
        let (amp, period) = (12.0, 0.3);
        let chi = SimState::new(0.0, 0.05, 0.7);
        let n = 2000;
        let h = period / n as f64;
        let (mut m1, mut m2) = (0.0, 0.0);
        for i in 0..=n {
            let t = i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let q = amp * (2.0 * std::f64::consts::PI * t / period).sin();
            let (a, b) = eval_regularized(&chi, &g, q);
            m1 += w * a;
            m2 += w * b;
        }
        m1 *= h / 3.0 / period;
        m2 *= h / 3.0 / period;
        let (a, b) = eval_averaged(&chi, &g, 0.0);
        assert_relative_eq!(a, m1, epsilon = 1e-10);
        assert_relative_eq!(b, m2, epsilon = 1e-10);
    }

    #[test]
    fn phase_examples() {
        let g = applied_gains();
        assert_eq!(
            eval_phase(&PhaseState { w1: 1.0, w2: 0.0 }, &g, 0.0).unwrap(),
            (0.0, -11.65)
        );
        let g2 = Gains::new(2.0, 1.0, 1e-4).unwrap();
        assert_eq!(
            eval_phase(&PhaseState { w1: 1.0, w2: 2.0 }, &g2, 0.0).unwrap(),
            (2.0, -3.0)
        );
        assert!(matches!(
            eval_phase(&PhaseState { w1: 1e-12, w2: 0.0 }, &g, 0.0),
            Err(Error::NearSingular { .. })
        ));
    }

    #[test]
    fn invalid_gains_rejected() {
        assert!(Gains::new(0.0, 1.0, 1e-4).is_err());
        assert!(Gains::new(1.0, -1.0, 1e-4).is_err());
        assert!(Gains::new(1.0, 1.0, 0.0).is_err());
        assert!(Gains::new(f64::NAN, 1.0, 1e-4).is_err());
    }

    #[test]
    fn default_delta_follows_accuracy() {
        assert_eq!(default_delta(0.2), 1e-4);
        assert_relative_eq!(default_delta(0.05), 5e-5);
    }

    proptest! {
        #[test]
        fn phi_is_odd_bounded_monotone(q in -10.0f64..10.0, dq in 0.0f64..1.0, delta in 1e-6f64..2.0) {
            let a = phi_delta(q, delta).unwrap();
            prop_assert_eq!(a, -phi_delta(-q, delta).unwrap());
            prop_assert!(a.abs() <= 1.0);
            prop_assert!(phi_delta(q + dq, delta).unwrap() >= a);
            if q.abs() >= delta {
                prop_assert_eq!(a, sgn(q));
            }
        }

        #[test]
        fn regularized_is_odd(x1 in -5.0f64..5.0, x2 in -5.0f64..5.0, q in -20.0f64..20.0,
                              k1 in 0.1f64..10.0, k2 in 0.1f64..20.0, delta in 1e-6f64..0.5) {
            let g = Gains::new(k1, k2, delta).unwrap();
            let (a, b) = eval_regularized(&SimState::new(0.0, x1, x2), &g, q);
            let (c, d) = eval_regularized(&SimState::new(0.0, -x1, -x2), &g, -q);
            prop_assert_eq!(a, -c);
            prop_assert_eq!(b, -d);
        }

        #[test]
        fn regularized_equals_discontinuous_outside_layer(x1 in prop_oneof![-5.0f64..-1e-3, 1e-3f64..5.0],
                                                          x2 in -5.0f64..5.0, q in -20.0f64..20.0) {
            let mut g = applied_gains();
            let s = SimState::new(0.0, x1, x2);
            for delta in [1e-1, 1e-2, 1e-3, 1e-4] {
                g.delta = delta;
                if delta < x1.abs() {
                    prop_assert_eq!(eval_regularized(&s, &g, q), eval_discontinuous(&s, &g, q));
                }
            }
        }
    }
}
