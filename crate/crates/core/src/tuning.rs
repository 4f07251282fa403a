//! Closed-form gain and bound calculus, and accuracy-driven gain selection.
//!
//! Notation: `L` bounds the perturbation rate, `T` is its period, `n` is the
//! fraction of the period spent in one quadrant of the phase plane and `eta`
//! is the required bound on `|x1|`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{default_delta, Gains, DEFAULT_DELTA};
use crate::error::{Error, Result};

/// Margin `k2 / L` used for finite-time gains unless overridden.
pub const DEFAULT_MARGIN: f64 = 1.1;

/// Period fraction used for bound estimates unless overridden.
pub const DEFAULT_PERIOD_FRACTION: f64 = 0.5;

/// Coefficient of the `k1 ≥ c √(k2 + L)` finite-time condition.
pub const K1_COEFFICIENT: f64 = 1.8;

/// Grid resolution of [`optimize_gains`] along each axis.
pub const GRID_POINTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracySpec {
    pub eta: f64,
    #[serde(default = "default_n")]
    pub n: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "T")]
    pub period: f64,
}

fn default_n() -> f64 {
    DEFAULT_PERIOD_FRACTION
}

impl AccuracySpec {
    pub fn new(eta: f64, n: f64, l: f64, period: f64) -> Result<Self> {
        let s = AccuracySpec { eta, n, l, period };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Domain(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.n > 0.0 && self.n <= 0.5) {
            return Err(Error::Domain(format!("n must lie in (0, 0.5], got {}", self.n)));
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(Error::Domain(format!("L must be positive, got {}", self.l)));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::Domain(format!("T must be positive, got {}", self.period)));
        }
        Ok(())
    }
}

/// Gains satisfying the finite-time conditions: `k2 = margin·L`, `k1 = 1.8 √(k2 + L)`.
pub fn finite_time_gains(l: f64, margin: f64) -> Result<Gains> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::Domain(format!("rate bound must be positive, got {l}")));
    }
    if !(margin > 1.0 && margin.is_finite()) {
        return Err(Error::Domain(format!(
            "margin must exceed 1 so that k2 > L, got {margin}"
        )));
    }
    let k2 = margin * l;
    Gains::new(K1_COEFFICIENT * (k2 + l).sqrt(), k2, DEFAULT_DELTA)
}

/// Convergence conditions of the period-averaged loop.
///
/// Sufficient only: loops violating them may still settle on a limit cycle.
pub fn check_averaged_conditions(gains: &Gains, mean_q: f64) -> bool {
    let m = mean_q.abs();
    gains.k2 > m && gains.k1 >= K1_COEFFICIENT * (gains.k2 + m).sqrt()
}

/// Limit-cycle width estimate `½ (k2 + L) n² T²`.
pub fn bound_eq16(k2: f64, l: f64, n: f64, period: f64) -> f64 {
    0.5 * (k2 + l) * n * n * period * period
}

/// `k1 > √(2(L - k2))`; only meaningful in the under-tuned regime `L > k2`.
pub fn check_k1_condition(k1: f64, k2: f64, l: f64) -> Result<bool> {
    if !(l > k2) {
        return Err(Error::Regime(format!(
            "k2 = {k2} is not below L = {l}; use the finite-time analysis"
        )));
    }
    Ok(k1 > (2.0 * (l - k2)).sqrt())
}

/// Under-tuned bound `k1⁴ (L - k2)² n² T² / [k1² - 2(L - k2)]²`.
pub fn bound_w1(k1: f64, k2: f64, l: f64, n: f64, period: f64) -> Result<f64> {
    if !check_k1_condition(k1, k2, l)? {
        return Err(Error::Regime(format!(
            "k1 = {k1} does not exceed √(2(L - k2)) = {}",
            (2.0 * (l - k2)).sqrt()
        )));
    }
    let a = l - k2;
    let den = k1 * k1 - 2.0 * a;
    Ok(k1.powi(4) * a * a * n * n * period * period / (den * den))
}

/// Smallest admissible `k2` for a fixed `k1`: `L - √η k1² / (2√η + k1 n T)`.
pub fn tune_k2(k1: f64, spec: &AccuracySpec) -> Result<f64> {
    spec.validate()?;
    if !(k1 > 0.0 && k1.is_finite()) {
        return Err(Error::Domain(format!("k1 must be positive, got {k1}")));
    }
    let k2 = k2_lower_bound(k1, spec);
    if !(k2 > 0.0) {
        return Err(Error::Infeasible(format!("k1 = {k1} requires k2 = {k2} ≤ 0")));
    }
    Ok(k2)
}

#[inline]
fn k2_lower_bound(k1: f64, spec: &AccuracySpec) -> f64 {
    let se = spec.eta.sqrt();
    spec.l - se * k1 * k1 / (2.0 * se + k1 * spec.n * spec.period)
}

/// Quantity minimized by [`optimize_gains`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Proportional gain, i.e. actuation effort.
    K1,
    /// Integral gain, which sets the chatter level; with `k1` capped at the
    /// actuator limit this reproduces the "fix k1, solve for k2" procedure.
    #[default]
    K2,
    /// The under-tuned bound `W1` itself.
    Bound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    k1: f64,
    k2: f64,
    w1: f64,
}

fn candidate(spec: &AccuracySpec, k1: f64, s: f64) -> Option<Candidate> {
    let lo = k2_lower_bound(k1, spec);
    let k2 = lo + (spec.l - lo) * s;
    if !(k2 > 0.0 && k2 < spec.l) {
        return None;
    }
    let w1 = bound_w1(k1, k2, spec.l, spec.n, spec.period).ok()?;
    (w1 <= spec.eta).then_some(Candidate { k1, k2, w1 })
}

fn key(c: &Candidate, objective: Objective) -> (f64, f64, f64) {
    let v = match objective {
        Objective::K1 => c.k1,
        Objective::K2 => c.k2,
        Objective::Bound => c.w1,
    };
    (v, c.k1, c.k2)
}

fn better(a: &Candidate, b: &Candidate, objective: Objective) -> bool {
    key(a, objective).partial_cmp(&key(b, objective)) == Some(std::cmp::Ordering::Less)
}

/// One pass over a `(k1, s)` grid, where `s ∈ [0, 1)` places `k2` between the
/// lower bound for that `k1` and `L`.
fn search(
    spec: &AccuracySpec,
    objective: Objective,
    k1_axis: &[f64],
    s_axis: &[f64],
) -> Option<(usize, usize, Candidate)> {
    let mut best: Option<(usize, usize, Candidate)> = None;
    for (i, &k1) in k1_axis.iter().enumerate() {
        for (j, &s) in s_axis.iter().enumerate() {
            if let Some(c) = candidate(spec, k1, s) {
                if best.as_ref().is_none_or(|(_, _, b)| better(&c, b, objective)) {
                    best = Some((i, j, c));
                }
            }
        }
    }
    best
}

/// Coarse grid of [`optimize_gains`]: `k1 = k1_max·i/200`, `s = j/200`.
pub fn coarse_axes(k1_max: f64) -> (Vec<f64>, Vec<f64>) {
    let k1 = (1..=GRID_POINTS)
        .map(|i| k1_max * i as f64 / GRID_POINTS as f64)
        .collect();
    let s = (0..GRID_POINTS).map(|j| j as f64 / GRID_POINTS as f64).collect();
    (k1, s)
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Grid-plus-refinement search for gains meeting `W1 ≤ η`.
///
/// For every `k1` on the grid, `k2` ranges from the closed-form lower bound
/// of [`tune_k2`] up to (excluding) `L`. Ties go to smaller `k1`, then smaller `k2`.
pub fn optimize_gains(spec: &AccuracySpec, k1_max: f64, objective: Objective) -> Result<Gains> {
    spec.validate()?;
    if !(k1_max > 0.0 && k1_max.is_finite()) {
        return Err(Error::Domain(format!("k1_max must be positive, got {k1_max}")));
    }
    let (k1_axis, s_axis) = coarse_axes(k1_max);
    let (i, j, coarse) = search(spec, objective, &k1_axis, &s_axis)
        .ok_or_else(|| Error::Infeasible(format!("no gains with k1 ≤ {k1_max} meet eta = {}", spec.eta)))?;

    let k1_lo = if i == 0 { k1_axis[0] * 0.5 } else { k1_axis[i - 1] };
    let k1_hi = k1_axis.get(i + 1).copied().unwrap_or(k1_max);
    let s_lo = if j == 0 { 0.0 } else { s_axis[j - 1] };
    let s_hi = s_axis.get(j + 1).copied().unwrap_or(s_axis[j]);
    // odd point counts keep the coarse optimum on the refined grid
    let refined = search(
        spec,
        objective,
        &linspace(k1_lo, k1_hi, GRID_POINTS + 1),
        &linspace(s_lo, s_hi, GRID_POINTS + 1),
    );
    let best = match refined {
        Some((_, _, c)) if !better(&coarse, &c, objective) => c,
        _ => coarse,
    };
    Gains::new(best.k1, best.k2, default_delta(spec.eta))
}
