//! Periodic perturbations `d(t)` and their rates `q(t) = d'(t)`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of uniform samples per period used by [`bound_l`].
pub const BOUND_SAMPLES: usize = 20_000;

/// A T-periodic perturbation with an analytic rate.
pub trait Perturbation: Send + Sync {
    fn d(&self, t: f64) -> f64;
    fn q(&self, t: f64) -> f64;
    fn period(&self) -> f64;
    /// Short human-readable descriptor, stored in trajectory metadata.
    fn describe(&self) -> String;
}

/// `q(t) = L sin(2πt/T + phase)` with the zero-mean antiderivative as `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidPerturbation {
    pub amplitude: f64,
    pub period: f64,
    #[serde(default)]
    pub phase: f64,
}

impl SinusoidPerturbation {
    pub fn new(amplitude: f64, period: f64, phase: f64) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::Domain(format!("period must be positive, got {period}")));
        }
        if !amplitude.is_finite() || !phase.is_finite() {
            return Err(Error::Domain("sinusoid parameters must be finite".into()));
        }
        Ok(SinusoidPerturbation {
            amplitude,
            period,
            phase,
        })
    }
}

impl Perturbation for SinusoidPerturbation {
    fn d(&self, t: f64) -> f64 {
        -self.amplitude * self.period / TAU * (TAU * t / self.period + self.phase).cos()
    }
    fn q(&self, t: f64) -> f64 {
        self.amplitude * (TAU * t / self.period + self.phase).sin()
    }
    fn period(&self) -> f64 {
        self.period
    }
    fn describe(&self) -> String {
        format!(
            "sinusoid(L={}, T={}, phase={})",
            self.amplitude, self.period, self.phase
        )
    }
}

/// No perturbation at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroPerturbation {
    pub period: f64,
}

impl Perturbation for ZeroPerturbation {
    fn d(&self, _t: f64) -> f64 {
        0.0
    }
    fn q(&self, _t: f64) -> f64 {
        0.0
    }
    fn period(&self) -> f64 {
        self.period
    }
    fn describe(&self) -> String {
        "zero".into()
    }
}

/// One cogging harmonic `F sin(θ + ψ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub amplitude: f64,
    pub phase: f64,
}

/// Smoothed Coulomb plus viscous friction plus cogging torque.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrictionCoggingModel {
    /// Coulomb level `T_C` (N·m).
    pub coulomb: f64,
    /// Steepness `α` of the arctan approximation of sgn(ω) (s/rad).
    pub steepness: f64,
    /// Viscous coefficient `β` (N·m·s/rad).
    pub viscous: f64,
    pub harmonics: Vec<Harmonic>,
}

impl Default for FrictionCoggingModel {
    /// Calibration whose constant-speed rate bound `ω_r F1` spans roughly
    /// 6 to 11.5 N·m/s over 12 to 23 rad/s.
    fn default() -> Self {
        FrictionCoggingModel {
            coulomb: 0.4,
            steepness: 100.0,
            viscous: 0.01,
            harmonics: vec![Harmonic {
                amplitude: 0.5,
                phase: 0.0,
            }],
        }
    }
}

impl FrictionCoggingModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.steepness > 0.0) {
            return Err(Error::Domain("friction steepness must be positive".into()));
        }
        if !(self.viscous >= 0.0) || !(self.coulomb >= 0.0) {
            return Err(Error::Domain("friction coefficients must be non-negative".into()));
        }
        if self
            .harmonics
            .iter()
            .any(|h| !h.amplitude.is_finite() || !h.phase.is_finite())
        {
            return Err(Error::Domain("cogging harmonics must be finite".into()));
        }
        Ok(())
    }

    pub fn cogging_sum(&self) -> f64 {
        self.harmonics.iter().map(|h| h.amplitude).sum()
    }

    /// Torque at velocity `omega` and position `theta`.
    pub fn torque(&self, omega: f64, theta: f64) -> f64 {
        let coulomb = self.coulomb * 2.0 / PI * (self.steepness * omega).atan();
        let cogging: f64 = self
            .harmonics
            .iter()
            .map(|h| h.amplitude * (theta + h.phase).sin())
            .sum();
        coulomb + self.viscous * omega + cogging
    }

    /// Time derivative of [`Self::torque`] along a motion with acceleration `omega_dot`.
    pub fn torque_rate(&self, omega: f64, theta: f64, omega_dot: f64) -> f64 {
        let a = self.steepness;
        let slope = 2.0 * self.coulomb * a / (PI * (1.0 + a * a * omega * omega)) + self.viscous;
        let cogging: f64 = self
            .harmonics
            .iter()
            .map(|h| h.amplitude * (theta + h.phase).cos())
            .sum();
        slope * omega_dot + omega * cogging
    }
}

/// Reference motion: velocity, position and acceleration as functions of time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionProfile {
    /// `ω = ω_r`, `θ = ω_r t + θ0`.
    Constant {
        omega: f64,
        #[serde(default)]
        theta0: f64,
    },
    /// `ω = A/(2πf) cos(2πft)`, which keeps the acceleration peak at `A` for every `f`.
    Sinusoidal {
        accel_peak: f64,
        frequency: f64,
        #[serde(default)]
        theta0: f64,
    },
}

impl MotionProfile {
    pub fn constant(omega: f64) -> Self {
        MotionProfile::Constant { omega, theta0: 0.0 }
    }

    pub fn sinusoidal(accel_peak: f64, frequency: f64) -> Self {
        MotionProfile::Sinusoidal {
            accel_peak,
            frequency,
            theta0: 0.0,
        }
    }

    pub fn omega(&self, t: f64) -> f64 {
        match *self {
            MotionProfile::Constant { omega, .. } => omega,
            MotionProfile::Sinusoidal {
                accel_peak, frequency, ..
            } => accel_peak / (TAU * frequency) * (TAU * frequency * t).cos(),
        }
    }

    pub fn theta(&self, t: f64) -> f64 {
        match *self {
            MotionProfile::Constant { omega, theta0 } => omega * t + theta0,
            MotionProfile::Sinusoidal {
                accel_peak,
                frequency,
                theta0,
            } => {
                let w = TAU * frequency;
                accel_peak / (w * w) * (w * t).sin() + theta0
            }
        }
    }

    pub fn omega_dot(&self, t: f64) -> f64 {
        match *self {
            MotionProfile::Constant { .. } => 0.0,
            MotionProfile::Sinusoidal {
                accel_peak, frequency, ..
            } => -accel_peak * (TAU * frequency * t).sin(),
        }
    }

    /// Period of the perturbation the profile induces through the cogging model.
    pub fn perturbation_period(&self) -> Result<f64> {
        match *self {
            MotionProfile::Constant { omega, .. } => {
                if omega == 0.0 || !omega.is_finite() {
                    Err(Error::Domain("constant-speed profile needs a nonzero speed".into()))
                } else {
                    Ok(TAU / omega.abs())
                }
            }
            MotionProfile::Sinusoidal { frequency, .. } => {
                if frequency > 0.0 && frequency.is_finite() {
                    Ok(1.0 / frequency)
                } else {
                    Err(Error::Domain("sinusoidal profile needs a positive frequency".into()))
                }
            }
        }
    }
}

/// `d(t)` of a friction/cogging model evaluated along a motion profile.
pub fn eval_d(model: &FrictionCoggingModel, profile: &MotionProfile, t: f64) -> f64 {
    model.torque(profile.omega(t), profile.theta(t))
}

/// `q(t) = d'(t)` of a friction/cogging model along a motion profile.
pub fn eval_q(model: &FrictionCoggingModel, profile: &MotionProfile, t: f64) -> f64 {
    model.torque_rate(profile.omega(t), profile.theta(t), profile.omega_dot(t))
}

/// A friction/cogging model driven by a prescribed motion, as a [`Perturbation`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProfilePerturbation {
    pub model: FrictionCoggingModel,
    pub profile: MotionProfile,
    period: f64,
}

impl ProfilePerturbation {
    pub fn new(model: FrictionCoggingModel, profile: MotionProfile) -> Result<Self> {
        model.validate()?;
        let period = profile.perturbation_period()?;
        Ok(ProfilePerturbation { model, profile, period })
    }
}

impl Perturbation for ProfilePerturbation {
    fn d(&self, t: f64) -> f64 {
        eval_d(&self.model, &self.profile, t)
    }
    fn q(&self, t: f64) -> f64 {
        eval_q(&self.model, &self.profile, t)
    }
    fn period(&self) -> f64 {
        self.period
    }
    fn describe(&self) -> String {
        format!("friction_cogging({:?})", self.profile)
    }
}

/// Supremum of `|q|` over one period by dense sampling plus one local refinement.
pub fn bound_l(q: impl Fn(f64) -> f64, period: f64) -> Result<f64> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::Domain(format!("period must be positive, got {period}")));
    }
    let h = period / BOUND_SAMPLES as f64;
    let mut best = (0.0_f64, 0.0_f64);
    for i in 0..BOUND_SAMPLES {
        let t = i as f64 * h;
        let v = q(t);
        if !v.is_finite() {
            return Err(Error::Signal(format!("non-finite rate sample at t = {t}")));
        }
        if v.abs() > best.1 {
            best = (t, v.abs());
        }
    }
    // refine on [t* - h, t* + h]
    let fine = 1000;
    let hf = 2.0 * h / fine as f64;
    for i in 0..=fine {
        let t = best.0 - h + i as f64 * hf;
        let v = q(t);
        if !v.is_finite() {
            return Err(Error::Signal(format!("non-finite rate sample at t = {t}")));
        }
        best.1 = best.1.max(v.abs());
    }
    Ok(best.1)
}

/// Period average `(1/T) ∫ q dt` by composite Simpson with interval doubling.
pub fn mean_rate(q: impl Fn(f64) -> f64, period: f64) -> Result<f64> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::Domain(format!("period must be positive, got {period}")));
    }
    const REL_TOL: f64 = 1e-6;
    let simpson = |n: usize| -> (f64, f64) {
        let h = period / n as f64;
        let (mut s, mut s_abs) = (0.0, 0.0);
        for i in 0..=n {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let v = q(i as f64 * h);
            s += w * v;
            s_abs += w * v.abs();
        }
        (s * h / 3.0, s_abs * h / 3.0)
    };
    let mut n = 256;
    let (mut prev, _) = simpson(n);
    loop {
        n *= 2;
        let (cur, scale) = simpson(n);
        if !cur.is_finite() {
            return Err(Error::Signal("non-finite rate samples".into()));
        }
        // the mean may be exactly zero, so the tolerance is relative to ∫|q|
        if (cur - prev).abs() <= REL_TOL * scale.max(f64::MIN_POSITIVE) || n >= 1 << 22 {
            return Ok(cur / period);
        }
        prev = cur;
    }
}

/// Rate bound `|ω_r Σ F_i|` and period `2π/|ω_r|` at constant speed.
pub fn constant_speed_characterization(model: &FrictionCoggingModel, omega_r: f64) -> Result<(f64, f64)> {
    if omega_r == 0.0 || !omega_r.is_finite() {
        return Err(Error::Domain("constant speed must be nonzero".into()));
    }
    Ok(((omega_r * model.cogging_sum()).abs(), TAU / omega_r.abs()))
}
