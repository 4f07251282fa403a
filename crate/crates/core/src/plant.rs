//! Virtual motor experiment: rotor dynamics under the super-twisting speed
//! loop, and reconstruction of the disturbance torque from measured signals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, FnPlant, Gains, Switching};
use crate::error::{Error, Result};
use crate::integrator::{self, IntegrationConfig, OdeSystem, Sample, Trajectory, TrajectoryMeta};
use crate::signals::{FrictionCoggingModel, MotionProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorModel {
    /// Rotor inertia `J` (kg·m²).
    #[serde(default = "default_inertia")]
    pub inertia: f64,
    #[serde(default)]
    pub friction_cogging: FrictionCoggingModel,
    /// Encoder position LSB (rad); zero disables quantization.
    #[serde(default)]
    pub encoder_quantum: f64,
    /// Backward-difference window (samples) for velocity from quantized position.
    #[serde(default = "default_window")]
    pub velocity_estimation_window: usize,
}

fn default_inertia() -> f64 {
    1.0
}

fn default_window() -> usize {
    1
}

impl Default for MotorModel {
    fn default() -> Self {
        MotorModel {
            inertia: 1.0,
            friction_cogging: FrictionCoggingModel::default(),
            encoder_quantum: 0.0,
            velocity_estimation_window: 1,
        }
    }
}

impl MotorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.inertia > 0.0 && self.inertia.is_finite()) {
            return Err(Error::Domain(format!("inertia must be positive, got {}", self.inertia)));
        }
        if !(self.encoder_quantum >= 0.0) {
            return Err(Error::Domain("encoder quantum must be non-negative".into()));
        }
        if self.velocity_estimation_window == 0 {
            return Err(Error::Domain("velocity estimation window must be at least 1".into()));
        }
        self.friction_cogging.validate()
    }
}

/// Gains of the super-twisting differentiator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferentiatorConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Lipschitz bound of the derivative being estimated.
    pub rate_bound: f64,
}

impl DifferentiatorConfig {
    /// `λ1 = 1.5 √C`, `λ2 = 1.1 C` for a derivative with Lipschitz constant `C`.
    pub fn for_rate_bound(rate_bound: f64) -> Result<Self> {
        if !(rate_bound > 0.0 && rate_bound.is_finite()) {
            return Err(Error::Domain(format!("rate bound must be positive, got {rate_bound}")));
        }
        Ok(DifferentiatorConfig {
            lambda1: 1.5 * rate_bound.sqrt(),
            lambda2: 1.1 * rate_bound,
            rate_bound,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 > 0.0 && self.lambda2 > 0.0) {
            return Err(Error::Domain("differentiator gains must be positive".into()));
        }
        Ok(())
    }
}

/// Differentiator settings for velocity and for the reconstructed torque.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    pub velocity: DifferentiatorConfig,
    pub torque: DifferentiatorConfig,
}

/// Rotor position and velocity recorded alongside a motor-loop trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MotorChannels {
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
}

/// A motor-loop run. The trajectory stores the speed error as `x1`, the
/// applied torque `u0` as `u`, and the true friction/cogging torque and its rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MotorRun {
    pub trajectory: Trajectory,
    pub channels: MotorChannels,
}

struct MotorLoop<'a> {
    motor: &'a MotorModel,
    reference: MotionProfile,
    gains: Gains,
}

impl MotorLoop<'_> {
    // state = [theta, omega, integral]
    fn applied(&self, t: f64, x: &[f64; 3]) -> (f64, f64, f64) {
        let e = x[1] - self.reference.omega(t);
        let u = dynamics::control_u(e, x[2], &self.gains, Switching::Regularized);
        let j = self.motor.inertia;
        let wr_dot = self.reference.omega_dot(t);
        let plant = FnPlant {
            h: move |_, _| -wr_dot,
            g: move |_, _| 1.0 / j,
        };
        // g = 1/J is never below the floor for a validated motor
        let u0 = dynamics::feedback_linearize(u, &plant, t, e).unwrap_or(f64::NAN);
        let d = self.motor.friction_cogging.torque(x[1], x[0]);
        (e, u0, d)
    }
}

impl OdeSystem<3> for MotorLoop<'_> {
    fn derivative(&self, t: f64, x: &[f64; 3]) -> [f64; 3] {
        let (e, u0, d) = self.applied(t, x);
        [
            x[1],
            (u0 + d) / self.motor.inertia,
            dynamics::integral_rate(e, &self.gains, Switching::Regularized),
        ]
    }

    fn observe(&self, t: f64, x: &[f64; 3]) -> Sample {
        let (e, u0, d) = self.applied(t, x);
        let omega_dot = (u0 + d) / self.motor.inertia;
        Sample {
            t,
            x1: e,
            x2: x[2] + d / self.motor.inertia,
            u: u0,
            d,
            q: self.motor.friction_cogging.torque_rate(x[1], x[0], omega_dot),
        }
    }
}

/// Simulates the motor speed loop tracking `reference`.
///
/// The rotor starts on the reference with the integral state pre-loaded to
/// cancel the initial disturbance, plus the given initial speed error.
pub fn simulate_motor_loop_from(
    motor: &MotorModel,
    reference: &MotionProfile,
    gains: &Gains,
    cfg: &IntegrationConfig,
    initial_error: f64,
) -> Result<MotorRun> {
    motor.validate()?;
    gains.validate()?;
    if let Ok(period) = reference.perturbation_period() {
        cfg.check_resolution(period);
    }
    let sys = MotorLoop {
        motor,
        reference: *reference,
        gains: *gains,
    };
    let theta0 = reference.theta(0.0);
    let omega0 = reference.omega(0.0) + initial_error;
    let z0 = -motor.friction_cogging.torque(omega0, theta0) / motor.inertia;
    let states = integrator::integrate_states(&sys, 0.0, [theta0, omega0, z0], cfg)?;
    let mut samples = Vec::with_capacity(states.len());
    let mut channels = MotorChannels::default();
    for (t, x) in &states {
        let s = sys.observe(*t, x);
        if ![s.u, s.d, s.q].iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { t: *t });
        }
        samples.push(s);
        channels.theta.push(x[0]);
        channels.omega.push(x[1]);
    }
    let meta = TrajectoryMeta {
        gains: Some(*gains),
        dt: cfg.dt,
        record_stride: cfg.record_stride,
        perturbation: format!("motor({reference:?})"),
    };
    Ok(MotorRun {
        trajectory: Trajectory { samples, meta },
        channels,
    })
}

/// [`simulate_motor_loop_from`] with zero initial error.
pub fn simulate_motor_loop(
    motor: &MotorModel,
    reference: &MotionProfile,
    gains: &Gains,
    cfg: &IntegrationConfig,
) -> Result<MotorRun> {
    simulate_motor_loop_from(motor, reference, gains, cfg, 0.0)
}

/// First-order super-twisting differentiator over a uniformly sampled signal.
pub fn robust_differentiate(signal: &[f64], dt: f64, cfg: &DifferentiatorConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("sample spacing must be positive, got {dt}")));
    }
    let Some(&first) = signal.first() else {
        return Ok(Vec::new());
    };
    let mut z0 = first;
    // warm start from the first difference
    let mut z1 = signal.get(1).map_or(0.0, |s| (s - first) / dt);
    let mut out = Vec::with_capacity(signal.len());
    out.push(z1);
    for &f in &signal[1..] {
        let e = z0 - f;
        let s = dynamics::sgn(e);
        let z0_dot = -cfg.lambda1 * e.abs().sqrt() * s + z1;
        z1 -= dt * cfg.lambda2 * s;
        z0 += dt * z0_dot;
        out.push(z1);
    }
    Ok(out)
}

/// Velocity as an encoder would report it: the true velocity when the
/// quantum is zero, otherwise a backward difference of quantized position.
pub fn measured_velocity(channels: &MotorChannels, motor: &MotorModel, dt: f64) -> Vec<f64> {
    let q = motor.encoder_quantum;
    if q == 0.0 {
        return channels.omega.clone();
    }
    let pos: Vec<f64> = channels.theta.iter().map(|th| (th / q).round() * q).collect();
    let w = motor.velocity_estimation_window;
    (0..pos.len())
        .map(|k| {
            let j = k.saturating_sub(w);
            if j == k {
                channels.omega[0]
            } else {
                (pos[k] - pos[j]) / ((k - j) as f64 * dt)
            }
        })
        .collect()
}

/// Adds zero-mean Gaussian noise with a seeded generator.
pub fn add_measurement_noise(signal: &mut [f64], std_dev: f64, seed: u64) -> Result<()> {
    if std_dev == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, std_dev).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in signal.iter_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(())
}

/// Reconstructed disturbance and rate, sample-aligned with the trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Reconstruction {
    pub omega_dot: Vec<f64>,
    pub d_hat: Vec<f64>,
    pub q_hat: Vec<f64>,
}

/// `d̂ = J ω̂' - u0` and `q̂ = (d̂)'`, both derivatives from the robust differentiator.
pub fn reconstruct_from_velocity(
    velocity: &[f64],
    applied: &[f64],
    motor: &MotorModel,
    dt: f64,
    cfg: &ReconstructionConfig,
) -> Result<Reconstruction> {
    if velocity.len() != applied.len() {
        return Err(Error::Signal("velocity and input series differ in length".into()));
    }
    let omega_dot = robust_differentiate(velocity, dt, &cfg.velocity)?;
    let d_hat: Vec<f64> = omega_dot
        .iter()
        .zip(applied)
        .map(|(wd, u0)| motor.inertia * wd - u0)
        .collect();
    let q_hat = robust_differentiate(&d_hat, dt, &cfg.torque)?;
    Ok(Reconstruction {
        omega_dot,
        d_hat,
        q_hat,
    })
}

/// Reconstructs the disturbance of a motor-loop run from its measured velocity.
pub fn reconstruct_disturbance(
    run: &MotorRun,
    motor: &MotorModel,
    cfg: &ReconstructionConfig,
) -> Result<Reconstruction> {
    let dt = run.trajectory.spacing();
    let velocity = measured_velocity(&run.channels, motor, dt);
    let applied = run.trajectory.channel(integrator::Component::U);
    reconstruct_from_velocity(&velocity, &applied, motor, dt, cfg)
}
