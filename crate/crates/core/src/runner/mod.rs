//! Scenario engine behind the command-line runner.

mod config;
mod output;

pub use config::{
    apply_override, GainSource, IntegrationSettings, Param, ScenarioConfig, ScenarioKind, SCHEMA_VERSION,
};
pub use output::{emit_outputs, phase_points, render_summary, write_atomic};

use crate::analysis::{self, BoundInputs, LimitCycleReport, ScalingFit};
use crate::dynamics::{default_delta, Gains, SimState, Switching, DEFAULT_DELTA};
use crate::error::{Error, Result};
use crate::integrator::{self, IntegrationConfig, Trajectory};
use crate::par::{self, Execution};
use crate::plant::{self, DifferentiatorConfig, MotorChannels, Reconstruction, ReconstructionConfig};
use crate::signals::{self, MotionProfile, SinusoidPerturbation};
use crate::tuning::{self, AccuracySpec, Objective};

/// A successful simulation with its analysis.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub report: LimitCycleReport,
    /// Disturbance estimate, for motor scenarios.
    pub reconstruction: Option<Reconstruction>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub label: String,
    pub param: Param,
    pub rate_bound: Option<f64>,
    pub period: Option<f64>,
    pub gains: Option<Gains>,
    pub outcome: std::result::Result<RunOutcome, Error>,
}

impl RunResult {
    pub fn converged(&self) -> bool {
        matches!(&self.outcome, Ok(o) if o.report.converged)
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub scenario: ScenarioKind,
    pub runs: Vec<RunResult>,
    /// Power-law fit of amplitude against period over converged runs.
    pub fit: Option<ScalingFit>,
}

impl SweepResult {
    /// True when every run converged.
    pub fn all_ok(&self) -> bool {
        !self.runs.is_empty() && self.runs.iter().all(RunResult::converged)
    }

    pub fn scaling_points(&self) -> Vec<(f64, f64)> {
        self.runs
            .iter()
            .filter_map(|r| match (&r.outcome, r.period) {
                (Ok(o), Some(t)) if o.report.converged && o.report.amplitude > 0.0 => Some((t, o.report.amplitude)),
                _ => None,
            })
            .collect()
    }
}

/// Perturbation rate bound and period a run is exposed to.
pub fn characterize(cfg: &ScenarioConfig, param: &Param) -> Result<(f64, f64)> {
    match (cfg.scenario, *param) {
        (ScenarioKind::SyntheticQ, Param::RateAndPeriod { l, period }) => Ok((l, period)),
        (ScenarioKind::ConstantSpeed | ScenarioKind::SinusoidalVelocity, Param::Scalar(_)) => {
            let profile = reference_profile(cfg, param)?;
            let period = profile.perturbation_period()?;
            let model = &cfg.motor.friction_cogging;
            let l = signals::bound_l(|t| signals::eval_q(model, &profile, t), period)?;
            Ok((l, period))
        }
        _ => Err(Error::Config(format!(
            "parameter {param:?} does not fit {:?}",
            cfg.scenario
        ))),
    }
}

fn reference_profile(cfg: &ScenarioConfig, param: &Param) -> Result<MotionProfile> {
    match (cfg.scenario, *param) {
        (ScenarioKind::ConstantSpeed, Param::Scalar(w)) => Ok(MotionProfile::constant(w)),
        (ScenarioKind::SinusoidalVelocity, Param::Scalar(f)) => Ok(MotionProfile::sinusoidal(cfg.accel_peak, f)),
        _ => Err(Error::Config(format!("no reference profile for {param:?}"))),
    }
}

/// Resolves the configured gain source for a run with rate bound `l` and period `period`.
pub fn resolve_gains(source: &GainSource, delta: Option<f64>, n: f64, l: f64, period: f64) -> Result<Gains> {
    let delta = delta.unwrap_or_else(|| source.eta().map_or(DEFAULT_DELTA, default_delta));
    let g = match *source {
        GainSource::Explicit { k1, k2 } => Gains::new(k1, k2, delta)?,
        GainSource::FiniteTime { margin, l: pinned } => {
            let g = tuning::finite_time_gains(pinned.unwrap_or(l), margin)?;
            Gains::new(g.k1, g.k2, delta)?
        }
        GainSource::TuneK2 {
            k1,
            eta,
            l: pl,
            period: pt,
        } => {
            let spec = AccuracySpec::new(eta, n, pl.unwrap_or(l), pt.unwrap_or(period))?;
            let k2 = tuning::tune_k2(k1, &spec)?;
            if !tuning::check_k1_condition(k1, k2, spec.l)? {
                return Err(Error::Infeasible(format!(
                    "k1 = {k1} violates k1 > √(2(L - k2)) for k2 = {k2}"
                )));
            }
            Gains::new(k1, k2, delta)?
        }
        GainSource::Optimize {
            k1_max,
            eta,
            objective,
            l: pl,
            period: pt,
        } => {
            let spec = AccuracySpec::new(eta, n, pl.unwrap_or(l), pt.unwrap_or(period))?;
            let g = tuning::optimize_gains(&spec, k1_max, objective)?;
            Gains::new(g.k1, g.k2, delta)?
        }
    };
    Ok(g)
}

fn estimate_rate_bound(signal: &[f64], dt: f64) -> f64 {
    let max_second = signal
        .windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]).abs() / (dt * dt))
        .fold(0.0, f64::max);
    (2.0 * max_second).max(1.0)
}

fn reconstruct(
    cfg: &ScenarioConfig,
    traj: &Trajectory,
    channels: &MotorChannels,
    index: usize,
) -> Result<Reconstruction> {
    let dt = traj.spacing();
    let mut velocity = plant::measured_velocity(channels, &cfg.motor, dt);
    plant::add_measurement_noise(
        &mut velocity,
        cfg.measurement_noise,
        cfg.seed.wrapping_add(index as u64),
    )?;
    let applied = traj.channel(integrator::Component::U);
    // rate bounds from the noiseless second differences of the true signals
    let vel_cfg = DifferentiatorConfig::for_rate_bound(estimate_rate_bound(&channels.omega, dt))?;
    let d = traj.channel(integrator::Component::D);
    let torque_cfg = DifferentiatorConfig::for_rate_bound(estimate_rate_bound(&d, dt))?;
    plant::reconstruct_from_velocity(
        &velocity,
        &applied,
        &cfg.motor,
        dt,
        &ReconstructionConfig {
            velocity: vel_cfg,
            torque: torque_cfg,
        },
    )
}

/// Simulates and analyzes the `index`-th parameter of a scenario.
pub fn run_single(cfg: &ScenarioConfig, index: usize) -> RunResult {
    let param = cfg.parameters[index];
    let label = param.label(cfg.scenario);
    let mut result = RunResult {
        label,
        param,
        rate_bound: None,
        period: None,
        gains: None,
        outcome: Err(Error::Config("not run".into())),
    };
    let (l, period) = match characterize(cfg, &param) {
        Ok(v) => v,
        Err(e) => {
            result.outcome = Err(e);
            return result;
        }
    };
    result.rate_bound = Some(l);
    result.period = Some(period);
    let gains = match resolve_gains(&cfg.gains, cfg.delta, cfg.period_fraction, l, period) {
        Ok(g) => g,
        Err(e) => {
            result.outcome = Err(e);
            return result;
        }
    };
    result.gains = Some(gains);
    result.outcome = simulate_and_analyze(cfg, index, &param, gains, l, period);
    result
}

fn simulate_and_analyze(
    cfg: &ScenarioConfig,
    index: usize,
    param: &Param,
    gains: Gains,
    l: f64,
    period: f64,
) -> Result<RunOutcome> {
    let it = &cfg.integration;
    let icfg = IntegrationConfig::aligned(
        period,
        it.steps_per_period,
        it.periods as f64 * period,
        it.record_stride,
    )?;
    let (trajectory, reconstruction) = match cfg.scenario {
        ScenarioKind::SyntheticQ => {
            let p = SinusoidPerturbation::new(l, period, 0.0)?;
            let x0 = SimState::new(0.0, cfg.initial_error, 0.0);
            (
                integrator::simulate_stsmc(&gains, &p, Switching::Regularized, x0, &icfg)?,
                None,
            )
        }
        ScenarioKind::ConstantSpeed | ScenarioKind::SinusoidalVelocity => {
            let profile = reference_profile(cfg, param)?;
            let run = plant::simulate_motor_loop_from(&cfg.motor, &profile, &gains, &icfg, cfg.initial_error)?;
            let rec = reconstruct(cfg, &run.trajectory, &run.channels, index)?;
            (run.trajectory, Some(rec))
        }
    };
    let tol = cfg
        .convergence_tol
        .unwrap_or_else(|| analysis::default_tolerance(gains.delta));
    let report = analysis::analyze(
        &trajectory,
        period,
        tol,
        &BoundInputs {
            gains,
            rate_bound: l,
            period_fraction: cfg.period_fraction,
        },
    )?;
    Ok(RunOutcome {
        trajectory,
        report,
        reconstruction,
    })
}

/// Runs every parameter of the scenario. Per-run failures are recorded and
/// the sweep continues.
pub fn run_scenario(cfg: &ScenarioConfig, exec: Execution) -> Result<SweepResult> {
    cfg.validate()?;
    let indices: Vec<usize> = (0..cfg.parameters.len()).collect();
    let runs = par::map(&indices, exec, |&i| run_single(cfg, i));
    let mut sweep = SweepResult {
        scenario: cfg.scenario,
        runs,
        fit: None,
    };
    let points = sweep.scaling_points();
    if points.len() >= 4 {
        sweep.fit = analysis::scaling_fit(&points).ok();
    }
    Ok(sweep)
}

/// Inputs of the `tune` subcommand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneRequest {
    pub spec: AccuracySpec,
    pub k1: f64,
    pub k1_max: f64,
    pub margin: f64,
    pub objective: Objective,
}

/// Closed-form gain calculus for one accuracy spec.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneReport {
    pub request: TuneRequest,
    pub finite_time: Result<Gains>,
    pub tuned_k2: Result<f64>,
    pub k1_condition: Option<bool>,
    pub bound_w1: Option<f64>,
    pub bound_eq16: Option<f64>,
    pub averaged_conditions: Option<bool>,
    pub optimized: Result<Gains>,
}

impl TuneReport {
    /// True when the tuned and optimized gains are both feasible.
    pub fn feasible(&self) -> bool {
        self.k1_condition == Some(true)
            && self.bound_w1.is_some_and(|w| w <= self.request.spec.eta)
            && self.optimized.is_ok()
    }

    pub fn render(&self) -> String {
        let r = &self.request;
        let s = &r.spec;
        let mut out = format!(
            "accuracy spec: eta = {}, n = {}, L = {}, T = {}\n",
            s.eta, s.n, s.l, s.period
        );
        match &self.finite_time {
            Ok(g) => {
                out += &format!(
                    "finite-time gains (margin {}): k1 = {:.4}, k2 = {:.4}\n",
                    r.margin, g.k1, g.k2
                )
            }
            Err(e) => out += &format!("finite-time gains: {e}\n"),
        }
        match &self.tuned_k2 {
            Ok(k2) => out += &format!("tuned k2 for k1 = {}: {:.4}\n", r.k1, k2),
            Err(e) => out += &format!("tuned k2 for k1 = {}: {e}\n", r.k1),
        }
        if let Some(c) = self.k1_condition {
            out += &format!("k1 > sqrt(2(L - k2)): {}\n", if c { "holds" } else { "VIOLATED" });
        }
        if let Some(w) = self.bound_w1 {
            out += &format!("under-tuned bound W1: {w:.6} (eta = {})\n", s.eta);
        }
        if let Some(b) = self.bound_eq16 {
            out += &format!("width bound 0.5 (k2 + L) n^2 T^2: {b:.6}\n");
        }
        if let Some(a) = self.averaged_conditions {
            out += &format!(
                "averaged convergence conditions (zero-mean rate): {}\n",
                if a { "hold" } else { "do not hold (sufficient only)" }
            );
        }
        match &self.optimized {
            Ok(g) => {
                out += &format!(
                    "optimized ({:?}, k1 <= {}): k1 = {:.4}, k2 = {:.4}\n",
                    r.objective, r.k1_max, g.k1, g.k2
                )
            }
            Err(e) => out += &format!("optimized: {e}\n"),
        }
        out
    }
}

pub fn tune(request: TuneRequest) -> Result<TuneReport> {
    let spec = request.spec;
    spec.validate()?;
    let tuned_k2 = tuning::tune_k2(request.k1, &spec);
    let (mut k1_condition, mut bound_w1, mut bound_eq16, mut averaged) = (None, None, None, None);
    if let Ok(k2) = tuned_k2 {
        k1_condition = tuning::check_k1_condition(request.k1, k2, spec.l).ok();
        bound_w1 = tuning::bound_w1(request.k1, k2, spec.l, spec.n, spec.period).ok();
        bound_eq16 = Some(tuning::bound_eq16(k2, spec.l, spec.n, spec.period));
        averaged = Gains::new(request.k1, k2, DEFAULT_DELTA)
            .ok()
            .map(|g| tuning::check_averaged_conditions(&g, 0.0));
    }
    Ok(TuneReport {
        request,
        finite_time: tuning::finite_time_gains(spec.l, request.margin),
        tuned_k2,
        k1_condition,
        bound_w1,
        bound_eq16,
        averaged_conditions: averaged,
        optimized: tuning::optimize_gains(&spec, request.k1_max, request.objective),
    })
}
