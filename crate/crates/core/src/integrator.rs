//! Fixed-step classical Runge–Kutta integration with uniform recording.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, Gains, SimState, Switching};
use crate::error::{Error, Result};
use crate::signals::Perturbation;

/// Default number of steps per perturbation period.
pub const DEFAULT_STEPS_PER_PERIOD: usize = 2000;

/// Coarsest resolution accepted without a warning.
pub const MIN_STEPS_PER_PERIOD: f64 = 200.0;

/// Step size, horizon and recording stride.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
}

impl IntegrationConfig {
    pub fn new(dt: f64, t_end: f64, record_stride: usize) -> Result<Self> {
        let cfg = IntegrationConfig {
            dt,
            t_end,
            record_stride,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Step size `period / steps_per_period` and a horizon rounded up to whole periods,
    /// so that every multiple of the period lands exactly on a step.
    pub fn aligned(period: f64, steps_per_period: usize, t_end: f64, record_stride: usize) -> Result<Self> {
        if !(period > 0.0) || steps_per_period == 0 {
            return Err(Error::Domain(
                "aligned config needs a positive period and step count".into(),
            ));
        }
        let periods = (t_end / period - 1e-9).ceil().max(1.0);
        Self::new(period / steps_per_period as f64, periods * period, record_stride)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Domain(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::Domain(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.record_stride == 0 {
            return Err(Error::Domain("record_stride must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Logs a warning when the step is coarser than `period / 200`.
    pub fn check_resolution(&self, period: f64) -> bool {
        let fine = self.dt <= period / MIN_STEPS_PER_PERIOD * (1.0 + 1e-12);
        if !fine {
            log::warn!("dt = {} is coarser than T/200 for T = {}", self.dt, period);
        }
        fine
    }
}

/// One recorded point of a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    pub u: f64,
    pub d: f64,
    pub q: f64,
}

impl Sample {
    pub fn get(&self, c: Component) -> f64 {
        match c {
            Component::X1 => self.x1,
            Component::X2 => self.x2,
            Component::U => self.u,
            Component::D => self.d,
            Component::Q => self.q,
        }
    }
}

/// Recorded channel selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    X1,
    X2,
    U,
    D,
    Q,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub gains: Option<Gains>,
    pub dt: f64,
    pub record_stride: usize,
    pub perturbation: String,
}

/// Uniformly sampled closed-loop time series.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Spacing between recorded samples.
    pub fn spacing(&self) -> f64 {
        self.meta.dt * self.meta.record_stride as f64
    }

    pub fn channel(&self, c: Component) -> Vec<f64> {
        self.samples.iter().map(|s| s.get(c)).collect()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Index of the sample closest to time `t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let first = self.samples.first()?.t;
        let i = ((t - first) / self.spacing()).round();
        if i < 0.0 || i as usize >= self.samples.len() {
            None
        } else {
            Some(i as usize)
        }
    }

    /// CSV with header `t,x1,x2,u,d,q`.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 64 + 16);
        out.push_str("t,x1,x2,u,d,q\n");
        for s in &self.samples {
            out.push_str(&format!("{},{},{},{},{},{}\n", s.t, s.x1, s.x2, s.u, s.d, s.q));
        }
        out
    }

    /// Parses the CSV written by [`Self::to_csv`]; metadata is not stored in the file.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "t,x1,x2,u,d,q" => {}
            _ => return Err(Error::Config("trajectory CSV header must be t,x1,x2,u,d,q".into())),
        }
        let mut samples = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let v: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 2)))?;
            if v.len() != 6 {
                return Err(Error::Config(format!("line {}: expected 6 fields", n + 2)));
            }
            samples.push(Sample {
                t: v[0],
                x1: v[1],
                x2: v[2],
                u: v[3],
                d: v[4],
                q: v[5],
            });
        }
        let dt = if samples.len() > 1 {
            samples[1].t - samples[0].t
        } else {
            0.0
        };
        Ok(Trajectory {
            samples,
            meta: TrajectoryMeta {
                gains: None,
                dt,
                record_stride: 1,
                perturbation: String::new(),
            },
        })
    }
}

/// A first-order ODE `x' = f(t, x)` whose state can be projected onto a [`Sample`].
pub trait OdeSystem<const N: usize> {
    fn derivative(&self, t: f64, x: &[f64; N]) -> [f64; N];
    fn observe(&self, t: f64, x: &[f64; N]) -> Sample;
}

/// Two-state field given as a closure; `observe` maps the state to `(x1, x2)`.
pub struct FnField<F>(pub F);

impl<F> OdeSystem<2> for FnField<F>
where
    F: Fn(f64, &[f64; 2]) -> [f64; 2],
{
    fn derivative(&self, t: f64, x: &[f64; 2]) -> [f64; 2] {
        (self.0)(t, x)
    }
    fn observe(&self, t: f64, x: &[f64; 2]) -> Sample {
        Sample {
            t,
            x1: x[0],
            x2: x[1],
            ..Default::default()
        }
    }
}

#[inline]
fn axpy<const N: usize>(x: &[f64; N], a: f64, k: &[f64; N]) -> [f64; N] {
    let mut out = *x;
    for i in 0..N {
        out[i] += a * k[i];
    }
    out
}

/// One classical RK4 step.
pub fn rk4_step<const N: usize, S: OdeSystem<N> + ?Sized>(sys: &S, t: f64, x: &[f64; N], dt: f64) -> [f64; N] {
    let k1 = sys.derivative(t, x);
    let k2 = sys.derivative(t + 0.5 * dt, &axpy(x, 0.5 * dt, &k1));
    let k3 = sys.derivative(t + 0.5 * dt, &axpy(x, 0.5 * dt, &k2));
    let k4 = sys.derivative(t + dt, &axpy(x, dt, &k3));
    let mut out = *x;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Integrates from `(t0, x0)` and returns the recorded raw states.
pub fn integrate_states<const N: usize, S: OdeSystem<N> + ?Sized>(
    sys: &S,
    t0: f64,
    x0: [f64; N],
    cfg: &IntegrationConfig,
) -> Result<Vec<(f64, [f64; N])>> {
    cfg.validate()?;
    let steps = cfg.steps();
    let mut out = Vec::with_capacity(steps / cfg.record_stride + 1);
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { t: t0 });
    }
    let mut x = x0;
    out.push((t0, x));
    for k in 0..steps {
        // times are computed from the step index so multiples of the period stay exact
        let t = t0 + k as f64 * cfg.dt;
        x = rk4_step(sys, t, &x, cfg.dt);
        let t_next = t0 + (k + 1) as f64 * cfg.dt;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t: t_next });
        }
        if (k + 1) % cfg.record_stride == 0 {
            out.push((t_next, x));
        }
    }
    Ok(out)
}

/// Integrates and records observed samples.
pub fn integrate<const N: usize, S: OdeSystem<N> + ?Sized>(
    sys: &S,
    t0: f64,
    x0: [f64; N],
    cfg: &IntegrationConfig,
    mut meta: TrajectoryMeta,
) -> Result<Trajectory> {
    let states = integrate_states(sys, t0, x0, cfg)?;
    let mut samples = Vec::with_capacity(states.len());
    for (t, x) in &states {
        let s = sys.observe(*t, x);
        if ![s.u, s.d, s.q].iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { t: *t });
        }
        samples.push(s);
    }
    meta.dt = cfg.dt;
    meta.record_stride = cfg.record_stride;
    Ok(Trajectory { samples, meta })
}

/// The super-twisting closed loop under an exogenous perturbation.
pub struct StsmcLoop<'a> {
    pub gains: Gains,
    pub perturbation: &'a dyn Perturbation,
    pub switching: Switching,
}

impl OdeSystem<2> for StsmcLoop<'_> {
    fn derivative(&self, t: f64, x: &[f64; 2]) -> [f64; 2] {
        let s = SimState { t, x1: x[0], x2: x[1] };
        let (a, b) = dynamics::eval_closed_loop(&s, &self.gains, self.perturbation.q(t), self.switching);
        [a, b]
    }

    fn observe(&self, t: f64, x: &[f64; 2]) -> Sample {
        let d = self.perturbation.d(t);
        Sample {
            t,
            x1: x[0],
            x2: x[1],
            u: dynamics::control_u(x[0], x[1] - d, &self.gains, self.switching),
            d,
            q: self.perturbation.q(t),
        }
    }
}

/// Simulates the super-twisting loop from `x0`.
pub fn simulate_stsmc(
    gains: &Gains,
    perturbation: &dyn Perturbation,
    switching: Switching,
    x0: SimState,
    cfg: &IntegrationConfig,
) -> Result<Trajectory> {
    gains.validate()?;
    cfg.check_resolution(perturbation.period());
    let sys = StsmcLoop {
        gains: *gains,
        perturbation,
        switching,
    };
    let meta = TrajectoryMeta {
        gains: Some(*gains),
        perturbation: perturbation.describe(),
        ..Default::default()
    };
    integrate(&sys, x0.t, [x0.x1, x0.x2], cfg, meta)
}

/// Direction of a zero crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Rising,
    Falling,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub t: f64,
    pub direction: Direction,
}

/// Zero crossings of a recorded channel.
///
/// For `x1` the band `|x1| < δ` is treated as a single dead zone: a passage
/// through the boundary layer produces one event, and an excursion that
/// re-exits on the side it entered from produces none.
pub fn detect_crossings(traj: &Trajectory, component: Component) -> Vec<Crossing> {
    let band = match (component, traj.meta.gains) {
        (Component::X1, Some(g)) => g.delta,
        _ => 0.0,
    };
    let v: Vec<(f64, f64)> = traj.samples.iter().map(|s| (s.t, s.get(component))).collect();
    crossings_of(&v, band)
}

pub(crate) fn crossings_of(v: &[(f64, f64)], band: f64) -> Vec<Crossing> {
    let outside = |x: f64| {
        if x > band {
            1
        } else if x < -band {
            -1
        } else {
            0
        }
    };
    let mut out = Vec::new();
    let mut last: Option<(usize, i32)> = None;
    for (i, &(_, x)) in v.iter().enumerate() {
        let s = outside(x);
        if s == 0 {
            continue;
        }
        if let Some((j, prev)) = last {
            if prev != s {
                // locate the sign change of the raw signal between samples j and i
                let mut t_cross = 0.5 * (v[j].0 + v[i].0);
                for k in j..i {
                    let (ta, a) = v[k];
                    let (tb, b) = v[k + 1];
                    if a == 0.0 {
                        t_cross = ta;
                        break;
                    }
                    if a * b < 0.0 {
                        t_cross = ta + (tb - ta) * a / (a - b);
                        break;
                    }
                }
                let direction = if s > 0 { Direction::Rising } else { Direction::Falling };
                out.push(Crossing { t: t_cross, direction });
            }
        }
        last = Some((i, s));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{SinusoidPerturbation, ZeroPerturbation};
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    #[test]
    fn linear_drift() {
        let f = FnField(|_t, x: &[f64; 2]| [x[1], 0.0]);
        let cfg = IntegrationConfig::new(1e-3, 1.0, 1).unwrap();
        let out = integrate_states(&f, 0.0, [0.0, 1.0], &cfg).unwrap();
        let (t, x) = out.last().unwrap();
        assert_relative_eq!(*t, 1.0, epsilon = 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn exponential_decay() {
        let f = FnField(|_t, x: &[f64; 2]| [-x[0], -x[1]]);
        let cfg = IntegrationConfig::new(1e-3, 1.0, 10).unwrap();
        let out = integrate_states(&f, 0.0, [1.0, 1.0], &cfg).unwrap();
        assert_eq!(out.len(), 101);
        let x = out.last().unwrap().1;
        let e = (-1.0f64).exp();
        assert!((x[0] - e).abs() < 1e-8 && (x[1] - e).abs() < 1e-8);
    }

    #[test]
    fn divergence_reported() {
        let f = FnField(|_t, x: &[f64; 2]| [x[0] * x[0], 0.0]);
        let cfg = IntegrationConfig::new(1e-2, 5.0, 1).unwrap();
        match integrate_states(&f, 0.0, [1.0, 0.0], &cfg) {
            Err(Error::Divergence { t }) => assert!(t > 0.9 && t < 1.2, "blow-up at {t}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(IntegrationConfig::new(0.0, 1.0, 1).is_err());
        assert!(IntegrationConfig::new(1e-3, -1.0, 1).is_err());
        assert!(IntegrationConfig::new(1e-3, 1.0, 0).is_err());
    }

    #[test]
    fn aligned_config_hits_period_multiples() {
        let cfg = IntegrationConfig::aligned(TAU / 18.0, 2000, 3.0, 1).unwrap();
        let periods = cfg.t_end / (TAU / 18.0);
        assert_relative_eq!(periods, periods.round(), epsilon = 1e-9);
        assert_eq!(cfg.steps() % 2000, 0);
        assert!(cfg.check_resolution(TAU / 18.0));
        assert!(!IntegrationConfig::new(0.01, 1.0, 1).unwrap().check_resolution(0.5));
    }

    #[test]
    fn deterministic_runs() {
        let g = Gains::new(0.9, 11.65, 1e-4).unwrap();
        let p = SinusoidPerturbation::new(12.0, 0.3, 0.0).unwrap();
        let cfg = IntegrationConfig::aligned(0.3, 2000, 1.5, 7).unwrap();
        let x0 = SimState::new(0.0, 0.1, 0.0);
        let a = simulate_stsmc(&g, &p, Switching::Regularized, x0, &cfg).unwrap();
        let b = simulate_stsmc(&g, &p, Switching::Regularized, x0, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.samples.windows(2).all(|w| w[1].t > w[0].t));
        let sp = a.spacing();
        assert!(a.samples.windows(2).all(|w| ((w[1].t - w[0].t) - sp).abs() < 1e-12));
    }

    #[test]
    fn finite_time_gains_settle_in_layer() {
        // k2 > L: the regularized loop reaches the δ-neighbourhood; confirmed with a halved step
        let g = Gains::new(1.8 * (2.1f64 * 10.0).sqrt(), 11.0, 1e-4).unwrap();
        let p = SinusoidPerturbation::new(10.0, 0.4, 0.0).unwrap();
        let x0 = SimState::new(0.0, 1.0, 0.0);
        for steps in [2000, 4000] {
            let cfg = IntegrationConfig::aligned(0.4, steps, 4.0, 1).unwrap();
            let tr = simulate_stsmc(&g, &p, Switching::Regularized, x0, &cfg).unwrap();
            assert!(tr.last().unwrap().x1.abs() < g.delta, "steps = {steps}");
        }
    }

    #[test]
    fn crossing_examples() {
        let n = 1000;
        let v: Vec<(f64, f64)> = (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                (t, (TAU * t).sin())
            })
            .collect();
        // starts at exactly zero, so the first event is the fall through 0.5
        let c = crossings_of(&v[1..], 0.0);
        assert_eq!(c.len(), 1);
        assert_relative_eq!(c[0].t, 0.5, epsilon = 1e-6);
        assert_eq!(c[0].direction, Direction::Falling);
        let w: Vec<(f64, f64)> = (0..=1100)
            .map(|i| {
                let t = i as f64 / n as f64;
                (t, (TAU * t).sin())
            })
            .collect();
        let c = crossings_of(&w[1..], 0.0);
        assert_eq!(c.len(), 2);
        assert_relative_eq!(c[1].t, 1.0, epsilon = 1e-6);
        assert_eq!(c[1].direction, Direction::Rising);
        let pos: Vec<(f64, f64)> = (0..100).map(|i| (i as f64, 1.0 + i as f64)).collect();
        assert!(crossings_of(&pos, 0.0).is_empty());
    }

    #[test]
    fn boundary_layer_chatter_coalesced() {
        let band = 1e-3;
        let vals = [1.0, 0.5, 1e-4, -2e-4, 3e-4, -1e-4, 2e-4, -0.5, -1.0, -5e-4, -0.7];
        let v: Vec<(f64, f64)> = vals.iter().enumerate().map(|(i, &x)| (i as f64, x)).collect();
        let c = crossings_of(&v, band);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].direction, Direction::Falling);
        assert!(c[0].t > 2.0 && c[0].t < 7.0);
    }

    #[test]
    fn csv_round_trip() {
        let p = ZeroPerturbation { period: 1.0 };
        let g = Gains::new(2.0, 1.0, 1e-4).unwrap();
        let cfg = IntegrationConfig::new(0.01, 0.1, 1).unwrap();
        let tr = simulate_stsmc(&g, &p, Switching::Regularized, SimState::new(0.0, 0.5, 0.0), &cfg).unwrap();
        let csv = tr.to_csv();
        assert!(csv.starts_with("t,x1,x2,u,d,q\n"));
        let back = Trajectory::from_csv(&csv).unwrap();
        assert_eq!(back.samples, tr.samples);
    }
}
