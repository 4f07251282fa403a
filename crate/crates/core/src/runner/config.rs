//! JSON scenario configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::integrator::DEFAULT_STEPS_PER_PERIOD;
use crate::plant::MotorModel;
use crate::tuning::{Objective, DEFAULT_MARGIN, DEFAULT_PERIOD_FRACTION};

/// Schema version this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Motor at constant speed set-points; parameters are `ω_r` (rad/s).
    ConstantSpeed,
    /// Motor tracking `ω_r(t) = A/(2πf) cos(2πft)`; parameters are `f` (Hz).
    SinusoidalVelocity,
    /// Bare loop under `q(t) = L sin(2πt/T)`; parameters are `{L, T}` pairs.
    SyntheticQ,
}

/// One sweep value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Scalar(f64),
    RateAndPeriod {
        #[serde(rename = "L")]
        l: f64,
        #[serde(rename = "T")]
        period: f64,
    },
}

impl Param {
    pub fn label(&self, kind: ScenarioKind) -> String {
        match (kind, self) {
            (ScenarioKind::ConstantSpeed, Param::Scalar(w)) => format!("omega_{w}"),
            (ScenarioKind::SinusoidalVelocity, Param::Scalar(f)) => format!("f_{f}"),
            (_, Param::Scalar(v)) => format!("p_{v}"),
            (_, Param::RateAndPeriod { l, period }) => format!("L_{l}_T_{period}"),
        }
    }
}

/// Where the controller gains come from.
///
/// For `tune_k2` and `optimize`, `L` and `T` default to the values of each
/// individual run; setting them pins one spec for the whole sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum GainSource {
    Explicit {
        k1: f64,
        k2: f64,
    },
    FiniteTime {
        #[serde(default = "default_margin")]
        margin: f64,
        #[serde(default, rename = "L")]
        l: Option<f64>,
    },
    TuneK2 {
        k1: f64,
        eta: f64,
        #[serde(default, rename = "L")]
        l: Option<f64>,
        #[serde(default, rename = "T")]
        period: Option<f64>,
    },
    Optimize {
        k1_max: f64,
        eta: f64,
        #[serde(default)]
        objective: Objective,
        #[serde(default, rename = "L")]
        l: Option<f64>,
        #[serde(default, rename = "T")]
        period: Option<f64>,
    },
}

impl GainSource {
    /// Accuracy requirement carried by the source, if any.
    pub fn eta(&self) -> Option<f64> {
        match *self {
            GainSource::TuneK2 { eta, .. } | GainSource::Optimize { eta, .. } => Some(eta),
            _ => None,
        }
    }
}

fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationSettings {
    #[serde(default = "default_steps")]
    pub steps_per_period: usize,
    /// Horizon in perturbation periods.
    #[serde(default = "default_periods")]
    pub periods: usize,
    #[serde(default = "one")]
    pub record_stride: usize,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        IntegrationSettings {
            steps_per_period: default_steps(),
            periods: default_periods(),
            record_stride: 1,
        }
    }
}

fn default_steps() -> usize {
    DEFAULT_STEPS_PER_PERIOD
}

fn default_periods() -> usize {
    60
}

fn one() -> usize {
    1
}

fn default_accel() -> f64 {
    100.0
}

fn default_n() -> f64 {
    DEFAULT_PERIOD_FRACTION
}

fn default_version() -> u32 {
    SCHEMA_VERSION
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_version")]
    pub schema_version: u32,
    pub scenario: ScenarioKind,
    pub parameters: Vec<Param>,
    pub gains: GainSource,
    /// Boundary-layer width; defaults to `min(1e-4, η·1e-3)`.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub motor: MotorModel,
    /// Acceleration peak of the sinusoidal velocity reference (rad/s²).
    #[serde(default = "default_accel")]
    pub accel_peak: f64,
    #[serde(default = "default_n")]
    pub period_fraction: f64,
    #[serde(default)]
    pub integration: IntegrationSettings,
    /// Initial speed error (or `x1(0)` for synthetic runs).
    #[serde(default)]
    pub initial_error: f64,
    /// Stroboscopic convergence tolerance; defaults to `max(10δ, 1e-6)`.
    #[serde(default)]
    pub convergence_tol: Option<f64>,
    /// Standard deviation of velocity measurement noise used for disturbance reconstruction.
    #[serde(default)]
    pub measurement_noise: f64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(v)
    }

    pub fn from_value(v: Value) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file and applies `key=value` overrides before validation.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut v: Value = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        Self::from_value(v)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.parameters.is_empty() {
            return Err(Error::Config("parameter set is empty".into()));
        }
        for p in &self.parameters {
            let ok = match (self.scenario, p) {
                (ScenarioKind::SyntheticQ, Param::RateAndPeriod { l, period }) => *l > 0.0 && *period > 0.0,
                (ScenarioKind::ConstantSpeed, Param::Scalar(w)) => *w != 0.0 && w.is_finite(),
                (ScenarioKind::SinusoidalVelocity, Param::Scalar(f)) => *f > 0.0 && f.is_finite(),
                _ => false,
            };
            if !ok {
                return Err(Error::Config(format!(
                    "parameter {p:?} is not valid for {:?}",
                    self.scenario
                )));
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0) {
                return Err(Error::Config("delta must be positive".into()));
            }
        }
        if !(self.period_fraction > 0.0 && self.period_fraction <= 0.5) {
            return Err(Error::Config("period_fraction must lie in (0, 0.5]".into()));
        }
        let it = &self.integration;
        if it.steps_per_period == 0 || it.record_stride == 0 || !it.steps_per_period.is_multiple_of(it.record_stride) {
            return Err(Error::Config("record_stride must divide steps_per_period".into()));
        }
        if it.periods < crate::analysis::MIN_PERIODS {
            return Err(Error::Config(format!(
                "need at least {} periods",
                crate::analysis::MIN_PERIODS
            )));
        }
        if !(self.measurement_noise >= 0.0) {
            return Err(Error::Config("measurement_noise must be non-negative".into()));
        }
        self.motor.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

/// Sets a dotted path such as `gains.k1=0.8` or `motor.inertia=2`.
///
/// The value is parsed as JSON when possible and stored as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad override path '{path}'")));
    }
    let mut node = root;
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.entry(key.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| Error::Config(format!("'{key}' is not an array index in '{path}'")))?;
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("index {idx} out of range in '{path}'")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("'{path}' descends into a scalar"))),
        };
    }
    unreachable!("loop returns on the last key")
}
