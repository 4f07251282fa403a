//! Limit-cycle detection and measurement on recorded trajectories.

use serde::{Deserialize, Serialize};

use crate::dynamics::Gains;
use crate::error::{Error, Result};
use crate::integrator::{detect_crossings, Component, Trajectory};
use crate::tuning;

/// Minimum number of perturbation periods for a convergence verdict.
pub const MIN_PERIODS: usize = 10;

/// Consecutive contracted strobe steps required to declare convergence.
pub const CONSECUTIVE_STROBES: usize = 3;

/// Periods at the end of a run used for period estimation.
pub const AUTOCORR_PERIODS: usize = 5;

/// Minimum normalized autocorrelation accepted as a periodicity peak.
pub const AUTOCORR_THRESHOLD: f64 = 0.5;

const AUTOCORR_MAX_POINTS: usize = 4000;

/// Convergence tolerance that does not try to resolve the boundary layer.
pub fn default_tolerance(delta: f64) -> f64 {
    (10.0 * delta).max(1e-6)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCycleReport {
    pub converged: bool,
    pub cycle_start_time: Option<f64>,
    pub measured_period: Option<f64>,
    /// `max |x1|` over the final recorded period.
    pub amplitude: f64,
    pub bound_eq16: f64,
    /// Under-tuned bound `W1`; absent outside its regime of validity.
    pub bound_eq18: Option<f64>,
    pub crossings_per_period: usize,
}

fn strobe_stride(traj: &Trajectory, period: f64) -> Result<usize> {
    let spacing = traj.spacing();
    if !(spacing > 0.0) || !(period > 0.0) {
        return Err(Error::Domain("trajectory spacing and period must be positive".into()));
    }
    let ratio = period / spacing;
    let stride = ratio.round();
    if stride < 1.0 || (ratio - stride).abs() > 1e-6 * ratio {
        return Err(Error::Domain(format!(
            "period {period} is not a whole number of sample spacings ({spacing})"
        )));
    }
    Ok(stride as usize)
}

/// Checks whether successive stroboscopic samples `x(t0 + kT)` have stopped moving.
///
/// Returns the verdict and the first strobe time of the contracted run.
pub fn stroboscopic_convergence(traj: &Trajectory, period: f64, tol: f64) -> Result<(bool, Option<f64>)> {
    let stride = strobe_stride(traj, period)?;
    let strobes: Vec<_> = traj.samples.iter().step_by(stride).collect();
    if strobes.len() < MIN_PERIODS + 1 {
        return Err(Error::InsufficientData(format!(
            "{} periods recorded, need at least {MIN_PERIODS}",
            strobes.len().saturating_sub(1)
        )));
    }
    let mut run = 0;
    for k in 0..strobes.len() - 1 {
        let (a, b) = (strobes[k], strobes[k + 1]);
        let step = (b.x1 - a.x1).hypot(b.x2 - a.x2);
        if step < tol {
            run += 1;
            if run == CONSECUTIVE_STROBES {
                return Ok((true, Some(strobes[k + 1 - CONSECUTIVE_STROBES].t)));
            }
        } else {
            run = 0;
        }
    }
    Ok((false, None))
}

/// `max |x1|` over `[t0, t0 + T]`, from recorded samples.
pub fn cycle_amplitude(traj: &Trajectory, cycle_start_time: f64, period: f64) -> f64 {
    let end = cycle_start_time + period + 0.5 * traj.spacing();
    traj.samples
        .iter()
        .filter(|s| s.t >= cycle_start_time - 0.5 * traj.spacing() && s.t <= end)
        .map(|s| s.x1.abs())
        .fold(0.0, f64::max)
}

/// Dominant period of a uniformly sampled series from its autocorrelation.
pub fn estimate_period(series: &[f64], dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::Domain("sample spacing must be positive".into()));
    }
    let stride = series.len().div_ceil(AUTOCORR_MAX_POINTS).max(1);
    let x: Vec<f64> = series.iter().step_by(stride).copied().collect();
    let h = dt * stride as f64;
    let n = x.len();
    if n < 8 {
        return Err(Error::InsufficientData("too few samples for period estimation".into()));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let var = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Aperiodic("series has no variance".into()));
    }
    let max_lag = n / 2;
    let r: Vec<f64> = (0..=max_lag)
        .map(|lag| {
            let (a, b) = (&x[..n - lag], &x[lag..]);
            let ab: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
            let aa: f64 = a.iter().map(|p| p * p).sum();
            let bb: f64 = b.iter().map(|q| q * q).sum();
            if aa > 0.0 && bb > 0.0 {
                ab / (aa * bb).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    // skip the central lobe
    let Some(start) = r.iter().position(|&v| v <= 0.0) else {
        return Err(Error::Aperiodic("autocorrelation never decorrelates".into()));
    };
    let peaks: Vec<usize> = (start.max(1)..max_lag)
        .filter(|&k| r[k] >= r[k - 1] && r[k] > r[k + 1])
        .collect();
    let best = peaks.iter().map(|&k| r[k]).fold(f64::NEG_INFINITY, f64::max);
    if !(best >= AUTOCORR_THRESHOLD) {
        return Err(Error::Aperiodic(format!(
            "highest autocorrelation peak {best:.3} below threshold"
        )));
    }
    // the first peak close to the best one avoids picking a multiple of the period
    let k = *peaks.iter().find(|&&k| r[k] >= 0.9 * best).expect("best peak exists");
    let (a, b, c) = (r[k - 1], r[k], r[k + 1]);
    let den = a - 2.0 * b + c;
    let offset = if den.abs() > f64::EPSILON {
        0.5 * (a - c) / den
    } else {
        0.0
    };
    Ok((k as f64 + offset) * h)
}

/// Power-law fit `amplitude = coefficient · T^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub coefficient: f64,
    pub r_squared: f64,
}

/// Least squares on `log(amplitude) = exponent · log(T) + log(coefficient)`.
pub fn scaling_fit(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "scaling fit needs at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(t, a)| !(t > 0.0) || !(a > 0.0)) {
        return Err(Error::Domain(
            "scaling fit needs positive periods and amplitudes".into(),
        ));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Domain("scaling fit needs at least two distinct periods".into()));
    }
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - exponent * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(ScalingFit {
        exponent,
        coefficient: intercept.exp(),
        r_squared,
    })
}

/// Inputs of the closed-form bounds attached to a report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub gains: Gains,
    pub rate_bound: f64,
    pub period_fraction: f64,
}

/// Runs convergence, amplitude, period and crossing analysis on one trajectory.
///
/// A run that does not converge, or whose period cannot be estimated, is
/// reported as not converged rather than as an error.
pub fn analyze(traj: &Trajectory, period: f64, tol: f64, bounds: &BoundInputs) -> Result<LimitCycleReport> {
    let BoundInputs {
        gains,
        rate_bound: l,
        period_fraction: n,
    } = *bounds;
    let bound_eq16 = tuning::bound_eq16(gains.k2, l, n, period);
    let bound_eq18 = tuning::bound_w1(gains.k1, gains.k2, l, n, period).ok();
    let (converged, start) = stroboscopic_convergence(traj, period, tol)?;
    let t_end = traj.last().map_or(0.0, |s| s.t);
    let last_start = t_end - period;
    let amplitude = cycle_amplitude(traj, last_start, period);
    let mut report = LimitCycleReport {
        converged,
        cycle_start_time: start,
        measured_period: None,
        amplitude,
        bound_eq16,
        bound_eq18,
        crossings_per_period: 0,
    };
    if !converged {
        return Ok(report);
    }
    let stride = strobe_stride(traj, period)?;
    let window = (AUTOCORR_PERIODS * stride).min(traj.len());
    let x1 = traj.channel(Component::X1);
    match estimate_period(&x1[x1.len() - window..], traj.spacing()) {
        Ok(p) => report.measured_period = Some(p),
        Err(Error::Aperiodic(_)) => {}
        Err(e) => return Err(e),
    }
    report.crossings_per_period = detect_crossings(traj, Component::X1)
        .iter()
        .filter(|c| c.t >= last_start && c.t < t_end)
        .count();
    Ok(report)
}

/// One row of a measured-versus-predicted bound table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub label: String,
    pub amplitude: f64,
    pub bound_eq16: f64,
    pub bound_eq18: Option<f64>,
    pub satisfied: bool,
}

/// Pairs converged reports with labels; `satisfied` means `amplitude ≤ bound_eq16`.
pub fn bound_comparison_table(reports: &[LimitCycleReport], labels: &[String]) -> Result<Vec<BoundRow>> {
    if reports.len() != labels.len() {
        return Err(Error::Domain("one label per report is required".into()));
    }
    reports
        .iter()
        .zip(labels)
        .map(|(r, label)| {
            if !r.converged {
                return Err(Error::Domain(format!("report '{label}' did not converge")));
            }
            Ok(BoundRow {
                label: label.clone(),
                amplitude: r.amplitude,
                bound_eq16: r.bound_eq16,
                bound_eq18: r.bound_eq18,
                satisfied: r.amplitude <= r.bound_eq16,
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

pub fn table_to_csv(rows: &[BoundRow]) -> String {
    let mut out = String::from("label,amplitude,bound_eq16,bound_eq18,satisfied\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.label,
            r.amplitude,
            r.bound_eq16,
            opt(r.bound_eq18),
            r.satisfied
        ));
    }
    out
}

pub fn table_from_csv(text: &str) -> Result<Vec<BoundRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("label,amplitude,bound_eq16,bound_eq18,satisfied") {
        return Err(Error::Config("unexpected bounds table header".into()));
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Config(e.to_string()));
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Config(format!("malformed bounds row: {line}")));
            }
            Ok(BoundRow {
                label: f[0].to_string(),
                amplitude: num(f[1])?,
                bound_eq16: num(f[2])?,
                bound_eq18: if f[3].trim().is_empty() { None } else { Some(num(f[3])?) },
                satisfied: f[4]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad flag in: {line}")))?,
            })
        })
        .collect()
}

/// Aligned plain-text rendering.
pub fn render_table(rows: &[BoundRow]) -> String {
    let w = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
    let mut out = format!(
        "{:<w$}  {:>12}  {:>12}  {:>12}  {}\n",
        "label", "max|x1|", "bound_eq16", "bound_eq18", "ok"
    );
    for r in rows {
        let b18 = r.bound_eq18.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        out.push_str(&format!(
            "{:<w$}  {:>12.6}  {:>12.6}  {:>12}  {}\n",
            r.label,
            r.amplitude,
            r.bound_eq16,
            b18,
            if r.satisfied { "yes" } else { "NO" }
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{SimState, Switching};
    use crate::integrator::{simulate_stsmc, IntegrationConfig, Sample, TrajectoryMeta};
    use crate::signals::SinusoidPerturbation;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn synthetic(f: impl Fn(f64) -> (f64, f64), dt: f64, n: usize) -> Trajectory {
        let samples = (0..=n)
            .map(|k| {
                let t = k as f64 * dt;
                let (x1, x2) = f(t);
                Sample {
                    t,
                    x1,
                    x2,
                    ..Default::default()
                }
            })
            .collect();
        Trajectory {
            samples,
            meta: TrajectoryMeta {
                gains: None,
                dt,
                record_stride: 1,
                perturbation: String::new(),
            },
        }
    }

    #[test]
    fn periodic_trajectory_converges_immediately() {
        let tr = synthetic(|t| ((TAU * t / 0.5).sin(), (TAU * t / 0.5).cos()), 0.5 / 1000.0, 12_000);
        let (ok, t0) = stroboscopic_convergence(&tr, 0.5, 1e-6).unwrap();
        assert!(ok);
        assert_eq!(t0, Some(0.0));
    }

    #[test]
    fn drifting_trajectory_does_not_converge() {
        // k1 = k2 = 0 with a nonzero-mean rate: x2 integrates the mean
        let tr = synthetic(|t| (0.0, 2.0 * t), 1e-3, 20_000);
        assert_eq!(stroboscopic_convergence(&tr, 1.0, 1e-3).unwrap(), (false, None));
    }

    #[test]
    fn short_or_misaligned_trajectories_rejected() {
        let tr = synthetic(|t| (t.sin(), 0.0), 1e-3, 5000);
        assert!(matches!(
            stroboscopic_convergence(&tr, 1.0, 1e-3),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            stroboscopic_convergence(&tr, 0.10005, 1e-3),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn under_tuned_zero_mean_loop_converges() {
        let g = Gains::new(0.9, 11.65, 1e-4).unwrap();
        let p = SinusoidPerturbation::new(12.0, 0.3, 0.0).unwrap();
        let cfg = IntegrationConfig::aligned(0.3, 2000, 30.0 * 0.3, 1).unwrap();
        let tr = simulate_stsmc(&g, &p, Switching::Regularized, SimState::new(0.0, 0.2, 0.0), &cfg).unwrap();
        let tol = default_tolerance(g.delta);
        let (ok, t0) = stroboscopic_convergence(&tr, 0.3, tol).unwrap();
        assert!(ok);
        // successive cycle amplitudes agree once converged
        let t0 = t0.unwrap();
        let mut last: Option<f64> = None;
        let mut t = t0;
        while t + 0.3 <= tr.last().unwrap().t + 1e-9 {
            let a = cycle_amplitude(&tr, t, 0.3);
            if let Some(b) = last {
                assert!((a - b).abs() < tol);
            }
            last = Some(a);
            t += 0.3;
        }
    }

    #[test]
    fn amplitude_of_sine() {
        let tr = synthetic(|t| (0.7 * (TAU * t / 0.25).sin(), 0.0), 0.25 / 2000.0, 8000);
        assert!((cycle_amplitude(&tr, 0.25, 0.25) - 0.7).abs() < 1e-6);
    }

    #[test]
    fn period_of_sine() {
        let dt = 1e-4;
        let s: Vec<f64> = (0..20_000).map(|k| (TAU * k as f64 * dt / 0.349).sin()).collect();
        let p = estimate_period(&s, dt).unwrap();
        assert!((p - 0.349).abs() < 0.01 * 0.349, "{p}");
    }

    #[test]
    fn period_with_harmonic_content() {
        let dt = 1e-3;
        let s: Vec<f64> = (0..6000)
            .map(|k| {
                let t = k as f64 * dt;
                (TAU * t / 0.4).sin() + 0.8 * (2.0 * TAU * t / 0.4).sin()
            })
            .collect();
        assert!((estimate_period(&s, dt).unwrap() - 0.4).abs() < 0.004);
    }

    #[test]
    fn white_noise_is_aperiodic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s: Vec<f64> = (0..10_000).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(matches!(estimate_period(&s, 1e-3), Err(Error::Aperiodic(_))));
        assert!(matches!(estimate_period(&[1.0; 100], 1e-3), Err(Error::Aperiodic(_))));
    }

    #[test]
    fn fit_of_table_row() {
        let pts: Vec<(f64, f64)> = [1.0, 1.5, 2.0, 2.5]
            .iter()
            .map(|f| (1.0 / f, 3.063 / (f * f)))
            .collect();
        let fit = scaling_fit(&pts).unwrap();
        assert_relative_eq!(fit.exponent, 2.0, epsilon = 1e-9);
        assert_relative_eq!(fit.coefficient, 3.063, epsilon = 1e-9);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
        let flat = scaling_fit(&[(0.1, 2.0), (0.2, 2.0), (0.4, 2.0), (0.8, 2.0)]).unwrap();
        assert!(flat.exponent.abs() < 1e-12);
        assert!(matches!(
            scaling_fit(&[(0.1, 1.0), (0.2, -1.0), (0.3, 1.0), (0.4, 1.0)]),
            Err(Error::Domain(_))
        ));
        assert!(scaling_fit(&[(0.1, 1.0)]).is_err());
    }

    #[test]
    fn table_rows() {
        let r = LimitCycleReport {
            converged: true,
            cycle_start_time: Some(0.0),
            measured_period: Some(0.3),
            amplitude: 0.1,
            bound_eq16: 0.2,
            bound_eq18: None,
            crossings_per_period: 2,
        };
        let bad = LimitCycleReport {
            amplitude: 0.3,
            ..r.clone()
        };
        let rows = bound_comparison_table(&[r.clone(), bad], &["a".into(), "b".into()]).unwrap();
        assert!(rows[0].satisfied && !rows[1].satisfied);
        assert!(bound_comparison_table(&[], &[]).unwrap().is_empty());
        let nc = LimitCycleReport { converged: false, ..r };
        assert!(bound_comparison_table(&[nc], &["c".into()]).is_err());
        let csv = table_to_csv(&rows);
        assert_eq!(table_from_csv(&csv).unwrap(), rows);
        assert!(render_table(&rows).contains("NO"));
    }
}
