//! Files written for a finished sweep.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{RunResult, SweepResult};
use crate::analysis::{self, BoundRow};
use crate::dynamics::{self, SimState};
use crate::error::{Error, Result};

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile_in(dir, path)?;
    let result = (|| {
        tmp.1.write_all(contents.as_bytes())?;
        tmp.1.sync_all()?;
        fs::rename(&tmp.0, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp.0);
    }
    result.map_err(Error::from)
}

fn tempfile_in(dir: &Path, target: &Path) -> Result<(PathBuf, fs::File)> {
    let name = target.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let path = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let file = fs::File::create(&path)?;
    Ok((path, file))
}

/// `(w1, w2)` over the final perturbation period, with `w2 = ẋ1`.
pub fn phase_points(run: &RunResult) -> Option<Vec<(f64, f64)>> {
    let outcome = run.outcome.as_ref().ok()?;
    let gains = run.gains?;
    let period = run.period?;
    let traj = &outcome.trajectory;
    let t_end = traj.last()?.t;
    let start = t_end - period;
    Some(
        traj.samples
            .iter()
            .filter(|s| s.t >= start - 1e-12 * period)
            .map(|s| {
                let (w2, _) = dynamics::eval_regularized(&SimState::new(s.t, s.x1, s.x2), &gains, s.q);
                (s.x1, w2)
            })
            .collect(),
    )
}

fn phase_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("w1,w2\n");
    for (w1, w2) in points {
        out.push_str(&format!("{w1},{w2}\n"));
    }
    out
}

fn disturbance_csv(run: &RunResult) -> Option<String> {
    let outcome = run.outcome.as_ref().ok()?;
    let rec = outcome.reconstruction.as_ref()?;
    let mut out = String::from("t,d,q,d_hat,q_hat\n");
    for (i, s) in outcome.trajectory.samples.iter().enumerate() {
        out.push_str(&format!("{},{},{},{},{}\n", s.t, s.d, s.q, rec.d_hat[i], rec.q_hat[i]));
    }
    Some(out)
}

fn bound_rows(sweep: &SweepResult) -> Vec<BoundRow> {
    sweep
        .runs
        .iter()
        .filter_map(|r| match &r.outcome {
            Ok(o) if o.report.converged => Some(BoundRow {
                label: r.label.clone(),
                amplitude: o.report.amplitude,
                bound_eq16: o.report.bound_eq16,
                bound_eq18: o.report.bound_eq18,
                satisfied: o.report.amplitude <= o.report.bound_eq16,
            }),
            _ => None,
        })
        .collect()
}

fn scaling_csv(sweep: &SweepResult) -> String {
    let mut out = String::from("T,amplitude,fitted_amplitude,exponent,coefficient,r_squared\n");
    for (t, a) in sweep.scaling_points() {
        match &sweep.fit {
            Some(f) => out.push_str(&format!(
                "{t},{a},{},{},{},{}\n",
                f.coefficient * t.powf(f.exponent),
                f.exponent,
                f.coefficient,
                f.r_squared
            )),
            None => out.push_str(&format!("{t},{a},,,,\n")),
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

/// Human-readable per-run status, one block per run.
pub fn render_summary(sweep: &SweepResult) -> String {
    let mut out = format!("scenario: {:?}\nruns: {}\n", sweep.scenario, sweep.runs.len());
    out += "amplitude window: final perturbation period\n\n";
    for r in &sweep.runs {
        let status = match &r.outcome {
            Err(_) => "FAILED",
            Ok(o) if !o.report.converged => "NOT CONVERGED",
            Ok(_) => "converged",
        };
        out += &format!("[{}] {status}\n", r.label);
        if let (Some(l), Some(t)) = (r.rate_bound, r.period) {
            out += &format!("  L = {l:.6}, T = {t:.6}\n");
        }
        if let Some(g) = r.gains {
            out += &format!("  k1 = {:.6}, k2 = {:.6}, delta = {:e}\n", g.k1, g.k2, g.delta);
        }
        match &r.outcome {
            Err(e) => out += &format!("  error: {e}\n"),
            Ok(o) => {
                let rep = &o.report;
                out += &format!(
                    "  amplitude = {:.6e}, bound_eq16 = {:.6e}, bound_eq18 = {}\n",
                    rep.amplitude,
                    rep.bound_eq16,
                    opt(rep.bound_eq18)
                );
                out += &format!(
                    "  cycle start = {}, measured period = {}, crossings per period = {}\n",
                    opt(rep.cycle_start_time),
                    opt(rep.measured_period),
                    rep.crossings_per_period
                );
            }
        }
    }
    if let Some(f) = &sweep.fit {
        out += &format!(
            "\nscaling fit: amplitude = {:.6} T^{:.4} (R^2 = {:.4})\n",
            f.coefficient, f.exponent, f.r_squared
        );
    }
    let ok = sweep.runs.iter().filter(|r| r.converged()).count();
    out += &format!("\n{ok}/{} runs converged\n", sweep.runs.len());
    out
}

/// Writes per-run and sweep-level files under `out_dir`; returns the paths written.
pub fn emit_outputs(sweep: &SweepResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if sweep.runs.is_empty() {
        return Err(Error::Config("no results to write".into()));
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, text: &str| -> Result<()> {
        write_atomic(&path, text)?;
        written.push(path);
        Ok(())
    };
    for r in &sweep.runs {
        let dir = out_dir.join(&r.label);
        // a stale phase file from an earlier successful run would be misleading
        let _ = fs::remove_file(dir.join("phase.csv"));
        let Ok(o) = &r.outcome else { continue };
        put(dir.join("trajectory.csv"), &o.trajectory.to_csv())?;
        if let Some(points) = phase_points(r) {
            put(dir.join("phase.csv"), &phase_csv(&points))?;
        }
        if let Some(text) = disturbance_csv(r) {
            put(dir.join("disturbance.csv"), &text)?;
        }
    }
    put(out_dir.join("bounds.csv"), &analysis::table_to_csv(&bound_rows(sweep)))?;
    put(out_dir.join("scaling.csv"), &scaling_csv(sweep))?;
    put(out_dir.join("summary.txt"), &render_summary(sweep))?;
    Ok(written)
}
