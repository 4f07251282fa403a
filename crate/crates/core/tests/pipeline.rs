use std::fs;

use stsmc_lab::analysis;
use stsmc_lab::integrator::Trajectory;
use stsmc_lab::par::Execution;
use stsmc_lab::runner::{self, ScenarioConfig};

fn motor_config() -> ScenarioConfig {
    ScenarioConfig::from_json(
        r#"{"scenario": "constant_speed",
            "parameters": [14, 18, 22],
            "gains": {"source": "tune_k2", "k1": 0.9, "eta": 0.2, "L": 12, "T": 0.3125},
            "measurement_noise": 0.001,
            "seed": 7,
            "integration": {"steps_per_period": 1000, "periods": 20, "record_stride": 5}}"#,
    )
    .unwrap()
}

#[test]
fn motor_sweep_outputs_round_trip() {
    let cfg = motor_config();
    let sweep = runner::run_scenario(&cfg, Execution::Parallel).unwrap();
    assert!(sweep.all_ok());
    let dir = tempfile::tempdir().unwrap();
    runner::emit_outputs(&sweep, dir.path()).unwrap();

    let rows = analysis::table_from_csv(&fs::read_to_string(dir.path().join("bounds.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.satisfied && r.amplitude <= r.bound_eq16));

    let text = fs::read_to_string(dir.path().join("omega_18/trajectory.csv")).unwrap();
    let traj = Trajectory::from_csv(&text).unwrap();
    let original = &sweep.runs[1].outcome.as_ref().unwrap().trajectory;
    assert_eq!(traj.len(), original.len());
    assert_eq!(traj.to_csv(), text);

    let dist = fs::read_to_string(dir.path().join("omega_18/disturbance.csv")).unwrap();
    assert_eq!(dist.lines().next(), Some("t,d,q,d_hat,q_hat"));
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = motor_config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    runner::emit_outputs(&runner::run_scenario(&cfg, Execution::Workers(2)).unwrap(), a.path()).unwrap();
    runner::emit_outputs(&runner::run_scenario(&cfg, Execution::Sequential).unwrap(), b.path()).unwrap();
    for f in [
        "bounds.csv",
        "scaling.csv",
        "summary.txt",
        "omega_14/trajectory.csv",
        "omega_14/phase.csv",
        "omega_22/disturbance.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_only_affects_reconstruction() {
    let mut cfg = motor_config();
    cfg.parameters.truncate(1);
    let a = runner::run_scenario(&cfg, Execution::Sequential).unwrap();
    cfg.seed = 8;
    let b = runner::run_scenario(&cfg, Execution::Sequential).unwrap();
    let (ra, rb) = (a.runs[0].outcome.as_ref().unwrap(), b.runs[0].outcome.as_ref().unwrap());
    assert_eq!(ra.trajectory, rb.trajectory);
    assert_ne!(ra.reconstruction, rb.reconstruction);
}

#[test]
fn overrides_reach_nested_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, motor_config().to_json()).unwrap();
    let cfg = ScenarioConfig::load(
        &path,
        &[
            "motor.friction_cogging.harmonics.0.amplitude=0.25".into(),
            "parameters=[20]".into(),
        ],
    )
    .unwrap();
    assert_eq!(cfg.motor.friction_cogging.harmonics[0].amplitude, 0.25);
    let sweep = runner::run_scenario(&cfg, Execution::Sequential).unwrap();
    assert_eq!(sweep.runs.len(), 1);
    assert!((sweep.runs[0].rate_bound.unwrap() - 5.0).abs() < 1e-3);
}
