use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use stsmc_lab::par::{self, Execution};
use stsmc_lab::runner::{self, ScenarioConfig};
use stsmc_lab::tuning::{self, AccuracySpec, Objective};

fn synthetic_sweep() -> ScenarioConfig {
    ScenarioConfig::from_json(
        r#"{"scenario": "synthetic_q",
            "parameters": [{"L": 12, "T": 0.1}, {"L": 12, "T": 0.15}, {"L": 12, "T": 0.2}, {"L": 12, "T": 0.3},
                           {"L": 12, "T": 0.4}, {"L": 12, "T": 0.5}, {"L": 12, "T": 0.6}, {"L": 12, "T": 0.8}],
            "gains": {"source": "explicit", "k1": 4.0, "k2": 6.0},
            "integration": {"steps_per_period": 1000, "periods": 20}}"#,
    )
    .expect("bench config is valid")
}

fn bench_sweep(c: &mut Criterion) {
    let cfg = synthetic_sweep();
    let mut g = c.benchmark_group("synthetic_sweep");
    g.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        g.bench_function(name, |b| {
            b.iter(|| runner::run_scenario(black_box(&cfg), exec).unwrap())
        });
    }
    g.finish();
}

fn bench_optimizer(c: &mut Criterion) {
    let specs: Vec<AccuracySpec> = (0..16)
        .map(|i| AccuracySpec::new(0.05 + 0.03 * i as f64, 0.5, 5.0 + i as f64, 0.1 + 0.03 * i as f64).unwrap())
        .collect();
    let mut g = c.benchmark_group("optimize_gains");
    g.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        g.bench_function(name, |b| {
            b.iter(|| {
                par::map(black_box(&specs), exec, |s| {
                    tuning::optimize_gains(s, 2.0, Objective::K2)
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench_sweep, bench_optimizer);
criterion_main!(benches);
