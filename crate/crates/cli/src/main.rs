use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use stsmc_lab::analysis;
use stsmc_lab::par::Execution;
use stsmc_lab::runner::{self, ScenarioConfig, SweepResult, TuneRequest};
use stsmc_lab::tuning::{AccuracySpec, Objective, DEFAULT_MARGIN, DEFAULT_PERIOD_FRACTION};

#[derive(Parser)]
#[command(name = "stsmc", version, about = "Super-twisting limit-cycle laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (1 runs sequentially, 0 uses all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Dotted-path config override, e.g. `gains.k1=0.8`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one parameter of a scenario.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Index into the config's parameter list.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Simulate every parameter of a scenario.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Print the gain calculus for an accuracy spec.
    Tune(TuneArgs),
    /// Re-render a stored bounds table.
    Table {
        #[command(flatten)]
        common: Common,
        /// A `bounds.csv` file or the directory holding one.
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    K1,
    K2,
    Bound,
}

#[derive(Args)]
struct TuneArgs {
    /// Required bound on |x1|.
    #[arg(long)]
    eta: f64,
    /// Bound on |q|.
    #[arg(long = "L")]
    l: f64,
    /// Perturbation period.
    #[arg(long = "T")]
    period: f64,
    #[arg(long, default_value_t = DEFAULT_PERIOD_FRACTION)]
    n: f64,
    /// Proportional gain used for the closed-form k2.
    #[arg(long, default_value_t = 0.9)]
    k1: f64,
    /// Upper limit on k1 for the optimizer.
    #[arg(long, default_value_t = 0.9)]
    k1_max: f64,
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    margin: f64,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::K2)]
    objective: ObjectiveArg,
}

fn load(common: &Common) -> Result<ScenarioConfig> {
    let Some(path) = &common.config else {
        bail!("--config is required")
    };
    let mut cfg = ScenarioConfig::load(path, &common.overrides)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if common.workers.is_some() {
        cfg.workers = common.workers;
    }
    Ok(cfg)
}

fn execute(cfg: &ScenarioConfig) -> Result<bool> {
    let sweep: SweepResult = runner::run_scenario(cfg, Execution::from_workers(cfg.workers))?;
    let written = runner::emit_outputs(&sweep, &cfg.output_dir)
        .with_context(|| format!("writing results to {}", cfg.output_dir.display()))?;
    log::info!("wrote {} files under {}", written.len(), cfg.output_dir.display());
    print!("{}", runner::render_summary(&sweep));
    Ok(sweep.all_ok())
}

fn bounds_path(from: &Path) -> PathBuf {
    if from.is_dir() {
        from.join("bounds.csv")
    } else {
        from.to_path_buf()
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { common, index } => {
            let mut cfg = load(&common)?;
            let Some(&p) = cfg.parameters.get(index) else {
                bail!("index {index} is out of range for {} parameters", cfg.parameters.len());
            };
            cfg.parameters = vec![p];
            execute(&cfg)
        }
        Command::Sweep { common } => execute(&load(&common)?),
        Command::Tune(a) => {
            let objective = match a.objective {
                ObjectiveArg::K1 => Objective::K1,
                ObjectiveArg::K2 => Objective::K2,
                ObjectiveArg::Bound => Objective::Bound,
            };
            let report = runner::tune(TuneRequest {
                spec: AccuracySpec::new(a.eta, a.n, a.l, a.period)?,
                k1: a.k1,
                k1_max: a.k1_max,
                margin: a.margin,
                objective,
            })?;
            print!("{}", report.render());
            Ok(report.feasible())
        }
        Command::Table { common, from } => {
            let dir = match (from, &common.out, &common.config) {
                (Some(f), _, _) => f,
                (None, Some(out), _) => out.clone(),
                (None, None, Some(_)) => load(&common)?.output_dir,
                (None, None, None) => bail!("one of --from, --out or --config is required"),
            };
            let path = bounds_path(&dir);
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let rows = analysis::table_from_csv(&text)?;
            print!("{}", analysis::render_table(&rows));
            Ok(rows.iter().all(|r| r.satisfied))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
