//! Command-line front end.
//!
//! Exit status: 0 on success, 2 for configuration errors (bad flags, unknown
//! names, invalid parameters), 1 for I/O and runtime failures.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::harness::{self, SweepConfig};
use crate::models::ModelKind;
use crate::moreau::{self, EnvelopeConfig};
use crate::optimizer::{self, Init, IterateSelection, Metric, RunConfig, StepsizeSchedule, Trajectory};
use crate::problems::{Domain, ProblemInstance, ProblemSpec};

#[derive(Debug, Parser)]
#[command(name = "aprox", version, about = "Model-based stochastic optimization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one method on one problem and write the run record as JSON.
    Run(RunArgs),
    /// Run a stepsize-robustness sweep described by a JSON config.
    Sweep {
        /// Sweep configuration (JSON, keys as in SweepConfig).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for sweep.csv, sweep_summary.csv and sweep.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Moreau-envelope gradient norms along a stored trajectory.
    MoreauTrace {
        /// Problem instance JSON file.
        #[arg(long)]
        problem: PathBuf,
        /// Trajectory JSON, or a run record containing one.
        #[arg(long)]
        trajectory: PathBuf,
        /// Envelope parameter; defaults to 2 max(mean weak convexity, 1).
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Subgradient vs truncated method on e^x + e^-x with stepsizes 1/k.
    DivergenceDemo {
        /// Starting point.
        #[arg(long, allow_hyphen_values = true)]
        x1: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Problem spec such as `phase-retrieval:n=10,m=200`, or a path to an instance JSON file.
    #[arg(long)]
    pub problem: String,
    /// subgradient | truncated | prox-linear | full-proximal | trunc-adagrad
    #[arg(long, value_parser = parse_model)]
    pub model: ModelKind,
    /// Initial stepsize α₀ in α_k = α₀ k^(-β).
    #[arg(long)]
    pub alpha0: f64,
    /// Stepsize decay exponent β in (1/2, 1].
    #[arg(long)]
    pub beta: f64,
    /// Accuracy target for the time-to-accuracy metric.
    #[arg(long)]
    pub epsilon: f64,
    /// Iteration budget K.
    #[arg(long)]
    pub budget: u64,
    /// Seed for sampling, initialization and iterate selection.
    #[arg(long)]
    pub seed: u64,
    /// Seed for generated data (defaults to --seed).
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// spectral | zero | gaussian
    #[arg(long, default_value = "zero", value_parser = parse_init)]
    pub init: Init,
    /// Constraint set `ball:<radius>` centered at the origin.
    #[arg(long, value_parser = parse_radius)]
    pub domain: Option<f64>,
    /// final | average | weighted-random
    #[arg(long, default_value = "final", value_parser = parse_selection)]
    pub select: IterateSelection,
    /// Store every k-th iterate in the record.
    #[arg(long)]
    pub snapshot_stride: Option<u64>,
    /// gap | distance
    #[arg(long, default_value = "gap", value_parser = parse_metric)]
    pub metric: Metric,
    /// Iterations between accuracy checks.
    #[arg(long, default_value_t = optimizer::DEFAULT_CHECK_INTERVAL)]
    pub check_interval: u64,
    /// Also write the generated instance to this path.
    #[arg(long)]
    pub save_instance: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_init(s: &str) -> std::result::Result<Init, String> {
    match s {
        "zero" => Ok(Init::Zero),
        "gaussian" => Ok(Init::Gaussian { scale: 1.0 }),
        "spectral" => Ok(Init::Spectral),
        other => Err(format!("unknown initialization '{other}'")),
    }
}

fn parse_radius(s: &str) -> std::result::Result<f64, String> {
    let radius = s
        .strip_prefix("ball:")
        .ok_or_else(|| format!("unknown domain '{s}' (expected ball:<radius>)"))?;
    match radius.parse::<f64>() {
        Ok(r) if r > 0.0 && r.is_finite() => Ok(r),
        _ => Err(format!("invalid ball radius '{radius}'")),
    }
}

fn parse_selection(s: &str) -> std::result::Result<IterateSelection, String> {
    match s {
        "final" => Ok(IterateSelection::Final),
        "average" | "uniform-average" => Ok(IterateSelection::UniformAverage),
        "weighted-random" => Ok(IterateSelection::WeightedRandom),
        other => Err(format!("unknown iterate selection '{other}'")),
    }
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    match s {
        "gap" => Ok(Metric::ObjectiveGap),
        "distance" => Ok(Metric::DistanceToOpt),
        other => Err(format!("unknown metric '{other}'")),
    }
}

/// Parses arguments, runs the command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) | Error::UnsupportedStructure(_) | Error::Parse { .. } => 2,
        Error::Io { .. } | Error::ContractViolation(_) | Error::OracleFailure(_) => 1,
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("outputs always serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_problem(problem: &str, data_seed: u64) -> Result<ProblemInstance> {
    let path = Path::new(problem);
    if path.is_file() {
        return ProblemInstance::load(path);
    }
    problem.parse::<ProblemSpec>()?.generate(data_seed)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => {
            let instance = load_problem(&args.problem, args.data_seed.unwrap_or(args.seed))?;
            if let Some(path) = &args.save_instance {
                instance.save(path)?;
            }
            let mut cfg = RunConfig::new(
                args.model,
                StepsizeSchedule::new(args.alpha0, args.beta)?,
                args.budget,
                args.epsilon,
                args.seed,
            );
            cfg.init = args.init;
            cfg.domain = args.domain.map(|radius| Domain::Ball {
                center: vec![0.0; instance.dim],
                radius,
            });
            cfg.selection = args.select;
            cfg.snapshot_stride = args.snapshot_stride;
            cfg.metric = args.metric;
            cfg.check_interval = args.check_interval;
            optimizer::run(&instance, &cfg)?.save(&args.out)
        }
        Command::Sweep { config, out } => {
            let config = SweepConfig::load(&config)?;
            let result = harness::sweep(&config)?;
            harness::write_all(&result, &out)
        }
        Command::MoreauTrace {
            problem,
            trajectory,
            lambda,
            out,
        } => {
            let instance = ProblemInstance::load(&problem)?;
            let trajectory = Trajectory::load(&trajectory)?;
            let config = match lambda {
                Some(l) => EnvelopeConfig::new(l),
                None => EnvelopeConfig::for_instance(&instance),
            };
            write_json(&out, &moreau::stationarity_trace(&instance, &trajectory, &config)?)
        }
        Command::DivergenceDemo { x1, out } => write_json(&out, &harness::divergence_demo(x1)?),
    }
}
