//! Stepsize-robustness sweeps: run every (model, α₀, trial) cell, summarize
//! time-to-accuracy by order statistics, and persist the results.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::optimizer::{self, Init, Metric, RunConfig, RunRecord, StepsizeSchedule, DEFAULT_CHECK_INTERVAL};
use crate::problems::{gen_exponential_demo, ProblemInstance, ProblemSpec};
use crate::rng;

mod demo;

pub use demo::{divergence_demo, DivergenceDemo};

/// Environment variable capping sweep worker threads (0 or unset: all cores).
pub const THREADS_ENV: &str = "APROX_THREADS";

const RUN_TAG: u64 = 0x52_554E;

pub const INTERVAL_METHOD: &str =
    "order statistics of trial times: lower median, ranks max(1, ceil(0.05 T)) and min(T, ceil(0.95 T))";

/// `count` log-spaced values from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepsizeGrid {
    pub count: usize,
    pub min: f64,
    pub max: f64,
}

impl StepsizeGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let (lo, hi) = (self.min.ln(), self.max.ln());
        (0..self.count)
            .map(|i| match i {
                0 => self.min,
                i if i + 1 == self.count => self.max,
                i => (lo + (hi - lo) * i as f64 / (self.count - 1) as f64).exp(),
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidConfig("stepsize grid needs at least one value".into()));
        }
        if !(self.min > 0.0 && self.max.is_finite()) {
            return Err(Error::InvalidConfig("stepsize grid bounds must be positive and finite".into()));
        }
        if self.count > 1 && !(self.min < self.max) {
            return Err(Error::InvalidConfig(format!(
                "stepsize grid must be strictly increasing (min {} >= max {})",
                self.min, self.max
            )));
        }
        if self.count == 1 && self.min != self.max {
            return Err(Error::InvalidConfig("a one-point grid needs min == max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub stepsize_grid: StepsizeGrid,
    pub beta: f64,
    pub models: Vec<ModelKind>,
    pub trials: usize,
    pub epsilon: f64,
    pub budget: u64,
    pub base_seed: u64,
    pub problem: ProblemSpec,
    /// All trials use one dataset instead of one dataset per trial.
    #[serde(default)]
    pub shared_data: bool,
    #[serde(default = "default_check_interval")]
    pub check_interval: u64,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default)]
    pub init: Init,
}

fn default_check_interval() -> u64 {
    DEFAULT_CHECK_INTERVAL
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.stepsize_grid.validate()?;
        StepsizeSchedule::new(self.stepsize_grid.min, self.beta)?;
        if self.models.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one model".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("sweep needs at least one trial per cell".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: SweepConfig =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Seed of the dataset used by `trial`.
    pub fn data_seed(&self, trial: usize) -> u64 {
        let trial = if self.shared_data { 0 } else { trial as u64 };
        rng::derive_seed(self.base_seed, &[rng::stream::DATA, trial])
    }

    /// Seed of the optimizer run in cell `(model, alpha)` for `trial`.
    pub fn run_seed(&self, model: usize, alpha: usize, trial: usize) -> u64 {
        rng::derive_seed(self.base_seed, &[RUN_TAG, model as u64, alpha as u64, trial as u64])
    }

    /// Configuration of one cell's run, exactly as the sweep executes it.
    pub fn run_config(&self, model: usize, alpha: usize, trial: usize) -> Result<RunConfig> {
        let alpha0 = *self
            .stepsize_grid
            .values()
            .get(alpha)
            .ok_or_else(|| Error::InvalidConfig(format!("stepsize index {alpha} is outside the grid")))?;
        let kind = *self
            .models
            .get(model)
            .ok_or_else(|| Error::InvalidConfig(format!("model index {model} is out of range")))?;
        let mut cfg = RunConfig::new(
            kind,
            StepsizeSchedule::new(alpha0, self.beta)?,
            self.budget,
            self.epsilon,
            self.run_seed(model, alpha, trial),
        );
        cfg.check_interval = self.check_interval;
        cfg.metric = self.metric;
        cfg.init = self.init.clone();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn instance(&self, trial: usize) -> Result<ProblemInstance> {
        if self.problem.is_random() {
            self.problem.generate(self.data_seed(trial))
        } else {
            Ok(gen_exponential_demo())
        }
    }
}

/// Order-statistic summary of trial times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub median: u64,
    pub q05: u64,
    pub q95: u64,
}

/// Lower median and 5%/95% order statistics.
///
/// # Panics
/// On an empty slice.
pub fn summarize(times: &[u64]) -> Summary {
    assert!(!times.is_empty(), "cannot summarize zero trials");
    let mut sorted = times.to_vec();
    sorted.sort_unstable();
    let t = sorted.len();
    // 1-based ranks, integer ceilings
    let at = |rank: usize| sorted[rank.clamp(1, t) - 1];
    Summary {
        median: at((t + 1) / 2),
        q05: at((5 * t).div_ceil(100)),
        q95: at((95 * t).div_ceil(100)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub model: ModelKind,
    pub alpha0: f64,
    pub trial: usize,
    pub seed: u64,
    pub data_seed: u64,
    pub time_to_accuracy: u64,
    pub diverged: bool,
    pub final_metric: Option<f64>,
    pub iterations: u64,
    /// Set when the run aborted with an error; the trial counts as diverged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl TrialRecord {
    fn from_outcome(config: &SweepConfig, run: &RunConfig, trial: usize, outcome: Result<RunRecord>) -> Self {
        let base = TrialRecord {
            model: run.model,
            alpha0: run.schedule.alpha0,
            trial,
            seed: run.seed,
            data_seed: config.data_seed(trial),
            time_to_accuracy: config.budget + 1,
            diverged: true,
            final_metric: None,
            iterations: 0,
            failure: None,
        };
        match outcome {
            Ok(r) => TrialRecord {
                time_to_accuracy: r.time_to_accuracy,
                diverged: r.diverged,
                final_metric: r.final_metric,
                iterations: r.iterations,
                ..base
            },
            Err(e) => TrialRecord {
                failure: Some(e.to_string()),
                ..base
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub model: ModelKind,
    pub alpha0: f64,
    pub median: u64,
    pub q05: u64,
    pub q95: u64,
    pub converged_fraction: f64,
    pub diverged_fraction: f64,
    pub times: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub interval_method: String,
    /// Ordered by model, then α₀, then trial.
    pub trials: Vec<TrialRecord>,
    /// Ordered by model, then α₀.
    pub cells: Vec<CellSummary>,
}

impl SweepResult {
    pub fn cell(&self, model: ModelKind, alpha0: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.model == model && c.alpha0 == alpha0)
    }

    pub fn cells_for(&self, model: ModelKind) -> impl Iterator<Item = &CellSummary> {
        self.cells.iter().filter(move |c| c.model == model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep results always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("<sweep json>", e.to_string()))
    }
}

/// Worker count from [`THREADS_ENV`]; `0` means all cores.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

/// Runs the sweep with the thread cap from the environment.
pub fn sweep(config: &SweepConfig) -> Result<SweepResult> {
    sweep_with_threads(config, threads_from_env())
}

/// Runs the sweep on `threads` workers (`0`: all cores, `1`: serial on the
/// calling thread). The result does not depend on `threads`.
pub fn sweep_with_threads(config: &SweepConfig, threads: usize) -> Result<SweepResult> {
    config.validate()?;
    let alphas = config.stepsize_grid.values();
    let datasets = if config.shared_data { 1 } else { config.trials };
    let instances = (0..datasets)
        .map(|t| config.instance(t))
        .collect::<Result<Vec<_>>>()?;
    for model in &config.models {
        model.check_applicable(&instances[0])?;
    }

    let mut tasks = Vec::with_capacity(config.models.len() * alphas.len() * config.trials);
    for m in 0..config.models.len() {
        for a in 0..alphas.len() {
            for t in 0..config.trials {
                tasks.push((config.run_config(m, a, t)?, t));
            }
        }
    }
    let execute = |(run, trial): &(RunConfig, usize)| {
        let instance = &instances[if config.shared_data { 0 } else { *trial }];
        TrialRecord::from_outcome(config, run, *trial, optimizer::run(instance, run))
    };
    let trials: Vec<TrialRecord> = if threads == 1 {
        tasks.iter().map(execute).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
        pool.install(|| tasks.par_iter().map(execute).collect())
    };

    let cells = trials
        .chunks(config.trials)
        .map(|chunk| {
            let times: Vec<u64> = chunk.iter().map(|t| t.time_to_accuracy).collect();
            let s = summarize(&times);
            let n = chunk.len() as f64;
            CellSummary {
                model: chunk[0].model,
                alpha0: chunk[0].alpha0,
                median: s.median,
                q05: s.q05,
                q95: s.q95,
                converged_fraction: chunk.iter().filter(|t| t.time_to_accuracy <= config.budget).count() as f64 / n,
                diverged_fraction: chunk.iter().filter(|t| t.diverged).count() as f64 / n,
                times,
            }
        })
        .collect();
    Ok(SweepResult {
        config: config.clone(),
        interval_method: INTERVAL_METHOD.to_string(),
        trials,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Companion summary file for a trial CSV: `dir/name.csv` → `dir/name_summary.csv`.
pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    path.with_file_name(format!("{stem}_summary.csv"))
}

/// Writes per-trial rows (and the companion summary) as CSV, or the full
/// result as JSON.
pub fn write_results(result: &SweepResult, path: impl AsRef<Path>, format: OutputFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        OutputFormat::Json => {
            let mut text = result.to_json();
            text.push('\n');
            fs::write(path, text).map_err(|e| Error::io(path, e))
        }
        OutputFormat::Csv => {
            write_trials_csv(result, path)?;
            write_summary_csv(result, &summary_path(path))
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, format!("{other:?}")),
    }
}

fn write_trials_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let cfg = &result.config;
    w.write_record([
        "model",
        "alpha0",
        "beta",
        "epsilon",
        "budget",
        "trial",
        "time_to_accuracy",
        "diverged",
        "final_metric",
    ])
    .map_err(|e| csv_error(path, e))?;
    for t in &result.trials {
        w.write_record([
            t.model.name().to_string(),
            format_float(t.alpha0),
            format_float(cfg.beta),
            format_float(cfg.epsilon),
            cfg.budget.to_string(),
            t.trial.to_string(),
            t.time_to_accuracy.to_string(),
            t.diverged.to_string(),
            format_float(t.final_metric.unwrap_or(f64::INFINITY)),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_summary_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["model", "alpha0", "median", "q05", "q95", "converged_fraction"])
        .map_err(|e| csv_error(path, e))?;
    for c in &result.cells {
        w.write_record([
            c.model.name().to_string(),
            format_float(c.alpha0),
            c.median.to_string(),
            c.q05.to_string(),
            c.q95.to_string(),
            format_float(c.converged_fraction),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `sweep.csv`, `sweep_summary.csv` and `sweep.json` into `dir`.
pub fn write_all(result: &SweepResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_results(result, dir.join("sweep.csv"), OutputFormat::Csv)?;
    write_results(result, dir.join("sweep.json"), OutputFormat::Json)
}
