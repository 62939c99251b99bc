//! The stochastic model-based iteration
//!
//! ```text
//! x_{k+1} = proj_X( argmin_y { f_{x_k}(y; S_k) + |y - x_k|^2 / (2 α_k) } ),
//! ```
//!
//! with uniform sampling over the instance, a polynomially decaying stepsize,
//! periodic accuracy checks, a divergence guard, and iterate selection.

mod schedule;
mod select;

use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::models::{self, ModelKind, ScalingState, StepReport, DEFAULT_ADAGRAD_DELTA};
use crate::problems::{spectral_init, Domain, ProblemInstance, Sample};
use crate::rng::{self, Normal};

pub use schedule::StepsizeSchedule;
pub use select::{select_iterate, IterateSelection};
use select::SelectionTracker;

pub const DEFAULT_CHECK_INTERVAL: u64 = 100;
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// `F(x) - F(x*)`.
    #[default]
    ObjectiveGap,
    /// Distance to the optimal set.
    DistanceToOpt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Init {
    Zero,
    Gaussian { scale: f64 },
    Spectral,
    Point { x: Vec<f64> },
}

impl Default for Init {
    fn default() -> Self {
        Init::Gaussian { scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelKind,
    pub schedule: StepsizeSchedule,
    /// Iteration budget `K`.
    pub budget: u64,
    /// Accuracy target `ε`.
    pub epsilon: f64,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default = "default_check_interval")]
    pub check_interval: u64,
    #[serde(default = "default_divergence_threshold")]
    pub divergence_threshold: f64,
    pub seed: u64,
    #[serde(default)]
    pub init: Init,
    /// Overrides the instance's own domain when set.
    #[serde(default)]
    pub domain: Option<Domain>,
    #[serde(default)]
    pub selection: IterateSelection,
    #[serde(default)]
    pub snapshot_stride: Option<u64>,
    /// Stop as soon as the metric reaches `ε`.
    #[serde(default = "default_true")]
    pub stop_at_target: bool,
    #[serde(default = "default_adagrad_delta")]
    pub adagrad_delta: f64,
}

fn default_check_interval() -> u64 {
    DEFAULT_CHECK_INTERVAL
}
fn default_divergence_threshold() -> f64 {
    DEFAULT_DIVERGENCE_THRESHOLD
}
fn default_true() -> bool {
    true
}
fn default_adagrad_delta() -> f64 {
    DEFAULT_ADAGRAD_DELTA
}

impl RunConfig {
    pub fn new(model: ModelKind, schedule: StepsizeSchedule, budget: u64, epsilon: f64, seed: u64) -> Self {
        RunConfig {
            model,
            schedule,
            budget,
            epsilon,
            metric: Metric::default(),
            check_interval: DEFAULT_CHECK_INTERVAL,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
            seed,
            init: Init::default(),
            domain: None,
            selection: IterateSelection::default(),
            snapshot_stride: None,
            stop_at_target: true,
            adagrad_delta: DEFAULT_ADAGRAD_DELTA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.budget < 1 {
            return Err(Error::InvalidConfig("iteration budget must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.check_interval < 1 {
            return Err(Error::InvalidConfig("check interval must be at least 1".into()));
        }
        if self.snapshot_stride == Some(0) {
            return Err(Error::InvalidConfig("snapshot stride must be at least 1".into()));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::InvalidConfig("divergence threshold must be positive".into()));
        }
        if let Some(Domain::Ball { radius, .. }) = &self.domain {
            if !(*radius >= 0.0) {
                return Err(Error::InvalidConfig(format!("ball radius must be nonnegative, got {radius}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: u64,
    pub point: Vec<f64>,
}

/// Iterates stored every `stride` steps (iteration 0 is the start point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub stride: u64,
    pub schedule: StepsizeSchedule,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    /// First checked iteration with metric `<= ε`; `K + 1` when never reached
    /// or when the run diverged.
    pub time_to_accuracy: u64,
    pub diverged: bool,
    /// Steps actually taken.
    pub iterations: u64,
    pub accuracy_trace: Vec<TracePoint>,
    /// Metric at the last iterate; `None` if it was not finite.
    pub final_metric: Option<f64>,
    /// Last finite iterate.
    pub final_point: Vec<f64>,
    pub selected_point: Vec<f64>,
    /// Fraction of steps whose effective stepsize fell below `α_k`.
    pub guarded_fraction: f64,
    #[serde(default)]
    pub trajectory: Option<Trajectory>,
}

impl RunRecord {
    pub fn converged(&self) -> bool {
        !self.diverged && self.time_to_accuracy <= self.config.budget
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run records always serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

impl Trajectory {
    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.snapshots.iter().map(|s| s.point.as_slice())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).expect("trajectories always serialize");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Reads either a bare trajectory or a run record that carries one.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Either {
            Bare(Trajectory),
            Record(Box<RunRecord>),
        }
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match serde_json::from_str(&text).map_err(|e| Error::parse(path, e))? {
            Either::Bare(t) => Ok(t),
            Either::Record(r) => r
                .trajectory
                .ok_or_else(|| Error::parse(path, "run record has no trajectory snapshots")),
        }
    }
}

/// Euclidean projection onto the domain.
pub fn project(domain: &Domain, x: &[f64]) -> Vec<f64> {
    match domain {
        Domain::AllSpace => x.to_vec(),
        Domain::Ball { center, radius } => {
            let d = linalg::dist(x, center);
            if d <= *radius {
                x.to_vec()
            } else {
                center
                    .iter()
                    .zip(x)
                    .map(|(c, xi)| c + radius * (xi - c) / d)
                    .collect()
            }
        }
    }
}

/// One step as seen by [`run_with_observer`].
#[derive(Debug)]
pub struct StepEvent<'a> {
    pub iteration: u64,
    pub point: &'a [f64],
    pub sample: &'a Sample,
    pub stepsize: f64,
    pub report: &'a StepReport,
    /// Iterate after projection.
    pub next: &'a [f64],
}

pub fn initial_point(instance: &ProblemInstance, config: &RunConfig) -> Result<Vec<f64>> {
    let x0 = match &config.init {
        Init::Zero => vec![0.0; instance.dim],
        Init::Gaussian { scale } => {
            let mut normal = Normal::new(rng::stream_rng(config.seed, &[rng::stream::INIT]));
            linalg::scale(&normal.vector(instance.dim), *scale)
        }
        Init::Spectral => spectral_init(instance)?,
        Init::Point { x } => {
            if x.len() != instance.dim {
                return Err(Error::InvalidConfig(format!(
                    "initial point has dimension {} but the instance expects {}",
                    x.len(),
                    instance.dim
                )));
            }
            x.clone()
        }
    };
    Ok(x0)
}

fn metric_value(instance: &ProblemInstance, metric: Metric, x: &[f64]) -> f64 {
    match metric {
        Metric::ObjectiveGap => instance.objective_gap(x),
        Metric::DistanceToOpt => instance
            .distance_to_opt(x)
            .expect("availability is checked before the run starts"),
    }
}

/// Runs the method to completion. Deterministic in `(instance, config)`.
pub fn run(instance: &ProblemInstance, config: &RunConfig) -> Result<RunRecord> {
    run_with_observer(instance, config, |_| {})
}

/// [`run`] with a callback invoked after every finite step.
pub fn run_with_observer<F>(instance: &ProblemInstance, config: &RunConfig, mut observe: F) -> Result<RunRecord>
where
    F: FnMut(&StepEvent<'_>),
{
    config.validate()?;
    config.model.check_applicable(instance)?;
    if config.metric == Metric::DistanceToOpt && instance.distance_to_opt(&vec![0.0; instance.dim]).is_none() {
        return Err(Error::InvalidConfig(format!(
            "distance to the optimal set is unavailable for {} instances",
            instance.kind.label()
        )));
    }
    if instance.num_samples() == 0 {
        return Err(Error::InvalidConfig("instance has no samples".into()));
    }
    let domain = config.domain.as_ref().unwrap_or(&instance.domain);
    if let Domain::Ball { center, .. } = domain {
        if center.len() != instance.dim {
            return Err(Error::InvalidConfig("ball center has the wrong dimension".into()));
        }
    }

    let mut x = project(domain, &initial_point(instance, config)?);
    let mut sampler = rng::stream_rng(config.seed, &[rng::stream::SAMPLING]);
    let mut scaling =
        (config.model == ModelKind::TruncAdagrad).then(|| ScalingState::new(instance.dim, config.adagrad_delta));
    let mut tracker = SelectionTracker::new(instance.dim, config.seed);

    let budget = config.budget;
    let mut trace = vec![TracePoint {
        iteration: 0,
        value: metric_value(instance, config.metric, &x),
    }];
    let mut trajectory = config.snapshot_stride.map(|stride| Trajectory {
        stride,
        schedule: config.schedule,
        snapshots: vec![Snapshot {
            iteration: 0,
            point: x.clone(),
        }],
    });

    let mut time_to_accuracy = budget + 1;
    let mut diverged = false;
    let mut guarded_steps = 0u64;
    let mut steps = 0u64;

    for k in 1..=budget {
        // TruncAdaGrad keeps α₀ fixed; its metric supplies the decay.
        let alpha = match config.model {
            ModelKind::TruncAdagrad => config.schedule.alpha0,
            _ => config.schedule.stepsize(k),
        };
        let idx = sampler.gen_range(0..instance.num_samples());
        let sample = instance.sample(idx);
        tracker.offer(&x, alpha);

        let report = models::step(config.model, instance, &x, sample, alpha, scaling.as_mut())?;
        steps = k;
        let next = project(domain, &report.next_point);
        if !linalg::all_finite(&next) || linalg::norm(&next) > config.divergence_threshold {
            diverged = true;
            if linalg::all_finite(&next) {
                x = next;
            }
            break;
        }
        if report.guarded_stepsize < alpha {
            guarded_steps += 1;
        }
        observe(&StepEvent {
            iteration: k,
            point: &x,
            sample,
            stepsize: alpha,
            report: &report,
            next: &next,
        });
        x = next;

        if let Some(traj) = trajectory.as_mut() {
            if k % traj.stride == 0 {
                traj.snapshots.push(Snapshot {
                    iteration: k,
                    point: x.clone(),
                });
            }
        }
        if k % config.check_interval == 0 || k == budget {
            let value = metric_value(instance, config.metric, &x);
            if !value.is_finite() {
                diverged = true;
                break;
            }
            trace.push(TracePoint { iteration: k, value });
            if value <= config.epsilon && time_to_accuracy > budget {
                time_to_accuracy = k;
                if config.stop_at_target {
                    break;
                }
            }
        }
    }

    if diverged {
        time_to_accuracy = budget + 1;
    }
    let final_value = metric_value(instance, config.metric, &x);
    let selected_point = tracker.select(config.selection, &x);
    Ok(RunRecord {
        config: config.clone(),
        time_to_accuracy,
        diverged,
        iterations: steps,
        accuracy_trace: trace,
        final_metric: final_value.is_finite().then_some(final_value),
        guarded_fraction: if steps == 0 { 0.0 } else { guarded_steps as f64 / steps as f64 },
        final_point: x,
        selected_point,
        trajectory,
    })
}
