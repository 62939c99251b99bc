use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::ModelKind;
use crate::optimizer::{self, Init, Metric, RunConfig, StepsizeSchedule};
use crate::problems::gen_exponential_demo;

const DEMO_BUDGET: u64 = 1000;
const DEMO_TARGET: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoTrace {
    pub model: ModelKind,
    pub diverged: bool,
    /// First iteration with `|x_k| <= 0.1`, if any.
    pub reached_target_at: Option<u64>,
    pub iterations: u64,
    /// `(k, x_k)` for every finite iterate, starting at `k = 0`.
    pub iterates: Vec<(u64, f64)>,
}

/// Subgradient and truncated methods on `e^x + e^{-x}` with `α_k = 1/k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceDemo {
    pub x1: f64,
    pub subgradient: DemoTrace,
    pub truncated: DemoTrace,
}

pub fn divergence_demo(x1: f64) -> Result<DivergenceDemo> {
    let instance = gen_exponential_demo();
    let trace = |model: ModelKind| -> Result<DemoTrace> {
        let mut cfg = RunConfig::new(model, StepsizeSchedule::new(1.0, 1.0)?, DEMO_BUDGET, DEMO_TARGET, 0);
        cfg.metric = Metric::DistanceToOpt;
        cfg.check_interval = 1;
        cfg.init = Init::Point { x: vec![x1] };
        cfg.snapshot_stride = Some(1);
        let record = optimizer::run(&instance, &cfg)?;
        let iterates = record
            .trajectory
            .as_ref()
            .map(|t| t.snapshots.iter().map(|s| (s.iteration, s.point[0])).collect())
            .unwrap_or_default();
        Ok(DemoTrace {
            model,
            diverged: record.diverged,
            reached_target_at: record.converged().then_some(record.time_to_accuracy),
            iterations: record.iterations,
            iterates,
        })
    };
    Ok(DivergenceDemo {
        x1,
        subgradient: trace(ModelKind::Subgradient)?,
        truncated: trace(ModelKind::Truncated)?,
    })
}
