//! Models `f_x(·; s)` of the sampled loss and exact minimizers of the
//! per-iteration subproblem
//!
//! ```text
//! x_{k+1} = argmin_y { f_{x_k}(y; s_k) + |y - x_k|^2 / (2 α_k) }.
//! ```
//!
//! Every closed form here moves along a single ray from the center, which is
//! what lets [`oracle`] check them by brute-force one-dimensional search.

pub mod oracle;
mod steps;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::problems::{Outer, ProblemInstance, ProblemKind, RegressionLoss, Sample};

pub use steps::{
    step_full_prox, step_prox_linear, step_prox_linear_abs, step_prox_linear_square,
    step_subgradient, step_trunc_adagrad, step_truncated,
};

/// Floor added to the AdaGrad diagonal.
pub const DEFAULT_ADAGRAD_DELTA: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Linear model `f(x) + <g, y - x>`.
    Subgradient,
    /// Linear model clipped below at `inf f(·; s)`.
    Truncated,
    /// `h(c(x) + <∇c(x), y - x>)` for composite `f = h ∘ c`.
    ProxLinear,
    /// `f(y) + (ρ(s)/2)|y - x|^2`.
    FullProximal,
    /// Truncated model in the AdaGrad diagonal metric.
    TruncAdagrad,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Subgradient,
        ModelKind::Truncated,
        ModelKind::ProxLinear,
        ModelKind::FullProximal,
        ModelKind::TruncAdagrad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Subgradient => "subgradient",
            ModelKind::Truncated => "truncated",
            ModelKind::ProxLinear => "prox-linear",
            ModelKind::FullProximal => "full-proximal",
            ModelKind::TruncAdagrad => "trunc-adagrad",
        }
    }

    /// Steps never exceed the nominal stepsize.
    pub fn is_guarded(self) -> bool {
        matches!(
            self,
            ModelKind::Truncated | ModelKind::ProxLinear | ModelKind::TruncAdagrad
        )
    }

    pub fn check_applicable(self, instance: &ProblemInstance) -> Result<()> {
        let ok = match self {
            ModelKind::Subgradient | ModelKind::Truncated | ModelKind::TruncAdagrad => true,
            ModelKind::ProxLinear => instance.is_composite(),
            ModelKind::FullProximal => has_exact_prox(instance),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::UnsupportedStructure(format!(
                "the {} model is not available for {} instances",
                self.name(),
                instance.kind.label()
            )))
        }
    }
}

pub(crate) fn has_exact_prox(instance: &ProblemInstance) -> bool {
    matches!(
        instance.kind,
        ProblemKind::PhaseRetrieval | ProblemKind::Regression { .. }
    )
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "subgradient" | "sgm" => ModelKind::Subgradient,
            "truncated" => ModelKind::Truncated,
            "prox-linear" => ModelKind::ProxLinear,
            "full-proximal" | "proximal" | "full-prox" => ModelKind::FullProximal,
            "trunc-adagrad" => ModelKind::TruncAdagrad,
            other => return Err(Error::InvalidConfig(format!("unknown model '{other}'"))),
        })
    }
}

/// Which closed form produced a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Gradient,
    /// Sample already at its infimum, or zero gradient.
    FixedPoint,
    /// Guarded step stopped where the model hits the lower bound.
    Truncation,
    /// Guarded step took the full nominal stepsize.
    FullStep,
    /// Prox-linear landed on the zero set of the linearized inner map.
    LinearizationZero,
    /// Prox-linear with `∇c = 0` and `c != 0`: the model is constant.
    DegenerateConstant,
    /// Closed-form least-squares prox.
    Quadratic,
    /// Best of the enumerated scalar candidates of the phase-retrieval prox.
    Candidates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Minimizer of the subproblem, before any projection.
    pub next_point: Vec<f64>,
    /// Effective stepsize `λ_k`; equals `α_k` for the subgradient model.
    pub guarded_stepsize: f64,
    /// `f_x(x; s) - f_x(next; s)`.
    pub model_decrease: f64,
    pub solver: Solver,
}

/// Running per-coordinate sum of squared gradients for TruncAdaGrad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingState {
    pub diag_accum: Vec<f64>,
    pub delta: f64,
}

impl ScalingState {
    pub fn new(dim: usize, delta: f64) -> Self {
        ScalingState {
            diag_accum: vec![0.0; dim],
            delta,
        }
    }

    /// Current diagonal `D = sqrt(accum) + δ`.
    pub fn diagonal(&self) -> Vec<f64> {
        self.diag_accum.iter().map(|a| a.sqrt() + self.delta).collect()
    }
}

/// Value of the model `f_x(y; s)` centered at `center`.
///
/// The TruncAdaGrad model is the truncated model; only its proximal metric
/// differs.
pub fn model_value(
    kind: ModelKind,
    instance: &ProblemInstance,
    center: &[f64],
    query: &[f64],
    sample: &Sample,
) -> Result<f64> {
    kind.check_applicable(instance)?;
    Ok(match kind {
        ModelKind::Subgradient => linear_value(instance, center, query, sample),
        ModelKind::Truncated | ModelKind::TruncAdagrad => {
            linear_value(instance, center, query, sample).max(instance.inf_loss(sample))
        }
        ModelKind::ProxLinear => {
            let parts = instance.composite_parts(center, sample)?;
            let shift = linalg::sub(query, center);
            parts
                .outer
                .apply(parts.value + linalg::dot(&parts.gradient, &shift))
        }
        ModelKind::FullProximal => {
            instance.loss(query, sample)
                + 0.5 * instance.weak_convexity(sample) * linalg::dist_sq(query, center)
        }
    })
}

fn linear_value(instance: &ProblemInstance, center: &[f64], query: &[f64], sample: &Sample) -> f64 {
    let (f, g) = instance.loss_and_subgradient(center, sample);
    let shift = linalg::sub(query, center);
    f + linalg::dot(&g, &shift)
}

/// The subgradient of the model at its own center that the step uses.
pub fn model_subgradient_at_center(
    kind: ModelKind,
    instance: &ProblemInstance,
    center: &[f64],
    sample: &Sample,
) -> Result<Vec<f64>> {
    kind.check_applicable(instance)?;
    Ok(match kind {
        ModelKind::ProxLinear => {
            let parts = instance.composite_parts(center, sample)?;
            linalg::scale(&parts.gradient, parts.outer.derivative(parts.value))
        }
        _ => instance.subgradient(center, sample),
    })
}

/// One model step from `x` on `sample` with stepsize `alpha`.
///
/// `scaling` must be supplied for [`ModelKind::TruncAdagrad`] and is updated
/// in place.
pub fn step(
    kind: ModelKind,
    instance: &ProblemInstance,
    x: &[f64],
    sample: &Sample,
    alpha: f64,
    scaling: Option<&mut ScalingState>,
) -> Result<StepReport> {
    match kind {
        ModelKind::Subgradient => Ok(step_subgradient(x, &instance.subgradient(x, sample), alpha)),
        ModelKind::Truncated => {
            let (f, g) = instance.loss_and_subgradient(x, sample);
            step_truncated(x, f, instance.inf_loss(sample), &g, alpha)
        }
        ModelKind::ProxLinear => {
            let parts = instance.composite_parts(x, sample)?;
            Ok(step_prox_linear(x, &parts, alpha))
        }
        ModelKind::FullProximal => step_full_prox(instance, x, sample, alpha),
        ModelKind::TruncAdagrad => {
            let state = scaling.ok_or_else(|| {
                Error::InvalidConfig("trunc-adagrad needs a scaling state".into())
            })?;
            let (f, g) = instance.loss_and_subgradient(x, sample);
            step_trunc_adagrad(x, f, instance.inf_loss(sample), &g, alpha, state)
        }
    }
}

/// Outer function of a regression loss.
pub(crate) fn regression_outer(loss: RegressionLoss) -> Outer {
    match loss {
        RegressionLoss::Squared => Outer::Square,
        RegressionLoss::Absolute => Outer::Abs,
    }
}
