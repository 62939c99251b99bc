//! Stochastic finite-sum objectives `F(x) = (1/m) Σ f(x; s_i)`.
//!
//! A [`ProblemInstance`] owns its samples together with the structural
//! oracles the model-based methods need: the instantaneous loss, a
//! subgradient (with the kink convention `sign(0) = 0`), the per-sample
//! weak-convexity constant, the loss infimum and, for composite losses
//! `f = h ∘ c`, the inner value and gradient.

mod generate;
mod io;
mod spectral;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, sign, CompensatedSum};

pub use generate::{
    gen_exponential_demo, gen_linear_regression, gen_matrix_completion, gen_phase_retrieval,
    ProblemSpec,
};
pub use spectral::{spectral_init, SPECTRAL_MAX_ITERS};

/// One draw `s` from the empirical distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Sample {
    /// Phase retrieval or regression record `(a, b)`.
    Measurement { a: Vec<f64>, b: f64 },
    /// Observed matrix entry `M[i][j]`.
    Entry { i: usize, j: usize, value: f64 },
    /// The deterministic exponential demo has a single, empty sample.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionLoss {
    /// `(<a, x> - b)^2`
    Squared,
    /// `|<a, x> - b|`
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ProblemKind {
    PhaseRetrieval,
    MatrixCompletion {
        rows: usize,
        cols: usize,
        rank: usize,
        rank_hat: usize,
    },
    Regression {
        loss: RegressionLoss,
    },
    ExponentialDemo,
}

impl ProblemKind {
    pub fn label(&self) -> &'static str {
        match self {
            ProblemKind::PhaseRetrieval => "phase-retrieval",
            ProblemKind::MatrixCompletion { .. } => "matrix-completion",
            ProblemKind::Regression {
                loss: RegressionLoss::Squared,
            } => "regression",
            ProblemKind::Regression {
                loss: RegressionLoss::Absolute,
            } => "abs-regression",
            ProblemKind::ExponentialDemo => "exponential",
        }
    }
}

/// Feasible set `X`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    #[default]
    AllSpace,
    Ball { center: Vec<f64>, radius: f64 },
}

impl Domain {
    pub fn contains(&self, x: &[f64], rel_tol: f64) -> bool {
        match self {
            Domain::AllSpace => true,
            Domain::Ball { center, radius } => {
                linalg::dist(x, center) <= radius * (1.0 + rel_tol)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    None,
    /// The optimal set contains `{x*, -x*}`.
    SignFlip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// A representative minimizer `x*`.
    pub point: Vec<f64>,
    pub symmetry: Symmetry,
    /// `F(x*)`.
    pub optimal_value: f64,
    /// Generating parameter when it differs from the minimizer (noisy regression).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted: Option<Vec<f64>>,
}

/// Outer convex function `h` of a composite loss `f = h ∘ c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outer {
    Abs,
    Square,
}

impl Outer {
    #[inline]
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Outer::Abs => t.abs(),
            Outer::Square => t * t,
        }
    }

    /// A subgradient of `h` at `t` (kink convention for `|.|`).
    #[inline]
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Outer::Abs => sign(t),
            Outer::Square => 2.0 * t,
        }
    }
}

/// `c(x; s)`, `∇c(x; s)` and the outer function.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeParts {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub outer: Outer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub kind: ProblemKind,
    /// Seed the instance was generated from, when generated.
    #[serde(default)]
    pub seed: Option<u64>,
    pub dim: usize,
    pub samples: Vec<Sample>,
    #[serde(default)]
    pub ground_truth: Option<GroundTruth>,
    #[serde(default)]
    pub domain: Domain,
    /// Every sample attains its infimum at the ground truth.
    pub interpolating: bool,
}

impl ProblemInstance {
    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn sample(&self, index: usize) -> &Sample {
        &self.samples[index]
    }

    fn check_dim(&self, x: &[f64]) {
        assert_eq!(
            x.len(),
            self.dim,
            "parameter has dimension {} but the instance expects {}",
            x.len(),
            self.dim
        );
    }

    fn rank_hat(&self) -> usize {
        match self.kind {
            ProblemKind::MatrixCompletion { rank_hat, .. } => rank_hat,
            _ => unreachable!("rank_hat queried on a non matrix-completion instance"),
        }
    }

    /// Row `i` of `X` and row `j` of `Y` inside the flattened parameter.
    fn factor_rows<'a>(&self, x: &'a [f64], i: usize, j: usize) -> (&'a [f64], &'a [f64]) {
        let (rows, r) = match self.kind {
            ProblemKind::MatrixCompletion { rows, rank_hat, .. } => (rows, rank_hat),
            _ => unreachable!(),
        };
        let xi = &x[i * r..(i + 1) * r];
        let off = rows * r + j * r;
        (xi, &x[off..off + r])
    }

    /// `c(x; s)` for composite kinds; `f(x; s)` itself is `outer(c)`.
    fn inner_value(&self, x: &[f64], s: &Sample) -> Option<(f64, Outer)> {
        match (&self.kind, s) {
            (ProblemKind::PhaseRetrieval, Sample::Measurement { a, b }) => {
                let u = linalg::dot(a, x);
                Some((u * u - b, Outer::Abs))
            }
            (ProblemKind::Regression { loss }, Sample::Measurement { a, b }) => {
                let outer = match loss {
                    RegressionLoss::Squared => Outer::Square,
                    RegressionLoss::Absolute => Outer::Abs,
                };
                Some((linalg::dot(a, x) - b, outer))
            }
            (ProblemKind::MatrixCompletion { .. }, Sample::Entry { i, j, value }) => {
                let (xi, yj) = self.factor_rows(x, *i, *j);
                Some((linalg::dot(xi, yj) - value, Outer::Abs))
            }
            (ProblemKind::ExponentialDemo, Sample::Unit) => None,
            (kind, s) => panic!("sample {s:?} does not belong to a {} instance", kind.label()),
        }
    }

    /// Instantaneous loss `f(x; s)`.
    ///
    /// # Panics
    /// If `x.len() != self.dim`.
    pub fn loss(&self, x: &[f64], s: &Sample) -> f64 {
        self.check_dim(x);
        match self.inner_value(x, s) {
            Some((c, outer)) => outer.apply(c),
            None => x[0].exp() + (-x[0]).exp(),
        }
    }

    /// An element of `∂f(x; s)`; `sign(0) = 0` at kinks.
    pub fn subgradient(&self, x: &[f64], s: &Sample) -> Vec<f64> {
        self.loss_and_subgradient(x, s).1
    }

    pub fn loss_and_subgradient(&self, x: &[f64], s: &Sample) -> (f64, Vec<f64>) {
        match self.kind {
            ProblemKind::ExponentialDemo => {
                self.check_dim(x);
                let (ep, em) = (x[0].exp(), (-x[0]).exp());
                (ep + em, vec![ep - em])
            }
            _ => {
                let parts = self
                    .composite_parts(x, s)
                    .expect("every non-demo kind is composite");
                let scale = parts.outer.derivative(parts.value);
                (
                    parts.outer.apply(parts.value),
                    linalg::scale(&parts.gradient, scale),
                )
            }
        }
    }

    /// Per-sample weak-convexity constant `ρ(s)`.
    pub fn weak_convexity(&self, s: &Sample) -> f64 {
        match (&self.kind, s) {
            (ProblemKind::PhaseRetrieval, Sample::Measurement { a, .. }) => 2.0 * linalg::norm_sq(a),
            (ProblemKind::MatrixCompletion { .. }, _) => 1.0,
            (ProblemKind::Regression { .. }, _) | (ProblemKind::ExponentialDemo, _) => 0.0,
            (kind, s) => panic!("sample {s:?} does not belong to a {} instance", kind.label()),
        }
    }

    /// `ρ̄ = (1/m) Σ ρ(s_i)`.
    pub fn mean_weak_convexity(&self) -> f64 {
        let acc: CompensatedSum = self.samples.iter().map(|s| self.weak_convexity(s)).collect();
        acc.value() / self.samples.len() as f64
    }

    /// `inf_z f(z; s)`.
    pub fn inf_loss(&self, _s: &Sample) -> f64 {
        match self.kind {
            ProblemKind::ExponentialDemo => 2.0,
            _ => 0.0,
        }
    }

    /// Composite decomposition `f = h ∘ c` with scalar `c`.
    pub fn composite_parts(&self, x: &[f64], s: &Sample) -> Result<CompositeParts> {
        self.check_dim(x);
        let (value, outer) = self.inner_value(x, s).ok_or_else(|| {
            Error::UnsupportedStructure(format!(
                "{} losses have no composite decomposition",
                self.kind.label()
            ))
        })?;
        let gradient = match (&self.kind, s) {
            (ProblemKind::PhaseRetrieval, Sample::Measurement { a, .. }) => {
                linalg::scale(a, 2.0 * linalg::dot(a, x))
            }
            (ProblemKind::Regression { .. }, Sample::Measurement { a, .. }) => a.clone(),
            (ProblemKind::MatrixCompletion { rows, .. }, Sample::Entry { i, j, .. }) => {
                let r = self.rank_hat();
                let (xi, yj) = self.factor_rows(x, *i, *j);
                let mut g = vec![0.0; self.dim];
                g[i * r..(i + 1) * r].copy_from_slice(yj);
                let off = rows * r + j * r;
                g[off..off + r].copy_from_slice(xi);
                g
            }
            _ => unreachable!(),
        };
        Ok(CompositeParts {
            value,
            gradient,
            outer,
        })
    }

    pub fn is_composite(&self) -> bool {
        !matches!(self.kind, ProblemKind::ExponentialDemo)
    }

    /// `F(x) = (1/m) Σ f(x; s_i)` with compensated accumulation.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.check_dim(x);
        let acc: CompensatedSum = self.samples.iter().map(|s| self.loss(x, s)).collect();
        acc.value() / self.samples.len() as f64
    }

    /// `F(x) - F(x*)`, falling back to `F(x) - 0` when no ground truth exists.
    pub fn objective_gap(&self, x: &[f64]) -> f64 {
        let opt = self
            .ground_truth
            .as_ref()
            .map(|g| g.optimal_value)
            .unwrap_or(0.0);
        self.objective(x) - opt
    }

    /// Distance to the (representable) optimal set.
    ///
    /// Sign-flip orbits use `min(|x - x*|, |x + x*|)`. Matrix completion has a
    /// manifold of minimizers and reports `None`.
    pub fn distance_to_opt(&self, x: &[f64]) -> Option<f64> {
        if matches!(self.kind, ProblemKind::MatrixCompletion { .. }) {
            return None;
        }
        let gt = self.ground_truth.as_ref()?;
        self.check_dim(x);
        let direct = linalg::dist(x, &gt.point);
        Some(match gt.symmetry {
            Symmetry::None => direct,
            Symmetry::SignFlip => {
                let flipped = x
                    .iter()
                    .zip(&gt.point)
                    .map(|(a, b)| (a + b) * (a + b))
                    .sum::<f64>()
                    .sqrt();
                direct.min(flipped)
            }
        })
    }

    /// Minimizer in the optimal orbit nearest to `x`.
    pub fn nearest_minimizer(&self, x: &[f64]) -> Option<Vec<f64>> {
        let gt = self.ground_truth.as_ref()?;
        match gt.symmetry {
            Symmetry::SignFlip if linalg::dist(x, &gt.point) > self.distance_to_opt(x)? => {
                Some(linalg::scale(&gt.point, -1.0))
            }
            _ => Some(gt.point.clone()),
        }
    }
}
