//! Moreau-envelope diagnostics for weakly convex finite sums.
//!
//! For `λ > ρ̄` the auxiliary objective `G(y) = F(y) + (λ/2)|y - x|^2` is
//! `(λ - ρ̄)`-strongly convex, so `x^λ = argmin G`, `F_λ(x) = G(x^λ)` and
//! `∇F_λ(x) = λ (x - x^λ)` are well defined. The norm of that gradient
//! measures near-stationarity of `x`.
//!
//! `G` is minimized by deterministic full-batch prox-linear iterations: every
//! composite term `h(c_i)` is linearized inside `h`, and the resulting convex
//! subproblem is solved to machine precision (a box-constrained dual QP for
//! `h = |·|`, a linear system for `h = (·)^2`). Step acceptance uses a
//! sufficient-decrease test on `G`, with a proximal damping term that grows
//! on rejection.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::optimizer::Trajectory;
use crate::problems::{Domain, Outer, ProblemInstance};

pub const DEFAULT_INNER_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_INNER_BUDGET: usize = 100_000;

const SUFFICIENT_DECREASE: f64 = 0.1;
const DUAL_MAX_SWEEPS: usize = 20_000;
const MAX_UNRESOLVED_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConfig {
    pub lambda: f64,
    pub inner_tolerance: f64,
    pub inner_budget: usize,
}

impl EnvelopeConfig {
    pub fn new(lambda: f64) -> Self {
        EnvelopeConfig {
            lambda,
            inner_tolerance: DEFAULT_INNER_TOLERANCE,
            inner_budget: DEFAULT_INNER_BUDGET,
        }
    }

    /// `λ = 2 max(ρ̄, 1)`.
    pub fn for_instance(instance: &ProblemInstance) -> Self {
        EnvelopeConfig::new(2.0 * instance.mean_weak_convexity().max(1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub query: Vec<f64>,
    /// `x^λ = prox_{F/λ}(x)`.
    pub prox_point: Vec<f64>,
    /// `F_λ(x)`.
    pub envelope_value: f64,
    /// `∇F_λ(x) = λ (x - x^λ)`.
    pub grad: Vec<f64>,
    pub inner_iterations: usize,
    pub converged: bool,
    /// Norm of a subgradient of `G` at `x^λ` assembled from the final
    /// subproblem's multipliers (kink terms) and signs (everything else).
    pub certificate_norm: f64,
}

impl EnvelopePoint {
    pub fn grad_norm(&self) -> f64 {
        linalg::norm(&self.grad)
    }
}

fn check_config(instance: &ProblemInstance, config: &EnvelopeConfig) -> Result<f64> {
    let rho_bar = instance.mean_weak_convexity();
    if !(config.lambda > rho_bar) {
        return Err(Error::InvalidConfig(format!(
            "envelope parameter λ = {} must exceed the mean weak-convexity constant {rho_bar}",
            config.lambda
        )));
    }
    if !(config.inner_tolerance > 0.0) || config.inner_budget == 0 {
        return Err(Error::InvalidConfig(
            "inner tolerance and budget must be positive".into(),
        ));
    }
    if !matches!(instance.domain, Domain::AllSpace) {
        return Err(Error::InvalidConfig(
            "envelope computations support unconstrained instances only".into(),
        ));
    }
    Ok(rho_bar)
}

/// Computes `x^λ`, `F_λ(x)` and `∇F_λ(x)`.
pub fn prox_point(instance: &ProblemInstance, x: &[f64], config: &EnvelopeConfig) -> Result<EnvelopePoint> {
    check_config(instance, config)?;
    assert_eq!(x.len(), instance.dim, "query has the wrong dimension");
    let lambda = config.lambda;
    let aux = |y: &[f64]| instance.objective(y) + 0.5 * lambda * linalg::dist_sq(y, x);

    let solve = if instance.is_composite() {
        solve_composite(instance, x, config)
    } else {
        solve_smooth(instance, x, config)
    };
    let Solution {
        point,
        iterations,
        converged,
        certificate_norm,
    } = solve;

    let (start, end) = (aux(x), aux(&point));
    if end > start + 1e-12 * (1.0 + start.abs()) {
        return Err(Error::ContractViolation(format!(
            "inner solver increased the auxiliary objective ({start} -> {end})"
        )));
    }
    let grad = linalg::sub(x, &point)
        .into_iter()
        .map(|d| lambda * d)
        .collect();
    Ok(EnvelopePoint {
        query: x.to_vec(),
        envelope_value: end,
        prox_point: point,
        grad,
        inner_iterations: iterations,
        converged,
        certificate_norm,
    })
}

/// `∇F_λ(x) = λ (x - x^λ)`.
pub fn envelope_gradient(instance: &ProblemInstance, x: &[f64], config: &EnvelopeConfig) -> Result<Vec<f64>> {
    Ok(prox_point(instance, x, config)?.grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityEntry {
    pub iteration: u64,
    pub grad_norm: f64,
    pub envelope_value: f64,
    /// Running `Σ α_k |∇F_λ(x_k)|^2` over the snapshots so far.
    pub weighted_sum: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityTrace {
    pub lambda: f64,
    pub entries: Vec<StationarityEntry>,
}

/// Envelope-gradient norms along stored iterates.
///
/// Snapshot `k` contributes `α_{max(k,1)} |∇F_λ(x_k)|^2` to the running sum.
pub fn stationarity_trace(
    instance: &ProblemInstance,
    trajectory: &Trajectory,
    config: &EnvelopeConfig,
) -> Result<StationarityTrace> {
    if trajectory.snapshots.is_empty() {
        return Err(Error::InvalidConfig("trajectory has no snapshots".into()));
    }
    check_config(instance, config)?;
    let points: Vec<EnvelopePoint> = trajectory
        .snapshots
        .par_iter()
        .map(|s| prox_point(instance, &s.point, config))
        .collect::<Result<_>>()?;
    let mut running = 0.0;
    let entries = trajectory
        .snapshots
        .iter()
        .zip(&points)
        .map(|(snap, p)| {
            let norm = p.grad_norm();
            running += trajectory.schedule.stepsize(snap.iteration.max(1)) * norm * norm;
            StationarityEntry {
                iteration: snap.iteration,
                grad_norm: norm,
                envelope_value: p.envelope_value,
                weighted_sum: running,
                converged: p.converged,
            }
        })
        .collect();
    Ok(StationarityTrace {
        lambda: config.lambda,
        entries,
    })
}

struct Solution {
    point: Vec<f64>,
    iterations: usize,
    converged: bool,
    certificate_norm: f64,
}

/// Linearized data `c_i(y)`, `∇c_i(y)` for every sample.
struct Linearization {
    values: Vec<f64>,
    grads: Vec<Vec<f64>>,
    outer: Outer,
}

fn linearize(instance: &ProblemInstance, y: &[f64]) -> Linearization {
    let mut values = Vec::with_capacity(instance.num_samples());
    let mut grads = Vec::with_capacity(instance.num_samples());
    let mut outer = Outer::Abs;
    for s in &instance.samples {
        let parts = instance
            .composite_parts(y, s)
            .expect("composite instances decompose every sample");
        values.push(parts.value);
        grads.push(parts.gradient);
        outer = parts.outer;
    }
    Linearization { values, grads, outer }
}

/// Solves `min_d (1/m) Σ h(c_i + <g_i, d>) + (κ/2)|d - w|^2` exactly.
///
/// Returns the step and, for `h = |·|`, the dual multipliers `u_i ∈ [-1, 1]`.
fn solve_linearized(lin: &Linearization, w: &[f64], kappa: f64) -> (Vec<f64>, Vec<f64>) {
    let m = lin.values.len() as f64;
    match lin.outer {
        Outer::Square => {
            // ((2/m) GᵀG + κ I) d = κ w - (2/m) Gᵀc
            let n = w.len();
            let mut system = DMatrix::<f64>::identity(n, n) * kappa;
            let mut rhs = DVector::<f64>::from_iterator(n, w.iter().map(|v| kappa * v));
            for (c, g) in lin.values.iter().zip(&lin.grads) {
                for r in 0..n {
                    rhs[r] -= 2.0 / m * c * g[r];
                    for q in 0..n {
                        system[(r, q)] += 2.0 / m * g[r] * g[q];
                    }
                }
            }
            let d = system
                .cholesky()
                .expect("regularized normal equations are positive definite")
                .solve(&rhs);
            let multipliers = lin.values.iter().map(|c| 2.0 * c).collect();
            (d.iter().copied().collect(), multipliers)
        }
        Outer::Abs => {
            // Dual coordinate ascent on max_{|u|<=1} (1/m) uᵀ(c + G w) - |Gᵀu|^2 / (2κm^2),
            // with primal d(u) = w - Gᵀu / (κ m).
            let mut u = vec![0.0; lin.values.len()];
            let mut d = w.to_vec();
            let norms: Vec<f64> = lin.grads.iter().map(|g| linalg::norm_sq(g)).collect();
            let scale = kappa * m;
            for _ in 0..DUAL_MAX_SWEEPS {
                let mut moved = 0.0f64;
                for (i, g) in lin.grads.iter().enumerate() {
                    if norms[i] == 0.0 {
                        u[i] = linalg::sign(lin.values[i]);
                        continue;
                    }
                    let residual = lin.values[i] + linalg::dot(g, &d);
                    let target = (u[i] + scale * residual / norms[i]).clamp(-1.0, 1.0);
                    let delta = target - u[i];
                    if delta != 0.0 {
                        u[i] = target;
                        let shift = delta / scale;
                        for (dk, gk) in d.iter_mut().zip(g) {
                            *dk -= shift * gk;
                        }
                        moved = moved.max((shift * norms[i].sqrt()).abs());
                    }
                }
                if moved <= 1e-16 * (1.0 + linalg::norm(&d)) {
                    break;
                }
            }
            (d, u)
        }
    }
}

fn model_value(lin: &Linearization, d: &[f64]) -> f64 {
    let m = lin.values.len() as f64;
    lin.values
        .iter()
        .zip(&lin.grads)
        .map(|(c, g)| lin.outer.apply(c + linalg::dot(g, d)))
        .sum::<f64>()
        / m
}

fn solve_composite(instance: &ProblemInstance, x: &[f64], config: &EnvelopeConfig) -> Solution {
    let lambda = config.lambda;
    let aux = |y: &[f64]| instance.objective(y) + 0.5 * lambda * linalg::dist_sq(y, x);
    let mut y = x.to_vec();
    let mut g_y = aux(&y);
    let mut damping = 0.0f64;
    let mut multipliers = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    // Steps accepted while the predicted decrease is below the rounding
    // level of G, where the value test can no longer tell them apart.
    let mut unresolved = 0;

    while iterations < config.inner_budget {
        iterations += 1;
        let lin = linearize(instance, &y);
        let mut accepted = false;
        for _ in 0..60 {
            let kappa = lambda + damping;
            // (λ/2)|y + d - x|^2 + (L/2)|d|^2 = (κ/2)|d - w|^2 + const
            let w: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| lambda * (xi - yi) / kappa).collect();
            let (d, u) = solve_linearized(&lin, &w, kappa);
            let predicted = g_y
                - (model_value(&lin, &d)
                    + 0.5 * lambda * x.iter().zip(&y).zip(&d).map(|((xi, yi), di)| (yi + di - xi).powi(2)).sum::<f64>()
                    + 0.5 * damping * linalg::norm_sq(&d));
            let candidate: Vec<f64> = y.iter().zip(&d).map(|(a, b)| a + b).collect();
            let g_new = aux(&candidate);
            let step = linalg::norm(&d);
            let noise = 16.0 * f64::EPSILON * (1.0 + g_y.abs());
            let below_noise = step < config.inner_tolerance || predicted <= noise;
            if g_new <= g_y - SUFFICIENT_DECREASE * predicted.max(0.0) || (below_noise && g_new <= g_y + noise) {
                multipliers = u;
                if g_new <= g_y || predicted <= noise {
                    y = candidate;
                    g_y = g_new.min(g_y);
                }
                accepted = true;
                damping *= 0.25;
                if damping < 1e-8 * lambda {
                    damping = 0.0;
                }
                if predicted <= noise {
                    unresolved += 1;
                }
                converged = step < config.inner_tolerance;
                break;
            }
            damping = (2.0 * damping).max(1e-4 * lambda);
        }
        if !accepted || converged || unresolved > MAX_UNRESOLVED_STEPS {
            break;
        }
    }
    let certificate_norm = composite_certificate(instance, x, &y, lambda, &multipliers);
    Solution {
        point: y,
        iterations,
        converged,
        certificate_norm,
    }
}

fn composite_certificate(instance: &ProblemInstance, x: &[f64], y: &[f64], lambda: f64, multipliers: &[f64]) -> f64 {
    let lin = linearize(instance, y);
    let m = lin.values.len() as f64;
    let mut sub: Vec<f64> = y.iter().zip(x).map(|(yi, xi)| lambda * (yi - xi)).collect();
    for (i, (c, g)) in lin.values.iter().zip(&lin.grads).enumerate() {
        let weight = match lin.outer {
            Outer::Square => 2.0 * c,
            Outer::Abs => {
                let kink = 1e-9 * (1.0 + linalg::norm(g) * linalg::norm(y));
                match multipliers.get(i) {
                    Some(&u) if c.abs() <= kink => u,
                    _ => linalg::sign(*c),
                }
            }
        };
        for (sk, gk) in sub.iter_mut().zip(g) {
            *sk += weight * gk / m;
        }
    }
    linalg::norm(&sub)
}

/// Gradient descent with Armijo backtracking for smooth non-composite losses.
fn solve_smooth(instance: &ProblemInstance, x: &[f64], config: &EnvelopeConfig) -> Solution {
    let lambda = config.lambda;
    let m = instance.num_samples() as f64;
    let aux = |y: &[f64]| instance.objective(y) + 0.5 * lambda * linalg::dist_sq(y, x);
    let grad = |y: &[f64]| {
        let mut g: Vec<f64> = y.iter().zip(x).map(|(yi, xi)| lambda * (yi - xi)).collect();
        for s in &instance.samples {
            for (gk, sk) in g.iter_mut().zip(instance.subgradient(y, s)) {
                *gk += sk / m;
            }
        }
        g
    };
    // Strong convexity turns a gradient bound into a distance bound:
    // |y - x^λ| <= |∇G(y)| / (λ - ρ̄) < tolerance.
    let target = config.inner_tolerance * (lambda - instance.mean_weak_convexity());
    let mut y = x.to_vec();
    let mut g_y = aux(&y);
    let mut eta = 1.0 / lambda;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.inner_budget {
        let g = grad(&y);
        let g_sq = linalg::norm_sq(&g);
        if g_sq.sqrt() <= target {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = linalg::add_scaled(&y, -eta, &g);
            let g_new = aux(&candidate);
            let noise = 16.0 * f64::EPSILON * (1.0 + g_y.abs());
            // Below the rounding level of G, fall back to a decrease in |∇G|.
            let accept = if 0.5 * eta * g_sq > noise {
                g_new <= g_y - 0.5 * eta * g_sq
            } else {
                g_new <= g_y + noise && linalg::norm_sq(&grad(&candidate)) < g_sq
            };
            if accept {
                y = candidate;
                g_y = g_new.min(g_y);
                accepted = true;
                eta *= 2.0;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            // No representable decrease left along -g.
            break;
        }
    }
    let certificate_norm = linalg::norm(&grad(&y));
    Solution {
        point: y,
        iterations,
        converged,
        certificate_norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{gen_exponential_demo, gen_linear_regression, gen_phase_retrieval};

    #[test]
    fn minimizer_is_a_prox_fixed_point() {
        let inst = gen_phase_retrieval(4, 30, 3).unwrap();
        let x_star = inst.ground_truth.as_ref().unwrap().point.clone();
        let cfg = EnvelopeConfig::for_instance(&inst);
        let p = prox_point(&inst, &x_star, &cfg).unwrap();
        assert!(linalg::dist(&p.prox_point, &x_star) < 1e-9);
        assert!(p.envelope_value.abs() < 1e-12);
        assert!(p.grad_norm() < 1e-7);
    }

    #[test]
    fn exponential_demo_prox_at_zero_is_zero() {
        let inst = gen_exponential_demo();
        let p = prox_point(&inst, &[0.0], &EnvelopeConfig::new(1.0)).unwrap();
        assert_eq!(p.prox_point, vec![0.0]);
        assert_eq!(p.envelope_value, 2.0);
        assert!(p.converged);
    }

    #[test]
    fn exponential_demo_prox_solves_optimality_condition() {
        let inst = gen_exponential_demo();
        let p = prox_point(&inst, &[1.5], &EnvelopeConfig::new(1.0)).unwrap();
        let y = p.prox_point[0];
        // 2 sinh(y) + (y - 1.5) = 0
        assert!((2.0 * y.sinh() + y - 1.5).abs() < 1e-8, "y = {y}");
    }

    #[test]
    fn rejects_small_lambda() {
        let inst = gen_phase_retrieval(3, 10, 0).unwrap();
        let rho_bar = inst.mean_weak_convexity();
        assert!(matches!(
            prox_point(&inst, &[0.0; 3], &EnvelopeConfig::new(rho_bar)),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn regression_prox_matches_closed_form() {
        let inst = gen_linear_regression(3, 20, 0.2, 5).unwrap();
        let x = vec![0.4, -1.0, 2.0];
        let lambda = 3.0;
        let p = prox_point(&inst, &x, &EnvelopeConfig::new(lambda)).unwrap();
        // (2/m) Aᵀ(Ay - b) + λ(y - x) = 0
        let m = inst.num_samples() as f64;
        let mut sys = DMatrix::<f64>::identity(3, 3) * lambda;
        let mut rhs = DVector::<f64>::from_vec(x.iter().map(|v| lambda * v).collect());
        for s in &inst.samples {
            let crate::problems::Sample::Measurement { a, b } = s else { unreachable!() };
            for r in 0..3 {
                rhs[r] += 2.0 / m * b * a[r];
                for c in 0..3 {
                    sys[(r, c)] += 2.0 / m * a[r] * a[c];
                }
            }
        }
        let y = sys.lu().solve(&rhs).unwrap();
        for r in 0..3 {
            assert!((p.prox_point[r] - y[r]).abs() < 1e-10);
        }
    }

    #[test]
    fn certificate_is_small_on_generic_points() {
        let inst = gen_phase_retrieval(5, 40, 8).unwrap();
        let cfg = EnvelopeConfig::for_instance(&inst);
        let rho_bar = inst.mean_weak_convexity();
        let mut normal = crate::rng::Normal::from_seed(4);
        for _ in 0..10 {
            let x = normal.vector(5);
            let p = prox_point(&inst, &x, &cfg).unwrap();
            assert!(p.converged);
            assert!(
                p.certificate_norm <= 10.0 * cfg.inner_tolerance * (cfg.lambda - rho_bar),
                "certificate {}",
                p.certificate_norm
            );
        }
    }
}
