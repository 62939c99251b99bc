use super::{regression_outer, ScalingState, Solver, StepReport};
use crate::error::{Error, Result};
use crate::linalg::{self, sign};
use crate::problems::{CompositeParts, Outer, ProblemInstance, ProblemKind, Sample};

/// Tolerance below which a reported `f - inf f` counts as a misdeclared bound.
const LOWER_BOUND_SLACK: f64 = 1e-12;

fn fixed_point(x: &[f64]) -> StepReport {
    StepReport {
        next_point: x.to_vec(),
        guarded_stepsize: 0.0,
        model_decrease: 0.0,
        solver: Solver::FixedPoint,
    }
}

/// `x - α g`.
pub fn step_subgradient(x: &[f64], g: &[f64], alpha: f64) -> StepReport {
    StepReport {
        next_point: linalg::add_scaled(x, -alpha, g),
        guarded_stepsize: alpha,
        model_decrease: alpha * linalg::norm_sq(g),
        solver: Solver::Gradient,
    }
}

fn check_gap(f_val: f64, f_inf: f64) -> Result<f64> {
    if f_val < f_inf - LOWER_BOUND_SLACK {
        return Err(Error::ContractViolation(format!(
            "loss {f_val} lies below its declared infimum {f_inf}"
        )));
    }
    Ok((f_val - f_inf).max(0.0))
}

/// Truncated-model step: `x - λ g` with `λ = min{α, (f - inf f) / |g|^2}`.
pub fn step_truncated(x: &[f64], f_val: f64, f_inf: f64, g: &[f64], alpha: f64) -> Result<StepReport> {
    let gap = check_gap(f_val, f_inf)?;
    let g_sq = linalg::norm_sq(g);
    if g_sq == 0.0 || gap == 0.0 {
        return Ok(fixed_point(x));
    }
    let polyak = gap / g_sq;
    let (lambda, solver) = if polyak < alpha {
        (polyak, Solver::Truncation)
    } else {
        (alpha, Solver::FullStep)
    };
    Ok(StepReport {
        next_point: linalg::add_scaled(x, -lambda, g),
        guarded_stepsize: lambda,
        model_decrease: lambda * g_sq,
        solver,
    })
}

/// Prox-linear step for `h = |·|`:
/// `argmin_y |c + <∇c, y - x>| + |y - x|^2 / (2α)`.
pub fn step_prox_linear_abs(x: &[f64], c_val: f64, c_grad: &[f64], alpha: f64) -> StepReport {
    let g_sq = linalg::norm_sq(c_grad);
    if c_val == 0.0 {
        return fixed_point(x);
    }
    if g_sq == 0.0 {
        return StepReport {
            solver: Solver::DegenerateConstant,
            ..fixed_point(x)
        };
    }
    let ratio = c_val.abs() / (alpha * g_sq);
    let (magnitude, solver) = if ratio <= 1.0 {
        (ratio, Solver::LinearizationZero)
    } else {
        (1.0, Solver::FullStep)
    };
    let gamma = sign(c_val) * magnitude;
    let new_lin = c_val - gamma * alpha * g_sq;
    StepReport {
        next_point: linalg::add_scaled(x, -alpha * gamma, c_grad),
        guarded_stepsize: alpha * magnitude,
        model_decrease: c_val.abs() - new_lin.abs(),
        solver,
    }
}

/// Prox-linear step for `h = (·)^2`, a regularized least-squares solve.
///
/// The step equals `x - λ ∇(c^2)` with `λ = α / (1 + 2α|∇c|^2)`, which is
/// reported as `guarded_stepsize`.
pub fn step_prox_linear_square(x: &[f64], c_val: f64, c_grad: &[f64], alpha: f64) -> StepReport {
    let g_sq = linalg::norm_sq(c_grad);
    if c_val == 0.0 || g_sq == 0.0 {
        return fixed_point(x);
    }
    let denom = 1.0 + 2.0 * alpha * g_sq;
    let coef = 2.0 * alpha * c_val / denom;
    let new_lin = c_val - coef * g_sq;
    StepReport {
        next_point: linalg::add_scaled(x, -coef, c_grad),
        guarded_stepsize: alpha / denom,
        model_decrease: c_val * c_val - new_lin * new_lin,
        solver: Solver::Quadratic,
    }
}

pub fn step_prox_linear(x: &[f64], parts: &CompositeParts, alpha: f64) -> StepReport {
    match parts.outer {
        Outer::Abs => step_prox_linear_abs(x, parts.value, &parts.gradient, alpha),
        Outer::Square => step_prox_linear_square(x, parts.value, &parts.gradient, alpha),
    }
}

/// Exact proximal step `argmin_y f(y; s) + (ρ(s)/2 + 1/(2α)) |y - x|^2`.
///
/// Regression losses are linear in `<a, y>` so the step reduces to the
/// prox-linear one. Phase retrieval reduces to a scalar problem along
/// `a / |a|` whose minimizer is among at most five analytic candidates.
pub fn step_full_prox(
    instance: &ProblemInstance,
    x: &[f64],
    sample: &Sample,
    alpha: f64,
) -> Result<StepReport> {
    match (&instance.kind, sample) {
        (ProblemKind::Regression { loss }, Sample::Measurement { a, b }) => {
            let rho = instance.weak_convexity(sample);
            let effective = alpha / (1.0 + alpha * rho);
            let c_val = linalg::dot(a, x) - b;
            let report = match regression_outer(*loss) {
                Outer::Square => step_prox_linear_square(x, c_val, a, effective),
                Outer::Abs => step_prox_linear_abs(x, c_val, a, effective),
            };
            Ok(report)
        }
        (ProblemKind::PhaseRetrieval, Sample::Measurement { a, b }) => {
            let rho = instance.weak_convexity(sample);
            Ok(phase_retrieval_prox(x, a, *b, rho, alpha))
        }
        (kind, _) => Err(Error::UnsupportedStructure(format!(
            "no exact proximal step is registered for {} instances",
            kind.label()
        ))),
    }
}

fn phase_retrieval_prox(x: &[f64], a: &[f64], b: f64, rho: f64, alpha: f64) -> StepReport {
    let len = linalg::norm(a);
    if len == 0.0 {
        return fixed_point(x);
    }
    let u = linalg::dot(a, x);
    let curvature = 0.5 * rho + 0.5 / alpha;
    let phi = |t: f64| {
        let w = u + t * len;
        (w * w - b).abs() + curvature * t * t
    };

    let mut candidates = [f64::NAN; 5];
    candidates[0] = 0.0;
    let root = b.sqrt();
    candidates[1] = (root - u) / len;
    candidates[2] = (-root - u) / len;
    // Outside the band |w| >= sqrt(b): d/dt [w^2 - b + c t^2] = 0.
    let t_out = -u * len / (len * len + curvature);
    let w_out = u + t_out * len;
    if w_out * w_out >= b {
        candidates[3] = t_out;
    }
    // Inside the band: d/dt [b - w^2 + c t^2] = 0, with c - |a|^2 = 1/(2α) > 0.
    let t_in = u * len / (curvature - len * len);
    let w_in = u + t_in * len;
    if t_in.is_finite() && w_in * w_in <= b {
        candidates[4] = t_in;
    }

    let mut best = 0.0;
    let mut best_val = phi(0.0);
    for &t in candidates.iter().filter(|t| t.is_finite()) {
        let v = phi(t);
        if v < best_val {
            best = t;
            best_val = v;
        }
    }
    if best == 0.0 {
        return fixed_point(x);
    }
    let next_point = linalg::add_scaled(x, best / len, a);
    let w = u + best * len;
    StepReport {
        model_decrease: (u * u - b).abs() - ((w * w - b).abs() + 0.5 * rho * best * best),
        guarded_stepsize: best.abs() / (2.0 * u.abs() * len).max(f64::MIN_POSITIVE),
        next_point,
        solver: Solver::Candidates,
    }
}

/// Truncated step in the metric `H = diag(sqrt(Σ g_i^2)) + δ I`.
///
/// The accumulator absorbs `g ⊙ g` before the metric is formed, so the
/// current gradient always contributes to its own scaling.
pub fn step_trunc_adagrad(
    x: &[f64],
    f_val: f64,
    f_inf: f64,
    g: &[f64],
    alpha0: f64,
    state: &mut ScalingState,
) -> Result<StepReport> {
    let gap = check_gap(f_val, f_inf)?;
    assert_eq!(state.diag_accum.len(), g.len(), "scaling state has the wrong dimension");
    for (acc, gi) in state.diag_accum.iter_mut().zip(g) {
        *acc += gi * gi;
    }
    let diag = state.diagonal();
    let scaled: Vec<f64> = g.iter().zip(&diag).map(|(gi, d)| gi / d).collect();
    let metric_sq = linalg::dot(g, &scaled);
    if metric_sq == 0.0 || gap == 0.0 {
        return Ok(fixed_point(x));
    }
    let polyak = gap / metric_sq;
    let (lambda, solver) = if polyak < alpha0 {
        (polyak, Solver::Truncation)
    } else {
        (alpha0, Solver::FullStep)
    };
    Ok(StepReport {
        next_point: linalg::add_scaled(x, -lambda, &scaled),
        guarded_stepsize: lambda,
        model_decrease: lambda * metric_sq,
        solver,
    })
}
