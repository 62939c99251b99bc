//! Brute-force subproblem minimizer used as a test oracle.
//!
//! All closed-form steps in this crate move along a known ray from the
//! center, so a dense grid followed by golden-section refinement in the ray
//! parameter recovers the exact minimizer of any convex model independently
//! of the formulas being checked.

use crate::error::{Error, Result};
use crate::linalg;

const DEFAULT_GRID: usize = 2001;
const MAX_WIDENINGS: usize = 10;
const WIDEN_FACTOR: f64 = 4.0;
const GOLDEN_MAX_ITERS: usize = 300;

/// Ray `origin + t · direction/|direction|` and search settings.
#[derive(Debug, Clone)]
pub struct RaySearch {
    pub direction: Vec<f64>,
    /// Initial bracket in units of the normalized direction.
    pub bracket: (f64, f64),
    pub grid_points: usize,
}

impl RaySearch {
    pub fn new(direction: Vec<f64>) -> Self {
        RaySearch {
            direction,
            bracket: (-1.0, 1.0),
            grid_points: DEFAULT_GRID,
        }
    }

    pub fn with_bracket(mut self, lo: f64, hi: f64) -> Self {
        self.bracket = (lo, hi);
        self
    }

    pub fn with_grid(mut self, points: usize) -> Self {
        self.grid_points = points.max(3);
        self
    }

    pub fn unit_direction(&self) -> Vec<f64> {
        let len = linalg::norm(&self.direction);
        if len == 0.0 {
            vec![0.0; self.direction.len()]
        } else {
            linalg::scale(&self.direction, 1.0 / len)
        }
    }
}

/// Minimizes `t ↦ objective(origin + t·u)` with `u` the unit search direction.
///
/// The bracket grows until the best grid point is interior, at most
/// [`MAX_WIDENINGS`] times. Returns the minimizing `t`.
pub fn minimize_on_ray<F>(objective: F, origin: &[f64], search: &RaySearch) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let unit = search.unit_direction();
    if unit.iter().all(|&u| u == 0.0) {
        return Ok(0.0);
    }
    let phi = |t: f64| objective(&linalg::add_scaled(origin, t, &unit));
    let (mut lo, mut hi) = search.bracket;
    let n = search.grid_points;
    for _ in 0..=MAX_WIDENINGS {
        let step = (hi - lo) / (n - 1) as f64;
        let mut best = 0;
        let mut best_val = f64::INFINITY;
        for i in 0..n {
            let v = phi(lo + step * i as f64);
            if v < best_val {
                best = i;
                best_val = v;
            }
        }
        if best == 0 || best == n - 1 {
            let center = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo) * WIDEN_FACTOR;
            lo = center - half;
            hi = center + half;
            continue;
        }
        let t_grid = lo + step * best as f64;
        let t = golden_section(&phi, t_grid - step, t_grid + step);
        let t = if phi(t) <= best_val { t } else { t_grid };
        return Ok(polish(&phi, t));
    }
    Err(Error::OracleFailure(format!(
        "no interior minimum found after {MAX_WIDENINGS} bracket widenings (last bracket [{lo}, {hi}])"
    )))
}

fn golden_section(phi: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    for _ in 0..GOLDEN_MAX_ITERS {
        if (b - a).abs() <= 1e-13 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = phi(d);
        }
    }
    0.5 * (a + b)
}

/// Parabolic refinement for minimizers inside a smooth piece.
///
/// Golden section stalls at `sqrt(eps)` relative accuracy on flat quadratic
/// bottoms. A three-point parabola with a wide spacing is exact for a
/// quadratic, so its vertex is accepted whenever it does not raise the value
/// beyond rounding noise; near a kink the vertex is off and gets rejected.
fn polish(phi: &impl Fn(f64) -> f64, t: f64) -> f64 {
    let f0 = phi(t);
    let noise = 8.0 * f64::EPSILON * (1.0 + f0.abs());
    let scale = 1.0 + t.abs();
    for spacing in [1e-2, 1e-3, 1e-4] {
        let h = spacing * scale;
        let (fl, fr) = (phi(t - h), phi(t + h));
        let curvature = fl - 2.0 * f0 + fr;
        if !(curvature > 0.0) {
            continue;
        }
        let vertex = t + 0.5 * h * (fl - fr) / curvature;
        if (vertex - t).abs() < h && phi(vertex) <= f0 + noise {
            return vertex;
        }
    }
    t
}

/// Minimizer of `model(y) + |y - x|^2 / (2α)` over the ray described by `search`.
pub fn oracle_subproblem<F>(model: F, x: &[f64], alpha: f64, search: &RaySearch) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let objective = |y: &[f64]| model(y) + linalg::dist_sq(y, x) / (2.0 * alpha);
    let t = minimize_on_ray(objective, x, search)?;
    Ok(linalg::add_scaled(x, t, &search.unit_direction()))
}
