use nalgebra::DMatrix;

use super::{ProblemInstance, ProblemKind, Sample};
use crate::error::{Error, Result};
use crate::linalg;

pub const SPECTRAL_MAX_ITERS: usize = 200;
const SPECTRAL_VECTOR_TOL: f64 = 1e-12;
const SPECTRAL_VALUE_TOL: f64 = 1e-10;

/// Spectral warm start for phase retrieval and matrix completion.
///
/// For phase retrieval, returns `sqrt(mean b) · v` where `v` is the unit leading eigenvector of
/// `D = (1/m) Σ b_i a_i a_iᵀ`, found by power iteration. Because
/// `E[b] = |x*|^2` for standard normal `a`, the scale estimates `|x*|`.
/// For matrix completion see [`matrix_completion_spectral`].
pub fn spectral_init(instance: &ProblemInstance) -> Result<Vec<f64>> {
    match instance.kind {
        ProblemKind::PhaseRetrieval => {}
        ProblemKind::MatrixCompletion { rows, cols, rank_hat, .. } => {
            return Ok(matrix_completion_spectral(instance, rows, cols, rank_hat))
        }
        _ => {
            return Err(Error::UnsupportedStructure(format!(
                "spectral initialization needs a phase-retrieval or matrix-completion instance, got {}",
                instance.kind.label()
            )))
        }
    }
    let n = instance.dim;
    let m = instance.num_samples() as f64;
    let mut weighted = vec![0.0; n * n];
    let mut mean_b = 0.0;
    for s in &instance.samples {
        let Sample::Measurement { a, b } = s else { unreachable!() };
        mean_b += b / m;
        for r in 0..n {
            let w = b * a[r] / m;
            for c in 0..n {
                weighted[r * n + c] += w * a[c];
            }
        }
    }
    if mean_b == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let v = leading_eigenvector(&weighted, n);
    Ok(linalg::scale(&v, mean_b.sqrt()))
}

/// Balanced rank-`r̂` factors of the rescaled observed matrix.
///
/// With `M̂ = (rows·cols/|Ω|) P_Ω(M) ≈ U Σ Vᵀ` truncated to the top `r̂`
/// singular triples, returns `X = U Σ^{1/2}` and `Y = V Σ^{1/2}` flattened in
/// the instance layout (rows of `X`, then rows of `Y`).
fn matrix_completion_spectral(instance: &ProblemInstance, rows: usize, cols: usize, rank_hat: usize) -> Vec<f64> {
    let scale = (rows * cols) as f64 / instance.num_samples() as f64;
    let mut observed = DMatrix::<f64>::zeros(rows, cols);
    for s in &instance.samples {
        let Sample::Entry { i, j, value } = *s else { unreachable!() };
        observed[(i, j)] += scale * value;
    }
    let svd = observed.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested Vᵀ"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let noise = order.get(rank_hat).map_or(0.0, |&k| svd.singular_values[k]);
    let weights: Vec<f64> = order[..rank_hat]
        .iter()
        .map(|&k| (svd.singular_values[k] - noise).max(0.0).sqrt())
        .collect();
    let mut point = Vec::with_capacity((rows + cols) * rank_hat);
    for i in 0..rows {
        point.extend(order[..rank_hat].iter().zip(&weights).map(|(&k, w)| u[(i, k)] * w));
    }
    for j in 0..cols {
        point.extend(order[..rank_hat].iter().zip(&weights).map(|(&k, w)| v_t[(k, j)] * w));
    }
    point
}

/// Power iteration on a symmetric PSD matrix stored row-major.
///
/// Stops after [`SPECTRAL_MAX_ITERS`] sweeps, or once both the Rayleigh
/// quotient and the unit vector have stopped moving.
pub(crate) fn leading_eigenvector(matrix: &[f64], n: usize) -> Vec<f64> {
    let start = (0..n)
        .max_by(|&i, &j| matrix[i * n + i].total_cmp(&matrix[j * n + j]))
        .unwrap_or(0);
    let mut v = vec![0.0; n];
    v[start] = 1.0;
    let mut value = f64::NAN;
    for _ in 0..SPECTRAL_MAX_ITERS {
        let mut w: Vec<f64> = (0..n)
            .map(|r| linalg::dot(&matrix[r * n..(r + 1) * n], &v))
            .collect();
        let len = linalg::norm(&w);
        if len == 0.0 {
            break;
        }
        w.iter_mut().for_each(|c| *c /= len);
        let moved = linalg::dist(&w, &v);
        let value_change = ((len - value) / len).abs();
        v = w;
        value = len;
        if moved < SPECTRAL_VECTOR_TOL && value_change < SPECTRAL_VALUE_TOL {
            break;
        }
    }
    v
}
