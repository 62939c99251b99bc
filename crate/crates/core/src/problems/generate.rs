use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{
    Domain, GroundTruth, ProblemInstance, ProblemKind, RegressionLoss, Sample, Symmetry,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, Normal};

/// Real phase retrieval: `a_i, x* ~ N(0, I_n)`, `b_i = <a_i, x*>^2`.
pub fn gen_phase_retrieval(n: usize, m: usize, seed: u64) -> Result<ProblemInstance> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidConfig(format!(
            "phase retrieval needs n >= 1 and m >= 1 (got n={n}, m={m})"
        )));
    }
    let mut normal = Normal::from_seed(rng::derive_seed(seed, &[rng::stream::DATA]));
    let x_star = normal.vector(n);
    let rows: Vec<Vec<f64>> = (0..m).map(|_| normal.vector(n)).collect();
    let mut inst = ProblemInstance::phase_retrieval_from(rows, x_star);
    inst.seed = Some(seed);
    Ok(inst)
}

/// Matrix completion with planted factors `X*` (rows x r) and `Y*` (cols x r).
///
/// `|Ω| = 5 (cols·r + rows·r)` distinct entries are drawn uniformly without
/// replacement. The parameter is `(X, Y)` with `rank_hat` columns, laid out as
/// the rows of `X` followed by the rows of `Y`.
pub fn gen_matrix_completion(
    rows: usize,
    cols: usize,
    rank: usize,
    rank_hat: usize,
    seed: u64,
) -> Result<ProblemInstance> {
    if rank == 0 || rank > rank_hat || rank_hat > rows.min(cols) {
        return Err(Error::InvalidConfig(format!(
            "matrix completion needs 1 <= r <= r_hat <= min(rows, cols) \
             (got r={rank}, r_hat={rank_hat}, rows={rows}, cols={cols})"
        )));
    }
    let observed = 5 * (cols * rank + rows * rank);
    if observed > rows * cols {
        return Err(Error::InvalidConfig(format!(
            "|Ω| = {observed} exceeds the {rows}x{cols} matrix"
        )));
    }
    let mut normal = Normal::from_seed(rng::derive_seed(seed, &[rng::stream::DATA]));
    let x_star: Vec<Vec<f64>> = (0..rows).map(|_| normal.vector(rank)).collect();
    let y_star: Vec<Vec<f64>> = (0..cols).map(|_| normal.vector(rank)).collect();
    let picks = index::sample(normal.rng_mut(), rows * cols, observed);
    let samples = picks
        .iter()
        .map(|flat| {
            let (i, j) = (flat / cols, flat % cols);
            Sample::Entry {
                i,
                j,
                value: linalg::dot(&x_star[i], &y_star[j]),
            }
        })
        .collect();

    let mut point = Vec::with_capacity((rows + cols) * rank_hat);
    for row in x_star.iter().chain(&y_star) {
        point.extend_from_slice(row);
        point.extend(std::iter::repeat(0.0).take(rank_hat - rank));
    }
    Ok(ProblemInstance {
        kind: ProblemKind::MatrixCompletion {
            rows,
            cols,
            rank,
            rank_hat,
        },
        seed: Some(seed),
        dim: (rows + cols) * rank_hat,
        samples,
        ground_truth: Some(GroundTruth {
            point,
            symmetry: Symmetry::None,
            optimal_value: 0.0,
            planted: None,
        }),
        domain: Domain::AllSpace,
        interpolating: true,
    })
}

/// Squared-loss linear regression `b_i = <a_i, x*> + noise_sd · z_i`.
pub fn gen_linear_regression(
    n: usize,
    m: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    gen_regression(n, m, noise_sd, RegressionLoss::Squared, seed)
}

fn gen_regression(
    n: usize,
    m: usize,
    noise_sd: f64,
    loss: RegressionLoss,
    seed: u64,
) -> Result<ProblemInstance> {
    if n == 0 || m == 0 || !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "regression needs n, m >= 1 and a finite noise_sd >= 0 (got n={n}, m={m}, noise_sd={noise_sd})"
        )));
    }
    let mut normal = Normal::from_seed(rng::derive_seed(seed, &[rng::stream::DATA]));
    let x_star = normal.vector(n);
    let rows: Vec<Vec<f64>> = (0..m).map(|_| normal.vector(n)).collect();
    let noise: Vec<f64> = (0..m).map(|_| noise_sd * normal.sample()).collect();
    let mut inst = ProblemInstance::regression_from(rows, x_star, &noise, loss);
    inst.seed = Some(seed);
    Ok(inst)
}

/// `f(x) = e^x + e^{-x}`: one deterministic sample, minimizer 0, value 2.
pub fn gen_exponential_demo() -> ProblemInstance {
    ProblemInstance {
        kind: ProblemKind::ExponentialDemo,
        seed: None,
        dim: 1,
        samples: vec![Sample::Unit],
        ground_truth: Some(GroundTruth {
            point: vec![0.0],
            symmetry: Symmetry::None,
            optimal_value: 2.0,
            planted: None,
        }),
        domain: Domain::AllSpace,
        interpolating: true,
    }
}

impl ProblemInstance {
    /// Phase retrieval from explicit measurement vectors and signal.
    pub fn phase_retrieval_from(rows: Vec<Vec<f64>>, x_star: Vec<f64>) -> ProblemInstance {
        let n = x_star.len();
        let samples = rows
            .into_iter()
            .map(|a| {
                assert_eq!(a.len(), n, "measurement vector has the wrong length");
                let u = linalg::dot(&a, &x_star);
                Sample::Measurement { a, b: u * u }
            })
            .collect();
        ProblemInstance {
            kind: ProblemKind::PhaseRetrieval,
            seed: None,
            dim: n,
            samples,
            ground_truth: Some(GroundTruth {
                point: x_star,
                symmetry: Symmetry::SignFlip,
                optimal_value: 0.0,
                planted: None,
            }),
            domain: Domain::AllSpace,
            interpolating: true,
        }
    }

    /// Regression from explicit design rows, planted parameter and additive noise.
    ///
    /// With nonzero noise and squared loss the recorded minimizer is the
    /// least-squares solution and the planted parameter is kept alongside it.
    pub fn regression_from(
        rows: Vec<Vec<f64>>,
        x_star: Vec<f64>,
        noise: &[f64],
        loss: RegressionLoss,
    ) -> ProblemInstance {
        assert_eq!(rows.len(), noise.len());
        let n = x_star.len();
        let noiseless = noise.iter().all(|&z| z == 0.0);
        let samples: Vec<Sample> = rows
            .into_iter()
            .zip(noise)
            .map(|(a, z)| {
                assert_eq!(a.len(), n, "design row has the wrong length");
                let b = linalg::dot(&a, &x_star) + z;
                Sample::Measurement { a, b }
            })
            .collect();
        let mut inst = ProblemInstance {
            kind: ProblemKind::Regression { loss },
            seed: None,
            dim: n,
            samples,
            ground_truth: None,
            domain: Domain::AllSpace,
            interpolating: noiseless,
        };
        inst.ground_truth = if noiseless {
            Some(GroundTruth {
                point: x_star,
                symmetry: Symmetry::None,
                optimal_value: 0.0,
                planted: None,
            })
        } else {
            match loss {
                RegressionLoss::Squared => least_squares(&inst.samples, n).map(|point| {
                    let optimal_value = inst.objective(&point);
                    GroundTruth {
                        point,
                        symmetry: Symmetry::None,
                        optimal_value,
                        planted: Some(x_star),
                    }
                }),
                // Least absolute deviations has no closed form.
                RegressionLoss::Absolute => None,
            }
        };
        inst
    }
}

fn least_squares(samples: &[Sample], n: usize) -> Option<Vec<f64>> {
    let m = samples.len();
    let mut design = DMatrix::<f64>::zeros(m, n);
    let mut target = DVector::<f64>::zeros(m);
    for (r, s) in samples.iter().enumerate() {
        if let Sample::Measurement { a, b } = s {
            for (c, v) in a.iter().enumerate() {
                design[(r, c)] = *v;
            }
            target[r] = *b;
        }
    }
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * target;
    let chol = gram.cholesky()?;
    Some(chol.solve(&rhs).iter().copied().collect())
}

/// Problem family plus generation parameters, as named on the command line
/// and in sweep configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemSpec {
    PhaseRetrieval {
        n: usize,
        m: usize,
    },
    MatrixCompletion {
        rows: usize,
        cols: usize,
        rank: usize,
        rank_hat: usize,
    },
    Regression {
        n: usize,
        m: usize,
        #[serde(default)]
        noise_sd: f64,
    },
    AbsRegression {
        n: usize,
        m: usize,
        #[serde(default)]
        noise_sd: f64,
    },
    Exponential,
}

impl ProblemSpec {
    pub fn generate(&self, seed: u64) -> Result<ProblemInstance> {
        match *self {
            ProblemSpec::PhaseRetrieval { n, m } => gen_phase_retrieval(n, m, seed),
            ProblemSpec::MatrixCompletion {
                rows,
                cols,
                rank,
                rank_hat,
            } => gen_matrix_completion(rows, cols, rank, rank_hat, seed),
            ProblemSpec::Regression { n, m, noise_sd } => gen_linear_regression(n, m, noise_sd, seed),
            ProblemSpec::AbsRegression { n, m, noise_sd } => {
                gen_regression(n, m, noise_sd, RegressionLoss::Absolute, seed)
            }
            ProblemSpec::Exponential => Ok(gen_exponential_demo()),
        }
    }

    /// Whether the data depend on the seed at all.
    pub fn is_random(&self) -> bool {
        !matches!(self, ProblemSpec::Exponential)
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemSpec::PhaseRetrieval { n, m } => write!(f, "phase-retrieval:n={n},m={m}"),
            ProblemSpec::MatrixCompletion {
                rows,
                cols,
                rank,
                rank_hat,
            } => write!(
                f,
                "matrix-completion:rows={rows},cols={cols},rank={rank},rank_hat={rank_hat}"
            ),
            ProblemSpec::Regression { n, m, noise_sd } => {
                write!(f, "regression:n={n},m={m},noise_sd={noise_sd}")
            }
            ProblemSpec::AbsRegression { n, m, noise_sd } => {
                write!(f, "abs-regression:n={n},m={m},noise_sd={noise_sd}")
            }
            ProblemSpec::Exponential => write!(f, "exponential"),
        }
    }
}

/// Parses `name[:key=value,...]`, e.g. `phase-retrieval:n=10,m=200`.
impl FromStr for ProblemSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let (name, rest) = text.split_once(':').unwrap_or((text, ""));
        let mut params = std::collections::BTreeMap::new();
        for pair in rest.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = pair.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("problem parameter '{pair}' is not key=value"))
            })?;
            params.insert(k.trim().to_string(), v.trim().to_string());
        }
        let take = |params: &mut std::collections::BTreeMap<String, String>, key: &str| {
            params.remove(key)
        };
        let int = |params: &mut std::collections::BTreeMap<String, String>,
                   key: &str,
                   default: Option<usize>|
         -> Result<usize> {
            match take(params, key) {
                Some(v) => v.parse().map_err(|_| {
                    Error::InvalidConfig(format!("problem parameter {key}='{v}' is not an integer"))
                }),
                None => default.ok_or_else(|| {
                    Error::InvalidConfig(format!("problem '{name}' needs parameter '{key}'"))
                }),
            }
        };
        let float = |params: &mut std::collections::BTreeMap<String, String>,
                     key: &str|
         -> Result<f64> {
            match take(params, key) {
                Some(v) => v.parse().map_err(|_| {
                    Error::InvalidConfig(format!("problem parameter {key}='{v}' is not a number"))
                }),
                None => Ok(0.0),
            }
        };
        let spec = match name {
            "phase-retrieval" => ProblemSpec::PhaseRetrieval {
                n: int(&mut params, "n", None)?,
                m: int(&mut params, "m", None)?,
            },
            "matrix-completion" => {
                let rank = int(&mut params, "rank", None)?;
                ProblemSpec::MatrixCompletion {
                    rows: int(&mut params, "rows", None)?,
                    cols: int(&mut params, "cols", None)?,
                    rank,
                    rank_hat: int(&mut params, "rank_hat", Some(rank))?,
                }
            }
            "regression" => ProblemSpec::Regression {
                n: int(&mut params, "n", None)?,
                m: int(&mut params, "m", None)?,
                noise_sd: float(&mut params, "noise_sd")?,
            },
            "abs-regression" => ProblemSpec::AbsRegression {
                n: int(&mut params, "n", None)?,
                m: int(&mut params, "m", None)?,
                noise_sd: float(&mut params, "noise_sd")?,
            },
            "exponential" => ProblemSpec::Exponential,
            other => {
                return Err(Error::InvalidConfig(format!("unknown problem '{other}'")));
            }
        };
        if let Some(key) = params.keys().next() {
            return Err(Error::InvalidConfig(format!(
                "unknown parameter '{key}' for problem '{name}'"
            )));
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(inst: &ProblemInstance) -> String {
        serde_json::to_string(inst).unwrap()
    }

    #[test]
    fn phase_retrieval_is_interpolating_with_sign_symmetry() {
        let inst = gen_phase_retrieval(8, 40, 5).unwrap();
        let gt = inst.ground_truth.clone().unwrap();
        assert!(inst.interpolating);
        assert_eq!(gt.symmetry, Symmetry::SignFlip);
        assert_eq!(inst.objective(&gt.point), 0.0);
        let neg: Vec<f64> = gt.point.iter().map(|v| -v).collect();
        assert_eq!(inst.objective(&neg), 0.0);
        for s in &inst.samples {
            let Sample::Measurement { b, .. } = s else { panic!() };
            assert!(*b >= 0.0);
        }
    }

    #[test]
    fn full_scale_phase_retrieval_shapes() {
        let inst = gen_phase_retrieval(50, 1000, 1).unwrap();
        assert_eq!(inst.dim, 50);
        assert_eq!(inst.num_samples(), 1000);
    }

    #[test]
    fn zero_signal_gives_zero_measurements() {
        let inst = ProblemInstance::phase_retrieval_from(vec![vec![1.0]], vec![0.0]);
        assert_eq!(inst.samples[0], Sample::Measurement { a: vec![1.0], b: 0.0 });
        assert_eq!(inst.objective(&[0.0]), 0.0);
    }

    #[test]
    fn matrix_completion_full_scale_counts() {
        let inst = gen_matrix_completion(2000, 2400, 5, 5, 3).unwrap();
        assert_eq!(inst.num_samples(), 110_000);
        assert_eq!(inst.dim, (2000 + 2400) * 5);
        let over = gen_matrix_completion(2000, 2400, 5, 10, 3).unwrap();
        assert_eq!(over.dim, (2000 + 2400) * 10);
        assert_eq!(over.num_samples(), 110_000);
    }

    #[test]
    fn matrix_completion_entries_are_distinct_and_in_range() {
        let inst = gen_matrix_completion(30, 40, 2, 4, 9).unwrap();
        let mut seen = std::collections::HashSet::new();
        for s in &inst.samples {
            let Sample::Entry { i, j, .. } = s else { panic!() };
            assert!(*i < 30 && *j < 40);
            assert!(seen.insert((*i, *j)));
        }
        let gt = inst.ground_truth.as_ref().unwrap();
        assert_eq!(inst.objective(&gt.point), 0.0);
        for s in &inst.samples {
            assert_eq!(inst.loss(&gt.point, s), inst.inf_loss(s));
        }
        assert_eq!(inst.distance_to_opt(&gt.point), None);
    }

    #[test]
    fn matrix_completion_rejects_oversampling() {
        // 5 (3 + 3) = 30 > 3 * 3
        assert!(matches!(
            gen_matrix_completion(3, 3, 1, 1, 0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(gen_matrix_completion(10, 10, 3, 2, 0).is_err());
    }

    #[test]
    fn noiseless_regression_interpolates() {
        let inst = gen_linear_regression(5, 100, 0.0, 2).unwrap();
        assert!(inst.interpolating);
        let gt = inst.ground_truth.as_ref().unwrap();
        assert_eq!(inst.objective(&gt.point), 0.0);
    }

    #[test]
    fn noisy_regression_planted_value_is_mean_squared_noise() {
        let seed = 4;
        let inst = gen_linear_regression(5, 100, 0.1, seed).unwrap();
        assert!(!inst.interpolating);
        // Replay the generator stream to recover the noise draws.
        let mut normal = Normal::from_seed(rng::derive_seed(seed, &[rng::stream::DATA]));
        let _ = normal.vector(5);
        for _ in 0..100 {
            let _ = normal.vector(5);
        }
        let noise: Vec<f64> = (0..100).map(|_| 0.1 * normal.sample()).collect();
        let expected = noise.iter().map(|z| z * z).sum::<f64>() / 100.0;
        let gt = inst.ground_truth.as_ref().unwrap();
        let planted = gt.planted.as_ref().unwrap();
        let value = inst.objective(planted);
        assert!(expected > 0.0);
        assert!((value - expected).abs() < 1e-12 * (1.0 + expected), "{value} vs {expected}");
        // The least-squares minimizer does no worse than the planted parameter.
        assert!(gt.optimal_value <= value);
        assert!((inst.objective(&gt.point) - gt.optimal_value).abs() <= 1e-10 * 100.0);
    }

    #[test]
    fn two_point_regression_minimized_at_planted() {
        let inst = ProblemInstance::regression_from(
            vec![vec![1.0], vec![-1.0]],
            vec![0.7],
            &[0.0, 0.0],
            RegressionLoss::Squared,
        );
        assert_eq!(inst.objective(&[0.7]), 0.0);
        for dx in [-0.1, 0.05, 0.3] {
            assert!(inst.objective(&[0.7 + dx]) > 0.0);
            // F(x) = (x - x*)^2 exactly.
            assert!((inst.objective(&[0.7 + dx]) - dx * dx).abs() < 1e-15);
        }
    }

    #[test]
    fn exponential_demo_values() {
        let inst = gen_exponential_demo();
        let s = inst.sample(0).clone();
        assert_eq!(inst.loss(&[0.0], &s), 2.0);
        assert_eq!(inst.subgradient(&[0.0], &s), vec![0.0]);
        let e = std::f64::consts::E;
        assert!((inst.loss(&[1.0], &s) - (e + 1.0 / e)).abs() < 1e-14);
        assert!((inst.loss(&[1.0], &s) - 3.0862).abs() < 1e-4);
        assert_eq!(inst.inf_loss(&s), 2.0);
        assert_eq!(inst.objective(&[0.0]), 2.0);
        assert_eq!(inst.objective_gap(&[0.0]), 0.0);
    }

    #[test]
    fn generators_are_seed_deterministic() {
        assert_eq!(
            bits(&gen_phase_retrieval(6, 30, 17).unwrap()),
            bits(&gen_phase_retrieval(6, 30, 17).unwrap())
        );
        assert_eq!(
            bits(&gen_matrix_completion(20, 25, 2, 3, 17).unwrap()),
            bits(&gen_matrix_completion(20, 25, 2, 3, 17).unwrap())
        );
        assert_eq!(
            bits(&gen_linear_regression(4, 30, 0.2, 17).unwrap()),
            bits(&gen_linear_regression(4, 30, 0.2, 17).unwrap())
        );
        assert_ne!(
            bits(&gen_phase_retrieval(6, 30, 17).unwrap()),
            bits(&gen_phase_retrieval(6, 30, 18).unwrap())
        );
    }

    #[test]
    fn spec_strings_parse_and_print() {
        for text in [
            "phase-retrieval:n=10,m=200",
            "matrix-completion:rows=60,cols=80,rank=3,rank_hat=6",
            "regression:n=5,m=100,noise_sd=0.1",
            "exponential",
        ] {
            let spec: ProblemSpec = text.parse().unwrap();
            let again: ProblemSpec = spec.to_string().parse().unwrap();
            assert_eq!(spec, again);
        }
        let err = "phase-retrieval:n=3,m=4,q=1".parse::<ProblemSpec>().unwrap_err();
        assert!(err.to_string().contains("'q'"));
        let err = "banana".parse::<ProblemSpec>().unwrap_err();
        assert!(err.to_string().contains("banana"));
    }
}
