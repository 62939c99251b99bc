#![allow(dead_code)]

use aprox::linalg;
use aprox::models::oracle::{minimize_on_ray, oracle_subproblem, RaySearch};
use aprox::models::{self, ModelKind, ScalingState};
use aprox::problems::{self, ProblemInstance, ProblemKind, Sample};
use aprox::rng::Normal;
use rand::Rng as _;

/// Randomness for test inputs, independent of the crate's own streams.
pub struct Gen(pub Normal);

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen(Normal::from_seed(0xC0FFEE ^ seed.wrapping_mul(0x9E37_79B9)))
    }

    pub fn normal(&mut self) -> f64 {
        self.0.sample()
    }

    pub fn vec(&mut self, n: usize) -> Vec<f64> {
        self.0.vector(n)
    }

    pub fn uniform(&mut self) -> f64 {
        self.0.rng_mut().gen::<f64>()
    }

    pub fn log_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        (lo.ln() + (hi.ln() - lo.ln()) * self.uniform()).exp()
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.0.rng_mut().gen_range(0..n)
    }
}

/// One small instance of every problem family.
pub fn problem_suite(seed: u64) -> Vec<(&'static str, ProblemInstance)> {
    vec![
        ("phase-retrieval", problems::gen_phase_retrieval(4, 20, seed).unwrap()),
        ("matrix-completion", problems::gen_matrix_completion(30, 30, 1, 2, seed).unwrap()),
        ("regression", problems::gen_linear_regression(4, 20, 0.3, seed).unwrap()),
        (
            "abs-regression",
            "abs-regression:n=4,m=20,noise_sd=0.3".parse::<problems::ProblemSpec>().unwrap().generate(seed).unwrap(),
        ),
        ("exponential", problems::gen_exponential_demo()),
    ]
}

fn is_abs_composite(inst: &ProblemInstance, sample: &Sample) -> bool {
    inst.composite_parts(&vec![0.0; inst.dim], sample)
        .map(|p| p.outer == problems::Outer::Abs)
        .unwrap_or(false)
}

/// Violation counts for the model conditions at `points` random draws per
/// (model, problem) pair. Returns `(model, problem, condition, violations, checks)`.
pub fn condition_violations(points: usize, seed: u64) -> Vec<(ModelKind, &'static str, &'static str, usize, usize)> {
    let mut gen = Gen::new(seed);
    let mut out = Vec::new();
    for (name, inst) in problem_suite(seed) {
        for kind in ModelKind::ALL {
            if kind.check_applicable(&inst).is_err() {
                continue;
            }
            let mut counts = [0usize; 5];
            let mut checks = [0usize; 5];
            for _ in 0..points {
                let s = inst.sample(gen.index(inst.num_samples())).clone();
                let x = gen.vec(inst.dim);
                let y1 = gen.vec(inst.dim);
                let y2 = gen.vec(inst.dim);
                let theta = gen.uniform();
                let mv = |q: &[f64]| models::model_value(kind, &inst, &x, q, &s).unwrap();
                let f = |q: &[f64]| inst.loss(q, &s);
                let rho = inst.weak_convexity(&s);

                // convex in y
                let mix: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
                checks[0] += 1;
                if mv(&mix) > theta * mv(&y1) + (1.0 - theta) * mv(&y2) + 1e-9 {
                    counts[0] += 1;
                }
                // below f plus the weak-convexity quadratic
                checks[1] += 1;
                if mv(&y1) > f(&y1) + 0.5 * rho * linalg::dist_sq(&y1, &x) + 1e-9 {
                    counts[1] += 1;
                }
                // exact at the center
                checks[2] += 1;
                let fx = f(&x);
                if (mv(&x) - fx).abs() > 1e-12 * (1.0 + fx.abs()) {
                    counts[2] += 1;
                }
                // subgradient at the center matches the one the step uses
                checks[3] += 1;
                let g_model = models::model_subgradient_at_center(kind, &inst, &x, &s).unwrap();
                let g = inst.subgradient(&x, &s);
                if linalg::dist(&g_model, &g) > 1e-12 * (1.0 + linalg::norm(&g)) {
                    counts[3] += 1;
                }
                // bounded below by the loss infimum
                let lower_bounded = matches!(kind, ModelKind::Truncated | ModelKind::TruncAdagrad)
                    || (kind == ModelKind::ProxLinear && is_abs_composite(&inst, &s));
                if lower_bounded {
                    checks[4] += 1;
                    let far = linalg::scale(&y1, 10.0);
                    if mv(&y1) < inst.inf_loss(&s) || mv(&far) < inst.inf_loss(&s) {
                        counts[4] += 1;
                    }
                }
            }
            for (i, cond) in ["convexity", "lower-model", "center-value", "center-subgradient", "lower-bounded"].into_iter().enumerate() {
                if checks[i] > 0 {
                    out.push((kind, name, cond, counts[i], checks[i]));
                }
            }
        }
    }
    out
}

/// Largest iterate error of each closed-form step against the ray oracle
/// over `cases` random inputs.
pub fn oracle_errors(cases: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut gen = Gen::new(seed);
    let mut worst = vec![
        ("subgradient", 0.0f64),
        ("truncated", 0.0),
        ("prox-linear-abs", 0.0),
        ("prox-linear-square", 0.0),
        ("full-prox-regression", 0.0),
        ("full-prox-phase-retrieval", 0.0),
        ("trunc-adagrad", 0.0),
    ];
    for _ in 0..cases {
        let n = 1 + gen.index(6);
        let x = gen.vec(n);
        let g = linalg::scale(&gen.vec(n), gen.log_uniform(0.1, 10.0));
        let alpha = gen.log_uniform(1e-2, 1e2);
        let f_inf = gen.normal();
        let f_val = f_inf + gen.log_uniform(1e-3, 1e2);
        let c_val = gen.normal() * gen.log_uniform(0.1, 10.0);
        let record = |slot: usize, got: &[f64], want: &[f64], worst: &mut Vec<(&'static str, f64)>| {
            worst[slot].1 = worst[slot].1.max(linalg::dist(got, want));
        };

        let linear = |y: &[f64]| f_val + linalg::dot(&g, &linalg::sub(y, &x));
        let search = RaySearch::new(g.clone());

        let got = models::step_subgradient(&x, &g, alpha).next_point;
        let want = oracle_subproblem(linear, &x, alpha, &search).unwrap();
        record(0, &got, &want, &mut worst);

        let got = models::step_truncated(&x, f_val, f_inf, &g, alpha).unwrap().next_point;
        let want = oracle_subproblem(|y: &[f64]| linear(y).max(f_inf), &x, alpha, &search).unwrap();
        record(1, &got, &want, &mut worst);

        let lin_c = |y: &[f64]| c_val + linalg::dot(&g, &linalg::sub(y, &x));
        let got = models::step_prox_linear_abs(&x, c_val, &g, alpha).next_point;
        let want = oracle_subproblem(|y: &[f64]| lin_c(y).abs(), &x, alpha, &search).unwrap();
        record(2, &got, &want, &mut worst);

        let got = models::step_prox_linear_square(&x, c_val, &g, alpha).next_point;
        let want = oracle_subproblem(|y: &[f64]| lin_c(y).powi(2), &x, alpha, &search).unwrap();
        record(3, &got, &want, &mut worst);

        // Exact prox on one regression sample and one phase-retrieval sample.
        let a = gen.vec(n);
        let b = gen.normal();
        let reg = ProblemInstance::regression_from(vec![a.clone()], vec![0.0; n], &[b], problems::RegressionLoss::Squared);
        let s = reg.sample(0).clone();
        let got = models::step_full_prox(&reg, &x, &s, alpha).unwrap().next_point;
        let want = oracle_subproblem(|y: &[f64]| reg.loss(y, &s), &x, alpha, &RaySearch::new(a.clone())).unwrap();
        record(4, &got, &want, &mut worst);

        let x_star = gen.vec(n);
        let pr = ProblemInstance::phase_retrieval_from(vec![a.clone()], x_star);
        let s = pr.sample(0).clone();
        let rho = pr.weak_convexity(&s);
        let got = models::step_full_prox(&pr, &x, &s, alpha).unwrap().next_point;
        let model = |y: &[f64]| pr.loss(y, &s) + 0.5 * rho * linalg::dist_sq(y, &x);
        let want = oracle_subproblem(model, &x, alpha, &RaySearch::new(a.clone()).with_grid(20_001)).unwrap();
        record(5, &got, &want, &mut worst);

        // TruncAdaGrad: hinge plus the diagonal metric, searched along D⁻¹g.
        let mut state = ScalingState::new(n, models::DEFAULT_ADAGRAD_DELTA);
        for v in state.diag_accum.iter_mut() {
            *v = gen.log_uniform(1e-2, 1e2);
        }
        let mut after = state.clone();
        let got = models::step_trunc_adagrad(&x, f_val, f_inf, &g, alpha, &mut after).unwrap().next_point;
        let diag = after.diagonal();
        let direction: Vec<f64> = g.iter().zip(&diag).map(|(gi, d)| gi / d).collect();
        let objective = |y: &[f64]| {
            let d = linalg::sub(y, &x);
            let quad: f64 = d.iter().zip(&diag).map(|(di, hi)| di * di * hi).sum();
            linear(y).max(f_inf) + quad / (2.0 * alpha)
        };
        let search = RaySearch::new(direction);
        let t = minimize_on_ray(objective, &x, &search).unwrap();
        let want = linalg::add_scaled(&x, t, &search.unit_direction());
        record(6, &got, &want, &mut worst);
    }
    worst
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

pub fn is_phase_retrieval(inst: &ProblemInstance) -> bool {
    inst.kind == ProblemKind::PhaseRetrieval
}
