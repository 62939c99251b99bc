mod common;

use aprox::linalg;
use aprox::models::ModelKind;
use aprox::moreau::{self, EnvelopeConfig};
use aprox::optimizer::{self, Init, RunConfig, Snapshot, StepsizeSchedule, Trajectory};
use aprox::problems::{self, ProblemInstance};

/// `F(x) = |x² - 1|`.
fn unit_instance() -> ProblemInstance {
    ProblemInstance::phase_retrieval_from(vec![vec![1.0]], vec![1.0])
}

fn envelope_suite() -> Vec<(&'static str, ProblemInstance)> {
    common::problem_suite(21)
        .into_iter()
        .filter(|(name, _)| *name != "matrix-completion")
        .chain([
            ("matrix-completion", problems::gen_matrix_completion(12, 12, 1, 2, 21).unwrap()),
            ("unit", unit_instance()),
        ])
        .collect()
}

fn kink_subgradient_of_aux(inst: &ProblemInstance, y: &[f64], x: &[f64], lambda: f64) -> Vec<f64> {
    let m = inst.num_samples() as f64;
    let mut g = linalg::scale(&linalg::sub(y, x), lambda);
    for s in &inst.samples {
        g = linalg::add_scaled(&g, 1.0 / m, &inst.subgradient(y, s));
    }
    g
}

#[test]
fn envelope_is_below_every_proximal_value() {
    let mut gen = common::Gen::new(21);
    for (name, inst) in envelope_suite() {
        let cfg = EnvelopeConfig::for_instance(&inst);
        for _ in 0..3 {
            let x = gen.vec(inst.dim);
            let p = moreau::prox_point(&inst, &x, &cfg).unwrap();
            let fx = inst.objective(&x);
            assert!(p.envelope_value <= fx + 1e-9, "{name}");
            assert!(inst.objective(&p.prox_point) <= fx + 1e-12 * (1.0 + fx), "{name}");
            for _ in 0..100 {
                let y = linalg::add_scaled(&x, gen.log_uniform(1e-3, 3.0), &gen.vec(inst.dim));
                let bound = inst.objective(&y) + 0.5 * cfg.lambda * linalg::dist_sq(&y, &x);
                assert!(p.envelope_value <= bound + 1e-9, "{name}: {} > {bound}", p.envelope_value);
            }
        }
    }
}

#[test]
fn gradient_is_lambda_times_displacement() {
    let mut gen = common::Gen::new(22);
    for (name, inst) in envelope_suite() {
        let cfg = EnvelopeConfig::for_instance(&inst);
        let x = gen.vec(inst.dim);
        let p = moreau::prox_point(&inst, &x, &cfg).unwrap();
        let expected = linalg::scale(&linalg::sub(&x, &p.prox_point), cfg.lambda);
        assert_eq!(p.grad, expected, "{name}");
        assert_eq!(moreau::envelope_gradient(&inst, &x, &cfg).unwrap(), expected, "{name}");
    }
}

#[test]
fn optimality_certificate_is_small() {
    let mut gen = common::Gen::new(23);
    for (name, inst) in envelope_suite() {
        let cfg = EnvelopeConfig::for_instance(&inst);
        let bound = 10.0 * cfg.inner_tolerance * (cfg.lambda - inst.mean_weak_convexity());
        for _ in 0..5 {
            let x = linalg::scale(&gen.vec(inst.dim), 2.0);
            let p = moreau::prox_point(&inst, &x, &cfg).unwrap();
            assert!(p.converged, "{name}");
            assert!(p.certificate_norm <= bound, "{name}: {} > {bound}", p.certificate_norm);
        }
    }
}

#[test]
fn kink_convention_certificate_away_from_kinks() {
    let mut gen = common::Gen::new(24);
    let smooth = [
        ("regression", problems::gen_linear_regression(4, 30, 0.3, 24).unwrap()),
        ("exponential", problems::gen_exponential_demo()),
        ("unit", unit_instance()),
    ];
    for (name, inst) in smooth {
        let cfg = EnvelopeConfig::for_instance(&inst);
        let bound = 10.0 * cfg.inner_tolerance * (cfg.lambda - inst.mean_weak_convexity());
        let mut checked = 0;
        for _ in 0..20 {
            let x = linalg::scale(&gen.vec(inst.dim), 3.0);
            let p = moreau::prox_point(&inst, &x, &cfg).unwrap();
            let at_kink = inst
                .samples
                .iter()
                .any(|s| inst.composite_parts(&p.prox_point, s).map_or(false, |c| c.value.abs() < 1e-6));
            if at_kink {
                continue;
            }
            let g = kink_subgradient_of_aux(&inst, &p.prox_point, &x, cfg.lambda);
            assert!(linalg::norm(&g) <= bound, "{name}: {}", linalg::norm(&g));
            checked += 1;
        }
        assert!(checked >= 10, "{name}: only {checked} queries away from kinks");
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let inst = unit_instance();
    let cfg = EnvelopeConfig::new(8.0);
    let value = |x: f64| moreau::prox_point(&inst, &[x], &cfg).unwrap().envelope_value;
    let mut gen = common::Gen::new(25);
    let h = 1e-4;
    for _ in 0..20 {
        let x = -3.0 + 6.0 * gen.uniform();
        let g = moreau::envelope_gradient(&inst, &[x], &cfg).unwrap()[0];
        let fd = (value(x + h) - value(x - h)) / (2.0 * h);
        assert!((fd - g).abs() <= 1e-3 * g.abs(), "x = {x}: fd {fd}, gradient {g}");
    }
}

#[test]
fn prox_point_matches_a_grid_search() {
    let inst = unit_instance();
    let cfg = EnvelopeConfig::new(8.0);
    let x = 2.0;
    let aux = |y: f64| (y * y - 1.0).abs() + 4.0 * (y - x) * (y - x);
    let n = 1_000_000;
    let step = 6.0 / n as f64;
    let mut best = -3.0;
    for i in 0..=n {
        let y = -3.0 + step * i as f64;
        if aux(y) < aux(best) {
            best = y;
        }
    }
    let (mut lo, mut hi) = (best - step, best + step);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-12 {
        let (a, b) = (hi - ratio * (hi - lo), lo + ratio * (hi - lo));
        if aux(a) < aux(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let oracle = 0.5 * (lo + hi);
    let p = moreau::prox_point(&inst, &[x], &cfg).unwrap();
    assert!((p.prox_point[0] - oracle).abs() <= 1e-5, "{} vs {oracle}", p.prox_point[0]);
}

#[test]
fn minimizers_are_fixed_points() {
    let inst = problems::gen_phase_retrieval(5, 50, 26).unwrap();
    let x_star = inst.ground_truth.as_ref().unwrap().point.clone();
    let cfg = EnvelopeConfig::for_instance(&inst);
    let p = moreau::prox_point(&inst, &x_star, &cfg).unwrap();
    assert!(linalg::dist(&p.prox_point, &x_star) <= 1e-12);
    assert!((p.envelope_value - inst.objective(&x_star)).abs() <= 1e-12);

    let frozen = Trajectory {
        stride: 10,
        schedule: StepsizeSchedule::new(1.0, 0.6).unwrap(),
        snapshots: (0..8).map(|i| Snapshot { iteration: 10 * i, point: x_star.clone() }).collect(),
    };
    let trace = moreau::stationarity_trace(&inst, &frozen, &cfg).unwrap();
    assert_eq!(trace.entries.len(), 8);
    for e in &trace.entries {
        assert!(e.grad_norm <= 1e-12 && e.weighted_sum <= 1e-20);
    }
}

#[test]
fn empty_trajectory_is_rejected() {
    let inst = unit_instance();
    let empty = Trajectory {
        stride: 1,
        schedule: StepsizeSchedule::new(1.0, 0.6).unwrap(),
        snapshots: vec![],
    };
    assert!(moreau::stationarity_trace(&inst, &empty, &EnvelopeConfig::new(8.0)).is_err());
}

#[test]
fn weighted_sums_grow_and_level_off_on_a_converging_run() {
    let inst = problems::gen_phase_retrieval(5, 50, 27).unwrap();
    let mut cfg = RunConfig::new(ModelKind::Truncated, StepsizeSchedule::new(0.3, 0.6).unwrap(), 5000, 1e-10, 27);
    cfg.init = Init::Gaussian { scale: 1.0 };
    cfg.stop_at_target = false;
    cfg.snapshot_stride = Some(50);
    let record = optimizer::run(&inst, &cfg).unwrap();
    let trajectory = record.trajectory.unwrap();
    let trace = moreau::stationarity_trace(&inst, &trajectory, &EnvelopeConfig::for_instance(&inst)).unwrap();
    let sums: Vec<f64> = trace.entries.iter().map(|e| e.weighted_sum).collect();
    for w in sums.windows(2) {
        assert!(w[1] >= w[0]);
    }
    let total = *sums.last().unwrap();
    let tail_start = sums[sums.len() * 9 / 10];
    assert!(total > 0.0);
    assert!(total - tail_start <= 0.05 * total, "last decile adds {} of {total}", total - tail_start);
}
