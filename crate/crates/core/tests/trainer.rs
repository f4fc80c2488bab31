use byzfloor::aggregators::{OracleVariant, Rule, SignPolicy};
use byzfloor::attacks::AttackKind;
use byzfloor::experiments::sweep::{run_sweep, SelectionMetric, SweepSpec};
use byzfloor::problems::{NoiseModel, ProblemConfig, ProblemSpec};
use byzfloor::trainer::{
    measure_floor, run, run_honest_baseline, run_monte_carlo, window_len, Momentum, RecordMode, ScheduleSpec, StepSize,
    Trainer,
};
use byzfloor::{Error, RunConfig};
use proptest::prelude::*;

fn hetero(mu: f64, g: f64, b: f64) -> ProblemConfig {
    ProblemConfig { spec: ProblemSpec::HeteroLowerBound { mu, g, b, dim: 1 }, noise: None, byzantine: 0 }
}

fn constant(gamma: f64, momentum: Momentum) -> ScheduleSpec {
    ScheduleSpec { stepsize: StepSize::Constant { gamma }, momentum }
}

#[test]
fn zero_momentum_sends_current_gradients() {
    let cfg = RunConfig {
        problem: ProblemConfig { noise: Some(NoiseModel::Gaussian { sigma: 1.0 }), byzantine: 1, ..hetero(1.0, 1.0, 0.5) },
        rule: Rule::Cwm,
        attack: AttackKind::SignFlip,
        schedule: constant(0.1, Momentum::Zero),
        iterations: 5,
        seed: 3,
        ..RunConfig::default()
    };
    let rec = Trainer::new(&cfg).unwrap().run_replicate(0, RecordMode::Workers).unwrap();
    assert_eq!(rec.workers.len(), 5);
    for snap in &rec.workers {
        for i in 0..3 {
            assert_eq!(snap.momenta[i], snap.gradients[i]);
        }
        assert_eq!(snap.sent[0], snap.gradients[0]);
        assert_eq!(snap.sent[2], snap.gradients[2].neg());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn zero_momentum_equals_constant_zero(seed in 0u64..1000, rule_index in 0usize..4, attack_index in 0usize..3) {
        let rule = [Rule::Average, Rule::Cwtm { q: 1 }, Rule::Krum, Rule::Gm { iters: 20, nu: 1e-8 }][rule_index];
        let attack = [AttackKind::None, AttackKind::SignFlip, AttackKind::alie_default()][attack_index].clone();
        let base = RunConfig {
            problem: ProblemConfig { noise: Some(NoiseModel::Gaussian { sigma: 0.5 }), byzantine: 1, ..hetero(1.0, 1.0, 0.5) },
            rule,
            attack,
            schedule: constant(0.05, Momentum::Zero),
            iterations: 30,
            seed,
            ..RunConfig::default()
        };
        let with_beta = RunConfig { schedule: constant(0.05, Momentum::Constant { beta: 0.0 }), ..base.clone() };
        prop_assert_eq!(run(&base).unwrap().trajectory, run(&with_beta).unwrap().trajectory);
    }
}

#[test]
fn gradient_descent_closed_form() {
    let (mu, gamma, x0) = (2.0, 0.3, 1.5);
    let cfg = RunConfig {
        problem: hetero(mu, 0.0, 0.0),
        schedule: constant(gamma, Momentum::Zero),
        iterations: 40,
        x0: Some(vec![x0]),
        ..RunConfig::default()
    };
    let rec = run(&cfg).unwrap();
    for (t, x) in rec.trajectory.iter().enumerate() {
        let expected = (1.0 - gamma * mu).powi(t as i32) * x0;
        assert!((x.first() - expected).abs() <= 1e-14 * (1.0 + expected.abs()), "t={t}");
    }
    // The floor decays like (1 - γμ)^{2t}.
    for row in &rec.rows {
        let expected = (mu * (1.0 - gamma * mu).powi(row.t as i32) * x0).powi(2);
        assert!((row.grad_norm_sq - expected).abs() <= 1e-12 * (1.0 + expected));
    }
}

#[test]
fn hetero_oracle_is_gradient_descent_on_the_drifted_objective() {
    let (mu, g, b, kappa, gamma) = (1.0, 1.0, 0.5, 0.1, 0.1);
    let cfg = RunConfig {
        problem: hetero(mu, g, b),
        rule: Rule::OracleAdversarial { kappa, variant: OracleVariant::HeteroC1 },
        schedule: constant(gamma, Momentum::Zero),
        iterations: 200,
        x0: Some(vec![2.0]),
        ..RunConfig::default()
    };
    let rec = run(&cfg).unwrap();
    let (delta, eps) = (3f64.sqrt() * b * mu / 2.0, g / 2.0);
    let r = kappa.sqrt();
    let mut x: f64 = 2.0;
    for point in &rec.trajectory {
        assert!((point.first() - x).abs() <= 1e-13 * (1.0 + x.abs()));
        x -= gamma * ((mu - r * delta) * x - r * eps);
    }
    let x_f = r * eps / (mu - r * delta);
    assert!((rec.summary.final_dist_to_ref.unwrap()).abs() < 1e-12);
    let long = run(&RunConfig { iterations: 2000, ..cfg }).unwrap();
    assert!((measure_floor(&long, 0.1).unwrap() - (mu * x_f).powi(2)).abs() < 1e-9);
}

#[test]
fn replicates_are_deterministic_and_distinct() {
    let cfg = RunConfig {
        problem: ProblemConfig { noise: Some(NoiseModel::Gaussian { sigma: 1.0 }), ..hetero(1.0, 1.0, 0.5) },
        schedule: constant(0.05, Momentum::Constant { beta: 0.9 }),
        iterations: 50,
        seed: 11,
        replicates: 4,
        ..RunConfig::default()
    };
    let t = Trainer::new(&cfg).unwrap();
    assert_eq!(t.run_replicate(2, RecordMode::Full).unwrap(), t.run_replicate(2, RecordMode::Full).unwrap());
    assert_ne!(t.run_replicate(0, RecordMode::Full).unwrap().final_x, t.run_replicate(1, RecordMode::Full).unwrap().final_x);
    let mc = run_monte_carlo(&cfg).unwrap();
    assert_eq!(mc.summaries.len(), 4);
    assert_eq!(mc.final_x[3], t.run_replicate(3, RecordMode::Summary).unwrap().final_x);
}

#[test]
fn baseline_without_byzantine_workers_is_the_average() {
    let cfg = RunConfig {
        problem: ProblemConfig { noise: Some(NoiseModel::Gaussian { sigma: 1.0 }), ..hetero(1.0, 1.0, 0.5) },
        schedule: constant(0.05, Momentum::Constant { beta: 0.5 }),
        iterations: 60,
        seed: 2,
        ..RunConfig::default()
    };
    assert_eq!(run_honest_baseline(&cfg).unwrap().trajectory, run(&cfg).unwrap().trajectory);
}

#[test]
fn baseline_matches_oracle_without_dispersion() {
    let cfg = RunConfig {
        problem: hetero(1.0, 0.0, 0.0),
        rule: Rule::OracleAdversarial { kappa: 0.3, variant: OracleVariant::VarianceSign { policy: SignPolicy::Displacement } },
        schedule: constant(0.1, Momentum::Zero),
        iterations: 50,
        ..RunConfig::default()
    };
    assert_eq!(run_honest_baseline(&cfg).unwrap().trajectory, run(&cfg).unwrap().trajectory);
}

#[test]
fn baseline_floor_is_below_the_attacked_floor() {
    let cfg = RunConfig {
        problem: ProblemConfig { noise: Some(NoiseModel::Gaussian { sigma: 3.0 }), ..hetero(1.0, 0.1, 0.0) },
        rule: Rule::OracleAdversarial { kappa: 0.2, variant: OracleVariant::VarianceSign { policy: SignPolicy::Displacement } },
        schedule: constant(0.05, Momentum::Zero),
        iterations: 2000,
        replicates: 8,
        ..RunConfig::default()
    };
    let t = Trainer::new(&cfg).unwrap();
    let (mut attacked, mut honest) = (0.0, 0.0);
    for rep in 0..8 {
        attacked += t.run_replicate(rep, RecordMode::Summary).unwrap().summary.floor_estimate;
        honest += t.run_baseline(rep, RecordMode::Summary).unwrap().summary.floor_estimate;
    }
    assert!(honest < attacked, "baseline {honest} vs attacked {attacked}");
}

#[test]
fn floor_is_stable_across_windows_once_converged() {
    let cfg = RunConfig {
        problem: hetero(1.0, 1.0, 0.5),
        rule: Rule::OracleAdversarial { kappa: 0.1, variant: OracleVariant::HeteroC1 },
        schedule: constant(0.1, Momentum::Zero),
        iterations: 2000,
        ..RunConfig::default()
    };
    let rec = run(&cfg).unwrap();
    let reference = measure_floor(&rec, 0.1).unwrap();
    for frac in [0.05, 0.08, 0.12, 0.15, 0.2] {
        let f = measure_floor(&rec, frac).unwrap();
        assert!((f - reference).abs() <= 0.01 * reference, "window {frac}: {f} vs {reference}");
    }
    assert_eq!(window_len(2000, 0.1), 200);
    assert_eq!(window_len(7, 0.1), 1);
    assert!(measure_floor(&rec, 0.0).is_err());
    assert!(measure_floor(&rec, 1.5).is_err());
}

#[test]
fn summary_mode_matches_full_mode() {
    let cfg = RunConfig {
        problem: ProblemConfig { noise: Some(NoiseModel::Gaussian { sigma: 1.0 }), ..hetero(1.0, 1.0, 0.5) },
        schedule: constant(0.05, Momentum::Zero),
        iterations: 300,
        seed: 5,
        ..RunConfig::default()
    };
    let t = Trainer::new(&cfg).unwrap();
    let full = t.run_replicate(0, RecordMode::Full).unwrap();
    let summary = t.run_replicate(0, RecordMode::Summary).unwrap();
    assert_eq!(full.summary, summary.summary);
    assert_eq!(full.final_x, summary.final_x);
    assert_eq!(full.rows.len(), 301);
    assert_eq!(summary.rows.len(), 30);
    assert!(full.rows.windows(2).all(|w| w[1].t == w[0].t + 1));
}

#[test]
fn schedule_examples() {
    let inv = StepSize::InvSqrt { gamma0: 0.1 };
    assert!((1..=100).all(|t| (inv.at(t, 100) - 0.01).abs() < 1e-15));
    let pl = StepSize::PlPiecewise { alpha: 1.0, s0: 4.0 };
    assert!((1..5).all(|t| pl.at(t, 10) == 0.5));
    assert_eq!(pl.at(5, 10), 0.5);
    assert!((pl.at(6, 10) - 0.4).abs() < 1e-15);
    assert!((pl.at(7, 10) - 1.0 / 3.0).abs() < 1e-15);
    let cos = StepSize::Cosine { gamma0: 0.2, t_max: 50 };
    assert!((cos.at(0, 50) - 0.2).abs() < 1e-15);
    assert!(cos.at(50, 50).abs() < 1e-15);
    for t in 1..200 {
        let (a, b) = (pl.at(t, 200), pl.at(t + 1, 200));
        assert!(b <= a && b >= 2.0 / 3.0 * a);
    }
    let tied = ScheduleSpec { stepsize: StepSize::Constant { gamma: 0.01 }, momentum: Momentum::Tied { c_beta: 36.0 } };
    let (gamma, beta) = tied.at(3, 10, 2.0);
    assert_eq!(gamma, 0.01);
    assert!((beta - (1.0 - 36.0 * 0.01 * 2.0)).abs() < 1e-15);
}

#[test]
fn tied_momentum_rejects_large_steps() {
    let cfg = RunConfig { problem: hetero(1.0, 1.0, 0.5), schedule: constant(0.05, Momentum::Tied { c_beta: 36.0 }), ..RunConfig::default() };
    let err = Trainer::new(&cfg).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!(err.to_string().contains("gamma_t * L <= 1/36"), "{err}");
}

#[test]
fn lyapunov_needs_exact_gradients() {
    let cfg = RunConfig {
        problem: ProblemConfig { noise: Some(NoiseModel::Gaussian { sigma: 1.0 }), ..hetero(1.0, 1.0, 0.5) },
        rule: Rule::OracleAdversarial { kappa: 0.01, variant: OracleVariant::VarianceSign { policy: SignPolicy::Displacement } },
        schedule: constant(0.01, Momentum::Tied { c_beta: 36.0 }),
        track_lyapunov: true,
        ..RunConfig::default()
    };
    assert!(Trainer::new(&cfg).unwrap_err().to_string().contains("sigma = 0"));
    let exact = RunConfig { problem: hetero(1.0, 1.0, 0.1), ..cfg };
    let rec = run(&exact).unwrap();
    let trace = rec.lyapunov.unwrap();
    assert_eq!(trace.values.len(), 100);
    assert!(trace.values.iter().all(|v| *v >= 0.0));
    assert!(trace.initial_bound_holds(1e-12));
}

#[test]
fn oracle_variants_need_their_constructions() {
    let noise_on_hetero = RunConfig {
        problem: hetero(1.0, 1.0, 0.5),
        rule: Rule::OracleAdversarial { kappa: 0.1, variant: OracleVariant::NoiseC2 },
        ..RunConfig::default()
    };
    assert!(Trainer::new(&noise_on_hetero).is_err());
    let hetero_on_noise = RunConfig {
        problem: ProblemConfig { spec: ProblemSpec::NoiseLowerBound { mu: 1.0, b: 0.5, sigma: 1.0, dim: 1 }, noise: None, byzantine: 0 },
        rule: Rule::OracleAdversarial { kappa: 0.1, variant: OracleVariant::HeteroC1 },
        ..RunConfig::default()
    };
    assert!(Trainer::new(&hetero_on_noise).is_err());
    let label_flip_on_quadratic = RunConfig { attack: AttackKind::LabelFlip, problem: ProblemConfig { byzantine: 1, ..hetero(1.0, 1.0, 0.5) }, ..RunConfig::default() };
    assert!(Trainer::new(&label_flip_on_quadratic).is_err());
}

#[test]
fn divergence_is_reported() {
    let cfg = RunConfig { problem: hetero(1.0, 1.0, 0.5), schedule: constant(50.0, Momentum::Zero), iterations: 1000, ..RunConfig::default() };
    assert!(matches!(run(&cfg), Err(Error::NonFinite(_))));
}

#[test]
fn momentum_suppresses_noise_under_attack() {
    let base = RunConfig {
        problem: ProblemConfig { noise: Some(NoiseModel::Gaussian { sigma: 1.0 }), ..hetero(1.0, 0.0, 0.0) },
        rule: Rule::OracleAdversarial { kappa: 0.2, variant: OracleVariant::VarianceSign { policy: SignPolicy::Displacement } },
        x0: Some(vec![2.0]),
        replicates: 10,
        ..RunConfig::default()
    };
    let spec = SweepSpec {
        base,
        gamma0: vec![0.2, 0.1, 0.05, 0.01],
        beta: vec![0.0, 0.9],
        iterations: vec![2000],
        b_squared: vec![],
        kappa: vec![],
        stepsizes: vec!["constant".into()],
        metric: SelectionMetric::FloorEstimate,
    };
    let res = run_sweep(&spec).unwrap();
    let best = |beta: f64| res.best.iter().find(|r| r.beta == Some(beta)).unwrap().metric;
    assert!(best(0.9) < best(0.0), "momentum {} vs plain {}", best(0.9), best(0.0));
}

#[test]
fn classification_with_label_flip_trains() {
    let cfg = RunConfig {
        problem: ProblemConfig {
            spec: ProblemSpec::Classification { task: Default::default(), workers: 8 },
            noise: Some(NoiseModel::Minibatch { m: 8 }),
            byzantine: 2,
        },
        rule: Rule::Cwtm { q: 2 },
        attack: AttackKind::LabelFlip,
        schedule: constant(0.1, Momentum::Constant { beta: 0.9 }),
        iterations: 200,
        x0: Some(vec![0.0]),
        seed: 4,
        ..RunConfig::default()
    };
    let rec = run(&cfg).unwrap();
    assert!(rec.summary.final_f_gap < rec.rows[0].f_gap);
}
