//! Built-in verification suite. Predicted values are recomputed from closed
//! forms every time; nothing is hard-coded.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sweep::{run_sweep, SelectionMetric, SweepSpec};
use crate::aggregators::{aggregate, AggregatorSpec, OracleContext, OracleVariant, Rule, SignPolicy};
use crate::attacks::{alie, AdversaryView, DEFAULT_ALIE_CANDIDATES};
use crate::config::RunConfig;
use crate::error::Result;
use crate::population::{honest_mean, WorkerPopulation};
use crate::problems::dissimilarity::{certify_dissimilarity, minimal_g, sample_check_dissimilarity};
use crate::problems::{Construction, NoiseModel, ProblemConfig, ProblemInstance, ProblemSpec, QuadraticLocal};
use crate::rng::{Purpose, RngStream, StreamId};
use crate::trainer::schedule::{momentum_pl_alpha, momentum_pl_s0_min, rdsgd_pl_alpha, rdsgd_pl_s0_min};
use crate::trainer::{Momentum, RecordMode, ScheduleSpec, StepSize, Trainer};
use crate::vector::DenseVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// Deterministic checks, a few seconds.
    Fast,
    /// Adds the Monte-Carlo and sweep checks.
    Full,
}

/// One line of the verification report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationRow {
    pub check: String,
    /// Where the predicted value comes from.
    pub basis: String,
    pub predicted: f64,
    pub measured: f64,
    pub tolerance: f64,
    /// How measured and predicted are compared.
    pub comparison: String,
    pub passed: bool,
    pub runtime_s: f64,
}

struct Timer(Instant);

impl Timer {
    fn start() -> Self {
        Timer(Instant::now())
    }

    #[allow(clippy::too_many_arguments)]
    fn row(&self, check: &str, basis: &str, predicted: f64, measured: f64, tolerance: f64, comparison: &str, passed: bool) -> VerificationRow {
        VerificationRow {
            check: check.into(),
            basis: basis.into(),
            predicted,
            measured,
            tolerance,
            comparison: comparison.into(),
            passed,
            runtime_s: self.0.elapsed().as_secs_f64(),
        }
    }

    fn close(&self, check: &str, basis: &str, predicted: f64, measured: f64, tol: f64) -> VerificationRow {
        let ok = (measured - predicted).abs() <= tol;
        self.row(check, basis, predicted, measured, tol, "|measured - predicted| <= tolerance", ok)
    }
}

/// Random diagonal quadratic family whose declared (G, B) are the tightest
/// certified pair, together with a κ satisfying `κB² < 1/56`.
#[derive(Clone, Debug)]
pub struct LyapunovCase {
    pub instance: ProblemInstance,
    pub kappa: f64,
    pub x0: Vec<f64>,
}

pub fn random_lyapunov_case(rng: &mut RngStream) -> Result<LyapunovCase> {
    let h = rng.random_range(2..=6);
    let dim = rng.random_range(1..=3);
    let locals: Vec<QuadraticLocal> = (0..h)
        .map(|_| {
            let a = (0..dim).map(|_| rng.random_range(0.5..2.0)).collect();
            let c = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            QuadraticLocal::new(a, c)
        })
        .collect::<Result<_>>()?;
    let mut b2: f64 = 0.0;
    for k in 0..dim {
        let abar = locals.iter().map(|q| q.a[k]).sum::<f64>() / h as f64;
        let var = locals.iter().map(|q| (q.a[k] - abar).powi(2)).sum::<f64>() / h as f64;
        b2 = b2.max(var / (abar * abar));
    }
    let b = (1.01 * b2).sqrt().max(1e-3);
    let pop = WorkerPopulation::trailing_byzantine(h, 0)?;
    let inst = ProblemInstance::from_quadratics(locals, pop, NoiseModel::None)?;
    let g = minimal_g(&inst, b)?.expect("B above the curvature spread bounds every coordinate");
    let inst = inst.declare_dissimilarity(g * (1.0 + 1e-12) + 1e-15, b)?;
    let kappa = (0.9 / (56.0 * b * b)).min(0.2);
    let x0 = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
    Ok(LyapunovCase { instance: inst, kappa, x0 })
}

/// Momentum run of a Lyapunov case: variance-sign oracle, PL steps, tied momentum.
pub fn lyapunov_config(case: &LyapunovCase, iterations: usize) -> RunConfig {
    let a = case.instance.analytic();
    let alpha = momentum_pl_alpha(a.mu, case.kappa, a.b.unwrap_or(0.0));
    let s0 = momentum_pl_s0_min(a.l, alpha) * (1.0 + 1e-9) + 1e-9;
    RunConfig {
        rule: Rule::OracleAdversarial {
            kappa: case.kappa,
            variant: OracleVariant::VarianceSign { policy: SignPolicy::Displacement },
        },
        schedule: ScheduleSpec { stepsize: StepSize::PlPiecewise { alpha, s0 }, momentum: Momentum::Tied { c_beta: 36.0 } },
        iterations,
        x0: Some(case.x0.clone()),
        track_lyapunov: true,
        ..RunConfig::default()
    }
}

fn hetero_config(momentum: bool) -> RunConfig {
    let (gamma, mom) = if momentum { (0.02, Momentum::Tied { c_beta: 36.0 }) } else { (0.1, Momentum::Zero) };
    RunConfig {
        problem: ProblemConfig { spec: ProblemSpec::HeteroLowerBound { mu: 1.0, g: 1.0, b: 0.5, dim: 1 }, noise: None, byzantine: 0 },
        rule: Rule::OracleAdversarial { kappa: 0.1, variant: OracleVariant::HeteroC1 },
        schedule: ScheduleSpec { stepsize: StepSize::Constant { gamma }, momentum: mom },
        iterations: 2000,
        x0: Some(vec![0.0]),
        ..RunConfig::default()
    }
}

fn check_hetero(out: &mut Vec<VerificationRow>) -> Result<()> {
    for momentum in [false, true] {
        let t = Timer::start();
        let cfg = hetero_config(momentum);
        let trainer = Trainer::new(&cfg)?;
        let Construction::HeteroLowerBound(p) = trainer.instance().construction() else { unreachable!() };
        let kappa: f64 = 0.1;
        let x_f = kappa.sqrt() * p.epsilon / (p.mu - kappa.sqrt() * p.delta);
        let rec = trainer.run_replicate(0, RecordMode::Summary)?;
        let label = if momentum { "heterogeneity floor with momentum" } else { "heterogeneity floor" };
        out.push(t.close(&format!("{label}: limit point"), "sqrt(k) eps / (mu - sqrt(k) delta)", x_f, rec.penultimate.first(), 1e-9));
        out.push(t.close(&format!("{label}: gradient floor"), "mu^2 x_F^2", p.mu * p.mu * x_f * x_f, rec.summary.floor_estimate, 1e-9));
    }
    Ok(())
}

fn check_noise_floor(out: &mut Vec<VerificationRow>) -> Result<()> {
    let t = Timer::start();
    let (mu, b, sigma, kappa, delta) = (1.0, 0.5, 1.0, 0.1, 0.1);
    let alpha = rdsgd_pl_alpha(mu, kappa, b, delta);
    let l = ProblemInstance::noise_lower_bound(mu, b, sigma)?.analytic().l;
    let s0 = rdsgd_pl_s0_min(l, delta, alpha).floor() + 1.0;
    let cfg = RunConfig {
        problem: ProblemConfig { spec: ProblemSpec::NoiseLowerBound { mu, b, sigma, dim: 1 }, noise: None, byzantine: 0 },
        rule: Rule::OracleAdversarial { kappa, variant: OracleVariant::NoiseC2 },
        schedule: ScheduleSpec { stepsize: StepSize::PlPiecewise { alpha, s0 }, momentum: Momentum::Zero },
        iterations: 5000,
        x0: Some(vec![0.0]),
        replicates: 10_000,
        seed: 7,
        ..RunConfig::default()
    };
    let mc = Trainer::new(&cfg)?.monte_carlo()?;
    let (mean, se) = mc.mean_se(|i| mc.penultimate[i].first().powi(2));
    let x_f = (kappa.sqrt() * sigma / 2.0) / (mu * (1.0 - kappa.sqrt() * b / 2.0));
    out.push(t.close("noise floor: E[x^2] at T-1", "((sqrt(k) sigma/2) / (mu (1 - sqrt(k) B/2)))^2", x_f * x_f, mean, 3.0 * se));
    Ok(())
}

fn check_lyapunov(out: &mut Vec<VerificationRow>) -> Result<()> {
    let t = Timer::start();
    let mut worst: f64 = 0.0;
    let mut rng = RngStream::new(11, StreamId::new(0, 0, Purpose::Instance));
    for _ in 0..100 {
        let case = random_lyapunov_case(&mut rng)?;
        let rec = Trainer::with_instance(&lyapunov_config(&case, 1), case.instance.clone())?.run_replicate(0, RecordMode::Summary)?;
        let tr = rec.lyapunov.expect("tracking enabled");
        worst = worst.max(tr.values[0] / (2.25 * tr.delta0));
    }
    out.push(t.row("initial Lyapunov value", "V^1 <= (9/4)(f(x0) - f*)", 1.0, worst, 1e-12, "measured <= predicted (1 + tol)", worst <= 1.0 + 1e-12));

    let t = Timer::start();
    let mut flagged = 0usize;
    for _ in 0..20 {
        let case = random_lyapunov_case(&mut rng)?;
        let rec = Trainer::with_instance(&lyapunov_config(&case, 500), case.instance.clone())?.run_replicate(0, RecordMode::Summary)?;
        flagged += rec.lyapunov.expect("tracking enabled").flagged.len();
    }
    out.push(t.row("Lyapunov one-step descent", "flagged steps over 20 runs of 500 iterations", 0.0, flagged as f64, 0.0, "measured == predicted", flagged == 0));
    Ok(())
}

fn check_oracle_ratio(out: &mut Vec<VerificationRow>) -> Result<()> {
    let t = Timer::start();
    let mut rng = RngStream::new(3, StreamId::new(0, 0, Purpose::Instance));
    let kappa = 0.2;
    let mut worst: f64 = 0.0;
    let hetero = ProblemInstance::hetero_lower_bound(1.0, 1.0, 0.5)?;
    for _ in 0..100 {
        let x = DenseVector::scalar(rng.random_range(-5.0..5.0))?;
        let g: Vec<DenseVector> = (0..2).map(|i| hetero.local_gradient(i, &x)).collect::<Result<_>>()?;
        for variant in [OracleVariant::HeteroC1, OracleVariant::VarianceSign { policy: SignPolicy::Displacement }] {
            let spec = AggregatorSpec::new(Rule::OracleAdversarial { kappa, variant }, 2, 0)?;
            let xs = [0.0];
            let ctx = OracleContext { x: Some(x.as_slice()), x_star: Some(&xs), ..Default::default() };
            let a = aggregate(&spec, &g, Some(&[0, 1]), &ctx)?;
            let (r, _) = crate::aggregators::robustness::robustness_ratio(&a, &g, &[0, 1])?;
            if let Some(r) = r {
                worst = worst.max((r - kappa).abs());
            }
        }
    }
    out.push(t.close("oracle rules realise kappa", "ratio identically kappa", 0.0, worst, 1e-10));
    Ok(())
}

fn check_certifier(out: &mut Vec<VerificationRow>, families: usize) -> Result<()> {
    let t = Timer::start();
    let mut rng = RngStream::new(5, StreamId::new(0, 0, Purpose::Instance));
    let mut disagreements = 0usize;
    for _ in 0..families {
        let h = rng.random_range(2..=5);
        let locals: Vec<QuadraticLocal> = (0..h)
            .map(|_| QuadraticLocal::new(vec![rng.random_range(0.2..3.0)], vec![rng.random_range(-2.0..2.0)]))
            .collect::<Result<_>>()?;
        let inst = ProblemInstance::from_quadratics(locals, WorkerPopulation::trailing_byzantine(h, 0)?, NoiseModel::None)?;
        let b: f64 = rng.random_range(0.0..1.5);
        let g = match minimal_g(&inst, b)? {
            Some(gmin) => gmin * if rng.random_bool(0.5) { 1.2 } else { 0.8 },
            None => 1.0,
        };
        let cert = certify_dissimilarity(&inst, g, b)?;
        let reach = match &cert {
            crate::problems::Certificate::Fail { witness, .. } => witness.first().abs().max(1.0) * 2.0,
            _ => 50.0,
        };
        let grid = crate::problems::dissimilarity::linspace_grid(-reach, reach, 10_001);
        let sample = sample_check_dissimilarity(&inst, g, b, &grid)?;
        disagreements += (cert.holds() != sample.holds()) as usize;
    }
    out.push(t.row("certifier agrees with grid check", "exact quadratic inequality vs 10^4-point grid", 0.0, disagreements as f64, 0.0, "measured == predicted", disagreements == 0));
    Ok(())
}

fn check_alie(out: &mut Vec<VerificationRow>) -> Result<()> {
    let t = Timer::start();
    let spec = AggregatorSpec::new(Rule::Average, 3, 1)?;
    let updates = vec![DenseVector::scalar(0.0)?, DenseVector::scalar(2.0)?, DenseVector::scalar(0.0)?];
    let view = AdversaryView {
        updates: &updates,
        honest_ids: &[0, 1],
        byzantine_ids: &[2],
        aggregator: &spec,
        oracle_ctx: OracleContext::default(),
    };
    let choice = alie(&view, &DEFAULT_ALIE_CANDIDATES)?;
    out.push(t.close("ALIE against averaging picks the extreme multiplier", "displacement linear in alpha", 2.0, choice.alpha.abs(), 0.0));
    Ok(())
}

fn check_zero_dispersion(out: &mut Vec<VerificationRow>) -> Result<()> {
    let t = Timer::start();
    let v = DenseVector::new(vec![1.5, -0.25])?;
    let updates = vec![v.clone(); 5];
    let pop = WorkerPopulation::trailing_byzantine(5, 1)?;
    let mut worst: f64 = 0.0;
    let rules = [
        Rule::Average,
        Rule::Krum,
        Rule::MultiKrum { q: 2 },
        Rule::Cwm,
        Rule::Cwtm { q: 1 },
        Rule::Gm { iters: 50, nu: 1e-8 },
        Rule::OracleAdversarial { kappa: 0.3, variant: OracleVariant::VarianceSign { policy: SignPolicy::Displacement } },
    ];
    for rule in rules {
        let spec = AggregatorSpec::new(rule, 5, 1)?;
        let honest = spec.is_oracle().then_some(pop.honest_ids());
        let a = aggregate(&spec, &updates, honest, &OracleContext::default())?;
        worst = worst.max(a.dist_sq(&honest_mean(&updates, &pop)?)?);
    }
    out.push(t.close("identical inputs are returned unchanged", "zero honest dispersion", 0.0, worst, 0.0));
    Ok(())
}

/// Grid sweep on the synthetic family: best floor per (κ, B²).
pub fn floor_sweep_spec(kappas: &[f64], b_squared: &[f64]) -> SweepSpec {
    SweepSpec {
        base: RunConfig {
            problem: ProblemConfig {
                spec: ProblemSpec::SyntheticFamily { n: 20, k: 7, a: 1.0, g: 1.0, b: 0.0, dim: 1 },
                noise: None,
                byzantine: 0,
            },
            rule: Rule::OracleAdversarial { kappa: 0.1, variant: OracleVariant::VarianceSign { policy: SignPolicy::NextIterate } },
            x0: Some(vec![5.0]),
            ..RunConfig::default()
        },
        gamma0: vec![0.5, 0.2, 0.1, 0.05, 0.01, 0.005, 0.001],
        beta: vec![],
        iterations: vec![10, 20, 50, 100, 200, 1000, 2000],
        b_squared: b_squared.to_vec(),
        kappa: kappas.to_vec(),
        stepsizes: vec!["constant".into(), "half_decay".into()],
        metric: SelectionMetric::FloorEstimate,
    }
}

/// Momentum against no momentum on the noisy synthetic family; the best
/// floor over a step-size grid is selected per β.
pub fn momentum_sweep_spec(kappa: f64, b_squared: f64, replicates: usize) -> SweepSpec {
    SweepSpec {
        base: RunConfig {
            problem: ProblemConfig {
                spec: ProblemSpec::SyntheticFamily { n: 20, k: 7, a: 1.0, g: 1.0, b: b_squared.sqrt(), dim: 1 },
                noise: Some(NoiseModel::Gaussian { sigma: 1.0 }),
                byzantine: 0,
            },
            rule: Rule::OracleAdversarial { kappa, variant: OracleVariant::VarianceSign { policy: SignPolicy::NextIterate } },
            x0: Some(vec![5.0]),
            replicates,
            ..RunConfig::default()
        },
        gamma0: vec![0.1, 0.05, 0.01, 0.005],
        beta: vec![0.0, 0.9],
        iterations: vec![2000],
        b_squared: vec![],
        kappa: vec![],
        stepsizes: vec!["constant".into()],
        metric: SelectionMetric::FloorEstimate,
    }
}

/// Best floor without and with momentum, in that order.
pub fn momentum_floors(spec: &SweepSpec) -> Result<(f64, f64)> {
    let res = run_sweep(spec)?;
    let pick = |beta: f64| res.best.iter().find(|r| r.beta == Some(beta)).map(|r| r.metric).unwrap_or(f64::NAN);
    Ok((pick(0.0), pick(0.9)))
}

fn check_floor_sweep(out: &mut Vec<VerificationRow>) -> Result<()> {
    let t = Timer::start();
    let kappas = [0.05, 0.1, 0.2];
    let b2 = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0];
    let res = run_sweep(&floor_sweep_spec(&kappas, &b2))?;
    let best = |k: f64, b: f64| {
        res.best
            .iter()
            .find(|r| r.kappa == Some(k) && r.b_squared == Some(b))
            .map(|r| r.metric)
            .unwrap_or(f64::NAN)
    };
    let mut violations = 0usize;
    for &k in &kappas {
        for w in b2.windows(2) {
            violations += !(best(k, w[1]) >= best(k, w[0]) * (1.0 - 1e-9)) as usize;
        }
    }
    for &b in &b2 {
        for w in kappas.windows(2) {
            violations += !(best(w[1], b) >= best(w[0], b) * (1.0 - 1e-9)) as usize;
        }
    }
    out.push(t.row("best floor monotone in B^2 and kappa", "ordering only", 0.0, violations as f64, 0.0, "measured == predicted", violations == 0));

    let t = Timer::start();
    let (plain, momentum) = momentum_floors(&momentum_sweep_spec(0.1, 0.5, 20))?;
    out.push(t.row("momentum lowers the noisy floor", "ordering only", plain, momentum, 0.0, "measured <= predicted", momentum <= plain));
    Ok(())
}

fn check_rate(out: &mut Vec<VerificationRow>) -> Result<()> {
    let t = Timer::start();
    let mut avgs = Vec::new();
    for (i, &horizon) in [100usize, 1000, 10_000].iter().enumerate() {
        let cfg = RunConfig {
            problem: ProblemConfig {
                spec: ProblemSpec::HeteroLowerBound { mu: 1.0, g: 1.0, b: 0.5, dim: 1 },
                noise: Some(NoiseModel::Gaussian { sigma: 1.0 }),
                byzantine: 0,
            },
            rule: Rule::Average,
            schedule: ScheduleSpec { stepsize: StepSize::InvSqrt { gamma0: 0.2 }, momentum: Momentum::Zero },
            iterations: horizon,
            x0: Some(vec![5.0]),
            replicates: 200,
            seed: 100 + i as u64,
            ..RunConfig::default()
        };
        let mc = Trainer::new(&cfg)?.monte_carlo()?;
        avgs.push(mc.mean_se(|r| mc.summaries[r].time_avg_grad_norm_sq).0);
    }
    let worst = avgs.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    let best = avgs.windows(2).map(|w| w[1] / w[0]).fold(f64::INFINITY, f64::min);
    out.push(t.row("time-averaged gradient shrinks like 1/sqrt(T)", "successive ratio in [0.25, 0.6]", 1.0 / 10f64.sqrt(), worst, 0.0, "all ratios in [0.25, 0.6]", best >= 0.25 && worst <= 0.6));
    Ok(())
}

/// Runs the suite. Errors from individual checks abort the run.
pub fn run_verification(suite: Suite) -> Result<Vec<VerificationRow>> {
    let mut out = Vec::new();
    check_hetero(&mut out)?;
    check_lyapunov(&mut out)?;
    check_oracle_ratio(&mut out)?;
    check_zero_dispersion(&mut out)?;
    check_alie(&mut out)?;
    check_certifier(&mut out, if suite == Suite::Full { 200 } else { 40 })?;
    if suite == Suite::Full {
        check_floor_sweep(&mut out)?;
        check_rate(&mut out)?;
        check_noise_floor(&mut out)?;
    }
    Ok(out)
}

