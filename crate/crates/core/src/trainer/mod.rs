//! The distributed SGD loop with local momentum.
//!
//! Each iteration broadcasts `x^{t-1}`, lets every worker update its momentum
//! `m_i^t = β_t m_i^{t-1} + (1 − β_t) g_i^t` (with `m_i^0 = 0`), fills the
//! Byzantine slots from the attack, aggregates and steps
//! `x^t = x^{t-1} − γ_t A(m_1^t, …, m_n^t)`. With `β_t ≡ 0` this is plain
//! robust distributed SGD.

pub mod lyapunov;
pub mod record;
pub mod schedule;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use lyapunov::{LyapunovParams, LyapunovTrace};
pub use record::{measure_floor, window_len, Row, RunRecord, RunSummary, WorkerSnapshot};
pub use schedule::{Momentum, ScheduleSpec, StepSize};

use crate::aggregators::{aggregate_into, AggregatorSpec, OracleContext, OracleVariant, Rule};
use crate::attacks::{alie, AdversaryView, AttackKind, AttackSpec};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::problems::{Construction, NoiseParams, ProblemInstance};
use crate::rng::{Purpose, RngStream, StreamId};
use crate::vector::{dist_sq, norm_sq, DenseVector};

/// How much of a run to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordMode {
    /// Every row and iterate.
    Full,
    /// Only the floor window rows and the last two iterates.
    Summary,
    /// Full, plus per-round worker gradients, momenta and sent vectors.
    Workers,
}

/// A validated run ready to execute any number of replicates.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: RunConfig,
    instance: ProblemInstance,
    aggregator: AggregatorSpec,
    attack: AttackSpec,
    x0: Vec<f64>,
    x_ref: Option<DenseVector>,
    noise_params: Option<NoiseParams>,
    lyapunov: Option<LyapunovParams>,
}

impl Trainer {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate_basic()?;
        let instance = config.build_instance()?;
        Self::with_instance(config, instance)
    }

    /// Uses a prebuilt instance; `config.problem` is ignored.
    pub fn with_instance(config: &RunConfig, instance: ProblemInstance) -> Result<Self> {
        config.validate_basic()?;
        let pop = instance.pop().clone();
        let aggregator = AggregatorSpec::new(config.rule, pop.n(), pop.b())?;
        let attack = AttackSpec::new(config.attack.clone(), &pop)?;
        let analytic = instance.analytic().clone();
        config.schedule.validate(config.iterations, analytic.l)?;
        if let StepSize::PlPiecewise { .. } = config.schedule.stepsize {
            if !(analytic.mu > 0.0) {
                return Err(Error::config("PL schedules need a positive PL constant mu"));
            }
        }
        if matches!(config.attack, AttackKind::LabelFlip) && !instance.is_classification() {
            return Err(Error::config("label_flip needs a labelled (classification) problem"));
        }
        let dim = instance.dim();
        let x0 = match &config.x0 {
            Some(v) if v.len() == dim => v.clone(),
            Some(v) if v.len() == 1 => vec![v[0]; dim],
            Some(v) => return Err(Error::DimensionMismatch { expected: dim, actual: v.len() }),
            None => vec![1.0; dim],
        };

        let mut noise_params = None;
        let mut x_ref = analytic.x_star.clone();
        if let Rule::OracleAdversarial { kappa, variant } = config.rule {
            match (variant, instance.construction()) {
                (OracleVariant::HeteroC1, Construction::HeteroLowerBound(_)) => {
                    x_ref = instance.drifted_minimizer(kappa);
                }
                (OracleVariant::HeteroC1, _) => {
                    return Err(Error::config("hetero_c1 oracle needs the heterogeneity lower-bound instance"));
                }
                (OracleVariant::NoiseC2, Construction::NoiseLowerBound(p)) => {
                    if config.schedule.momentum != Momentum::Zero {
                        return Err(Error::config(
                            "noise_c2 oracle is defined on raw stochastic gradients; use momentum = zero",
                        ));
                    }
                    noise_params = Some(*p);
                    x_ref = instance.drifted_minimizer(kappa);
                }
                (OracleVariant::NoiseC2, _) => {
                    return Err(Error::config(
                        "noise_c2 oracle needs the noise lower-bound instance with Bernoulli noise",
                    ));
                }
                (OracleVariant::VarianceSign { .. }, _) => {}
            }
        }

        let lyapunov = if config.track_lyapunov {
            Some(Self::lyapunov_params(config, &instance)?)
        } else {
            None
        };
        Ok(Self { config: config.clone(), instance, aggregator, attack, x0, x_ref, noise_params, lyapunov })
    }

    fn lyapunov_params(config: &RunConfig, instance: &ProblemInstance) -> Result<LyapunovParams> {
        if !instance.noise().is_deterministic() {
            return Err(Error::config(
                "Lyapunov tracking needs exact gradients (sigma = 0); expectations are not computable pathwise",
            ));
        }
        match config.schedule.momentum {
            Momentum::Tied { c_beta } if c_beta == schedule::DEFAULT_TIE_CONSTANT => {}
            _ => return Err(Error::config("Lyapunov tracking needs tied momentum with c_beta = 36")),
        }
        let kappa = match config.rule {
            Rule::OracleAdversarial { kappa, .. } => kappa,
            _ => config
                .lyapunov_kappa
                .ok_or_else(|| Error::config("Lyapunov tracking needs kappa (oracle rule or lyapunov_kappa)"))?,
        };
        let a = instance.analytic();
        let (Some(g), Some(b)) = (a.g, a.b) else {
            return Err(Error::config("Lyapunov tracking needs declared dissimilarity constants (G, B)"));
        };
        if a.f_star.is_none() {
            return Err(Error::config("Lyapunov tracking needs the optimal value f*"));
        }
        Ok(LyapunovParams { l: a.l, kappa, g, b, sigma: 0.0, h: instance.pop().h() })
    }

    pub fn instance(&self) -> &ProblemInstance {
        &self.instance
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn aggregator(&self) -> &AggregatorSpec {
        &self.aggregator
    }

    /// Reference point for `dist_to_ref`: the drifted minimizer for the
    /// construction-specific oracle rules, the minimizer of `f_H` otherwise.
    pub fn reference_point(&self) -> Option<&DenseVector> {
        self.x_ref.as_ref()
    }

    /// Runs one replicate with the configured aggregator.
    pub fn run_replicate(&self, replicate: u32, mode: RecordMode) -> Result<RunRecord> {
        self.execute(replicate, mode, false)
    }

    /// Same loop, but the server averages the honest updates only.
    pub fn run_baseline(&self, replicate: u32, mode: RecordMode) -> Result<RunRecord> {
        self.execute(replicate, mode, true)
    }

    fn row(&self, t: usize, x: &[f64], grad_buf: &mut [f64], gamma: f64, beta: f64, lyap: Option<f64>) -> Row {
        self.instance.global_grad_into(x, grad_buf);
        Row {
            t,
            grad_norm_sq: norm_sq(grad_buf),
            f_gap: self.instance.f_gap_slice(x),
            dist_to_ref: self.x_ref.as_ref().map(|r| dist_sq(x, r.as_slice())),
            lyapunov: lyap,
            gamma,
            beta,
        }
    }

    fn execute(&self, replicate: u32, mode: RecordMode, baseline: bool) -> Result<RunRecord> {
        let inst = &self.instance;
        let pop = inst.pop();
        let (n, dim) = (pop.n(), inst.dim());
        let honest = pop.honest_ids();
        let horizon = self.config.iterations;
        let l = inst.analytic().l;
        let full = mode != RecordMode::Summary;
        let window = window_len(horizon, self.config.floor_window);
        let window_start = horizon + 1 - window;
        let seed = self.config.seed;

        let mut rngs: Vec<RngStream> = (0..n)
            .map(|i| {
                let purpose = if pop.is_honest(i) { Purpose::Gradient } else { Purpose::Byzantine };
                RngStream::new(seed, StreamId::new(replicate, i as u32, purpose))
            })
            .collect();
        let mut x = self.x0.clone();
        let mut grads = vec![vec![0.0; dim]; n];
        let mut momenta = vec![vec![0.0; dim]; n];
        let mut sent: Vec<DenseVector> = vec![DenseVector::zeros(dim); n];
        let mut xi = vec![vec![0u8; dim]; n];
        let mut out = vec![0.0; dim];
        let mut grad_buf = vec![0.0; dim];
        let mut mbar = vec![0.0; dim];

        let mut rows = Vec::new();
        let mut trajectory = Vec::new();
        let mut workers = Vec::new();
        let mut penultimate = x.clone();
        let mut lyap = self.lyapunov.map(|p| LyapunovTrace::new(p, inst.f_gap_slice(&x)));
        let mut gamma_prev_dispersion = 0.0;

        let first = self.row(0, &x, &mut grad_buf, 0.0, 0.0, None);
        let mut grad_sum = first.grad_norm_sq;
        if full || window_start == 0 {
            rows.push(first);
        }
        if full {
            trajectory.push(DenseVector::from_computed(x.clone(), "initial model")?);
        }

        let honest_arg = self.aggregator.is_oracle().then_some(honest);
        let x_star = inst.analytic().x_star.as_ref().map(|v| v.as_slice());
        let skip_byzantine_draws = self.attack.kind.is_omniscient() || baseline;

        for t in 1..=horizon {
            let (gamma, beta) = self.config.schedule.at(t, horizon, l);
            for i in 0..n {
                let byz = !pop.is_honest(i);
                if byz && skip_byzantine_draws {
                    continue;
                }
                let poisoned = byz && matches!(self.attack.kind, AttackKind::LabelFlip);
                inst.draw_into(i, &x, poisoned, &mut rngs[i], &mut grads[i], &mut xi[i]);
                for (m, g) in momenta[i].iter_mut().zip(&grads[i]) {
                    *m = beta * *m + (1.0 - beta) * g;
                }
                let dst = sent[i].as_mut_slice();
                if byz && matches!(self.attack.kind, AttackKind::SignFlip) {
                    dst.iter_mut().zip(&momenta[i]).for_each(|(d, m)| *d = -m);
                } else {
                    dst.copy_from_slice(&momenta[i]);
                }
            }

            let mut lyap_value = None;
            if let Some(trace) = lyap.as_mut() {
                let p = trace.params;
                mean_into(&momenta, honest, &mut mbar);
                inst.global_grad_into(&x, &mut grad_buf);
                let delta_sq = dist_sq(&mbar, &grad_buf);
                let gap = inst.f_gap_slice(&x);
                let value = p.value(gap, delta_sq, gamma_prev_dispersion);
                let bound = p.one_step_bound(gamma, norm_sq(&grad_buf), gap, delta_sq, gamma_prev_dispersion);
                trace.push(value, bound);
                lyap_value = Some(value);
                gamma_prev_dispersion =
                    honest.iter().map(|&i| dist_sq(&momenta[i], &mbar)).sum::<f64>() / honest.len() as f64;
            }

            let ctx = OracleContext {
                x: Some(&x),
                x_star,
                step: Some(gamma),
                xi: Some(&xi),
                noise: self.noise_params,
            };
            if baseline {
                mean_into_dense(&sent, honest, &mut out);
            } else {
                if let AttackKind::Alie { candidates } = &self.attack.kind {
                    if pop.b() > 0 {
                        let view = AdversaryView {
                            updates: &sent,
                            honest_ids: honest,
                            byzantine_ids: &self.attack.byzantine_ids,
                            aggregator: &self.aggregator,
                            oracle_ctx: ctx,
                        };
                        let choice = alie(&view, candidates)?;
                        for &j in &self.attack.byzantine_ids {
                            sent[j] = choice.update.clone();
                        }
                    }
                }
                aggregate_into(&self.aggregator, &sent, honest_arg, &ctx, &mut out)?;
            }

            if mode == RecordMode::Workers {
                let wrap = |v: &[Vec<f64>]| -> Result<Vec<DenseVector>> {
                    v.iter().map(|g| DenseVector::from_computed(g.clone(), "worker state")).collect()
                };
                workers.push(WorkerSnapshot { t, gradients: wrap(&grads)?, momenta: wrap(&momenta)?, sent: sent.clone() });
            }

            if t == horizon {
                penultimate.copy_from_slice(&x);
            }
            for (xv, g) in x.iter_mut().zip(&out) {
                *xv -= gamma * g;
            }
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("model at iteration {t}")));
            }

            let row = self.row(t, &x, &mut grad_buf, gamma, beta, lyap_value);
            if t < horizon {
                grad_sum += row.grad_norm_sq;
            }
            if full || t >= window_start {
                rows.push(row);
            }
            if full {
                trajectory.push(DenseVector::from_computed(x.clone(), "model")?);
            }
        }

        let last = rows.last().expect("at least one row").clone();
        let floor = rows.iter().filter(|r| r.t >= window_start).map(|r| r.grad_norm_sq).sum::<f64>() / window as f64;
        let summary = RunSummary {
            iterations: horizon,
            final_grad_norm_sq: last.grad_norm_sq,
            final_f_gap: last.f_gap,
            final_dist_to_ref: last.dist_to_ref,
            time_avg_grad_norm_sq: grad_sum / horizon as f64,
            floor_estimate: floor,
            floor_window: self.config.floor_window,
        };
        Ok(RunRecord {
            rows,
            trajectory,
            penultimate: DenseVector::from_computed(penultimate, "model")?,
            final_x: DenseVector::from_computed(x, "model")?,
            summary,
            lyapunov: lyap,
            workers,
        })
    }
}

fn mean_into(vs: &[Vec<f64>], ids: &[usize], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for &i in ids {
        out.iter_mut().zip(&vs[i]).for_each(|(o, v)| *o += v);
    }
    let inv = 1.0 / ids.len() as f64;
    out.iter_mut().for_each(|o| *o *= inv);
}

fn mean_into_dense(vs: &[DenseVector], ids: &[usize], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for &i in ids {
        out.iter_mut().zip(vs[i].as_slice()).for_each(|(o, v)| *o += v);
    }
    let inv = 1.0 / ids.len() as f64;
    out.iter_mut().for_each(|o| *o *= inv);
}

/// Runs replicate 0 and records everything.
pub fn run(config: &RunConfig) -> Result<RunRecord> {
    Trainer::new(config)?.run_replicate(0, RecordMode::Full)
}

/// Replicate 0 with the honest-mean server.
pub fn run_honest_baseline(config: &RunConfig) -> Result<RunRecord> {
    Trainer::new(config)?.run_baseline(0, RecordMode::Full)
}

/// Summary of many replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub penultimate: Vec<DenseVector>,
    pub final_x: Vec<DenseVector>,
    pub summaries: Vec<RunSummary>,
}

impl MonteCarloResult {
    /// Mean and standard error of `f` over replicates.
    pub fn mean_se(&self, f: impl Fn(usize) -> f64) -> (f64, f64) {
        let r = self.summaries.len();
        let vals: Vec<f64> = (0..r).map(f).collect();
        let mean = vals.iter().sum::<f64>() / r as f64;
        if r < 2 {
            return (mean, f64::NAN);
        }
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1) as f64;
        (mean, (var / r as f64).sqrt())
    }
}

/// Runs `config.replicates` independent replicates in parallel.
pub fn run_monte_carlo(config: &RunConfig) -> Result<MonteCarloResult> {
    let trainer = Trainer::new(config)?;
    trainer.monte_carlo()
}

impl Trainer {
    pub fn monte_carlo(&self) -> Result<MonteCarloResult> {
        let records: Vec<RunRecord> = (0..self.config.replicates as u32)
            .into_par_iter()
            .map(|r| self.run_replicate(r, RecordMode::Summary))
            .collect::<Result<Vec<_>>>()?;
        let mut out = MonteCarloResult { penultimate: Vec::new(), final_x: Vec::new(), summaries: Vec::new() };
        for rec in records {
            out.penultimate.push(rec.penultimate);
            out.final_x.push(rec.final_x);
            out.summaries.push(rec.summary);
        }
        Ok(out)
    }
}
