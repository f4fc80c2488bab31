//! Objective families with analytic ground truth.
//!
//! Quadratic instances are diagonal: each coordinate is an independent copy of
//! a one-dimensional family, and the constructions scale their linear terms
//! and noise by `1/sqrt(d)` so the dissimilarity constants do not depend on `d`.

pub mod classification;
pub mod dissimilarity;
pub mod noise;
pub mod quadratic;

use serde::{Deserialize, Serialize};

pub use classification::{label_flip, ClassificationSpec, ClassificationTask, Sample};
pub use dissimilarity::{certify_dissimilarity, minimal_g, sample_check_dissimilarity, Certificate, SampleCheck};
pub use noise::NoiseModel;
pub use quadratic::{HeteroParams, NoiseParams, QuadraticLocal, SyntheticParams};

use crate::error::{Error, Result};
use crate::population::WorkerPopulation;
use crate::rng::RngStream;
use crate::vector::DenseVector;

/// Known constants of an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticFacts {
    /// Smoothness constant of `f_H`.
    pub l: f64,
    /// PL (here strong-convexity) constant of `f_H`.
    pub mu: f64,
    /// Declared dissimilarity constants, when certified.
    pub g: Option<f64>,
    pub b: Option<f64>,
    pub x_star: Option<DenseVector>,
    pub f_star: Option<f64>,
}

/// Which construction produced the instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Construction {
    HeteroLowerBound(HeteroParams),
    NoiseLowerBound(NoiseParams),
    SyntheticFamily(SyntheticParams),
    Custom,
    Classification,
}

#[derive(Clone, Debug)]
enum Objective {
    Quadratic { locals: Vec<QuadraticLocal>, global: QuadraticLocal },
    Classification(ClassificationTask),
}

/// One gradient draw and, for the Bernoulli model, the coin outcome per coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientDraw {
    pub grad: DenseVector,
    pub xi: Option<Vec<u8>>,
}

/// A family of local objectives over a worker population.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    objective: Objective,
    pop: WorkerPopulation,
    noise: NoiseModel,
    analytic: AnalyticFacts,
    construction: Construction,
    dim: usize,
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::Construction(format!("{name} must be finite and >= 0, got {v}")));
    }
    Ok(())
}

fn check_pos(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Construction(format!("{name} must be finite and > 0, got {v}")));
    }
    Ok(())
}

impl ProblemInstance {
    /// Two-worker heterogeneity construction in one dimension.
    pub fn hetero_lower_bound(mu: f64, g: f64, b: f64) -> Result<Self> {
        Self::hetero_lower_bound_dim(mu, g, b, 1)
    }

    pub fn hetero_lower_bound_dim(mu: f64, g: f64, b: f64, dim: usize) -> Result<Self> {
        check_pos("mu", mu)?;
        check_nonneg("G", g)?;
        check_nonneg("B", b)?;
        check_dim(dim)?;
        let p = HeteroParams::new(mu, g, b, dim);
        let locals = vec![
            QuadraticLocal::isotropic(mu + p.delta, p.epsilon, dim),
            QuadraticLocal::isotropic(mu - p.delta, -p.epsilon, dim),
        ];
        let pop = WorkerPopulation::trailing_byzantine(2, 0)?;
        let mut inst = Self::from_quadratics(locals, pop, NoiseModel::None)?;
        inst.construction = Construction::HeteroLowerBound(p);
        inst.analytic.g = Some(g);
        inst.analytic.b = Some(b);
        Ok(inst)
    }

    /// Two-worker noise construction in one dimension with the Bernoulli oracle.
    pub fn noise_lower_bound(mu: f64, b: f64, sigma: f64) -> Result<Self> {
        Self::noise_lower_bound_dim(mu, b, sigma, 1)
    }

    pub fn noise_lower_bound_dim(mu: f64, b: f64, sigma: f64, dim: usize) -> Result<Self> {
        check_pos("mu", mu)?;
        check_nonneg("B", b)?;
        check_nonneg("sigma", sigma)?;
        check_dim(dim)?;
        let locals = vec![
            QuadraticLocal::isotropic((1.0 + b) * mu, 0.0, dim),
            QuadraticLocal::isotropic((1.0 - b) * mu, 0.0, dim),
        ];
        let pop = WorkerPopulation::trailing_byzantine(2, 0)?;
        let mut inst = Self::from_quadratics(locals, pop, NoiseModel::BernoulliPm { sigma })?;
        inst.construction = Construction::NoiseLowerBound(NoiseParams { mu, b, sigma });
        inst.analytic.g = Some(0.0);
        inst.analytic.b = Some(b);
        Ok(inst)
    }

    /// Three-group family that meets the dissimilarity bound with equality.
    pub fn synthetic_family(n: usize, k: usize, a: f64, g: f64, b: f64) -> Result<Self> {
        Self::synthetic_family_dim(n, k, a, g, b, 1)
    }

    pub fn synthetic_family_dim(n: usize, k: usize, a: f64, g: f64, b: f64, dim: usize) -> Result<Self> {
        check_pos("a", a)?;
        check_nonneg("G", g)?;
        check_nonneg("B", b)?;
        check_dim(dim)?;
        let p = SyntheticParams::solve(n, k, a, g, b, dim)?;
        let mut locals = Vec::with_capacity(n);
        locals.extend((0..k).map(|_| QuadraticLocal::isotropic(a, p.c, dim)));
        locals.extend((0..k).map(|_| QuadraticLocal::isotropic(a, -p.c, dim)));
        locals.extend((0..n - 2 * k).map(|_| QuadraticLocal::isotropic(a + p.d, 0.0, dim)));
        let pop = WorkerPopulation::trailing_byzantine(n, 0)?;
        let mut inst = Self::from_quadratics(locals, pop, NoiseModel::None)?;
        inst.construction = Construction::SyntheticFamily(p);
        inst.analytic.g = Some(g);
        inst.analytic.b = Some(b);
        Ok(inst)
    }

    /// Arbitrary diagonal quadratics; one local per worker. `f_H` must be strongly convex.
    pub fn from_quadratics(locals: Vec<QuadraticLocal>, pop: WorkerPopulation, noise: NoiseModel) -> Result<Self> {
        noise.validate()?;
        if let NoiseModel::Minibatch { .. } = noise {
            return Err(Error::config("minibatch noise requires a sample-based task"));
        }
        if locals.len() != pop.n() {
            return Err(Error::config(format!("{} locals for {} workers", locals.len(), pop.n())));
        }
        let dim = locals[0].dim();
        if let Some(q) = locals.iter().find(|q| q.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, actual: q.dim() });
        }
        let global = QuadraticLocal::mean(pop.honest_ids().iter().map(|&i| &locals[i]));
        if let Some(a) = global.a.iter().find(|a| !(**a > 0.0)) {
            return Err(Error::Construction(format!(
                "honest mean curvature {a} must be positive for a strongly convex objective"
            )));
        }
        let l = global.a.iter().cloned().fold(f64::MIN, f64::max);
        let mu = global.a.iter().cloned().fold(f64::MAX, f64::min);
        let x_star: Vec<f64> = global.a.iter().zip(&global.c).map(|(a, c)| -c / a).collect();
        let f_star = global.value(&x_star);
        let analytic = AnalyticFacts {
            l,
            mu,
            g: None,
            b: None,
            x_star: Some(DenseVector::from_computed(x_star, "minimizer")?),
            f_star: Some(f_star),
        };
        Ok(Self {
            objective: Objective::Quadratic { locals, global },
            pop,
            noise,
            analytic,
            construction: Construction::Custom,
            dim,
        })
    }

    /// Classification over `honest + byzantine` workers; the last `byzantine` shards are Byzantine.
    pub fn classification(spec: &ClassificationSpec, honest: usize, byzantine: usize, noise: NoiseModel, seed: u64) -> Result<Self> {
        noise.validate()?;
        let pop = WorkerPopulation::trailing_byzantine(honest + byzantine, byzantine)?;
        let task = ClassificationTask::generate(spec, honest + byzantine, seed)?;
        let analytic = AnalyticFacts {
            l: task.smoothness(),
            mu: spec.l2,
            g: None,
            b: None,
            x_star: None,
            f_star: None,
        };
        Ok(Self {
            dim: spec.model_dim(),
            objective: Objective::Classification(task),
            pop,
            noise,
            analytic,
            construction: Construction::Classification,
        })
    }

    /// Certifies and records declared dissimilarity constants.
    pub fn declare_dissimilarity(mut self, g: f64, b: f64) -> Result<Self> {
        match certify_dissimilarity(&self, g, b)? {
            Certificate::Fail { witness, excess } => Err(Error::Construction(format!(
                "declared (G, B) = ({g}, {b}) violated at x = {:?} by {excess}",
                witness.as_slice()
            ))),
            _ => {
                self.analytic.g = Some(g);
                self.analytic.b = Some(b);
                Ok(self)
            }
        }
    }

    /// Appends `b` Byzantine workers holding copies of honest locals (round robin).
    /// Honest workers, `f_H` and all analytic facts are unchanged.
    pub fn with_byzantine(mut self, b: usize) -> Result<Self> {
        if b == 0 {
            return Ok(self);
        }
        if self.pop.b() != 0 {
            return Err(Error::config("instance already has Byzantine workers"));
        }
        let h = self.pop.n();
        let pop = WorkerPopulation::trailing_byzantine(h + b, b)?;
        match &mut self.objective {
            Objective::Quadratic { locals, .. } => {
                for j in 0..b {
                    let copy = locals[j % h].clone();
                    locals.push(copy);
                }
            }
            Objective::Classification(_) => {
                return Err(Error::config("classification Byzantine workers are set at generation time"));
            }
        }
        self.pop = pop;
        Ok(self)
    }

    /// Replaces the noise model.
    pub fn with_noise(mut self, noise: NoiseModel) -> Result<Self> {
        noise.validate()?;
        if matches!(noise, NoiseModel::Minibatch { .. }) && !self.is_classification() {
            return Err(Error::config("minibatch noise requires a sample-based task"));
        }
        if matches!(self.construction, Construction::NoiseLowerBound(_)) && !matches!(noise, NoiseModel::BernoulliPm { .. }) {
            self.construction = Construction::Custom;
        }
        self.noise = noise;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pop(&self) -> &WorkerPopulation {
        &self.pop
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn analytic(&self) -> &AnalyticFacts {
        &self.analytic
    }

    pub fn construction(&self) -> &Construction {
        &self.construction
    }

    pub fn is_classification(&self) -> bool {
        matches!(self.objective, Objective::Classification(_))
    }

    /// Quadratic locals of all `n` workers, if the instance is quadratic.
    pub fn locals(&self) -> Option<&[QuadraticLocal]> {
        match &self.objective {
            Objective::Quadratic { locals, .. } => Some(locals),
            Objective::Classification(_) => None,
        }
    }

    pub fn classification_task(&self) -> Option<&ClassificationTask> {
        match &self.objective {
            Objective::Classification(t) => Some(t),
            Objective::Quadratic { .. } => None,
        }
    }

    /// Minimizer of the drifted objective the oracle rule induces, for the lower-bound constructions.
    pub fn drifted_minimizer(&self, kappa: f64) -> Option<DenseVector> {
        let v = match &self.construction {
            Construction::HeteroLowerBound(p) => p.drifted_minimizer(kappa),
            Construction::NoiseLowerBound(p) => p.drifted_minimizer(kappa, self.dim),
            _ => return None,
        };
        v.is_finite().then(|| DenseVector::filled(self.dim, v))
    }

    fn check_point(&self, x: &DenseVector) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: x.dim() });
        }
        Ok(())
    }

    fn check_worker(&self, worker: usize) -> Result<()> {
        if worker >= self.pop.n() {
            return Err(Error::config(format!("worker {worker} out of range for n = {}", self.pop.n())));
        }
        Ok(())
    }

    /// Exact local gradient of any worker (including Byzantine slots, whose data is their own).
    pub fn local_gradient(&self, worker: usize, x: &DenseVector) -> Result<DenseVector> {
        self.check_worker(worker)?;
        self.check_point(x)?;
        let mut out = vec![0.0; self.dim];
        self.exact_grad_into(worker, x.as_slice(), false, &mut out);
        DenseVector::from_computed(out, "local gradient")
    }

    pub fn local_value(&self, worker: usize, x: &DenseVector) -> Result<f64> {
        self.check_worker(worker)?;
        self.check_point(x)?;
        Ok(self.local_value_slice(worker, x.as_slice()))
    }

    /// `f_H(x)`.
    pub fn global_value(&self, x: &DenseVector) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.global_value_slice(x.as_slice()))
    }

    /// `∇f_H(x)`.
    pub fn global_gradient(&self, x: &DenseVector) -> Result<DenseVector> {
        self.check_point(x)?;
        let mut out = vec![0.0; self.dim];
        self.global_grad_into(x.as_slice(), &mut out);
        DenseVector::from_computed(out, "global gradient")
    }

    /// `f_H(x) - f_H*`, using 0 as the reference value when `f_H*` is unknown
    /// (valid lower bound for the nonnegative cross-entropy loss).
    pub fn f_gap(&self, x: &DenseVector) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.f_gap_slice(x.as_slice()))
    }

    /// Stochastic gradient of an honest worker.
    pub fn stochastic_gradient(&self, worker: usize, x: &DenseVector, rng: &mut RngStream) -> Result<GradientDraw> {
        self.check_worker(worker)?;
        self.check_point(x)?;
        if !self.pop.is_honest(worker) {
            return Err(Error::Contract(format!(
                "worker {worker} is Byzantine; its outputs come from the attack model"
            )));
        }
        let mut out = vec![0.0; self.dim];
        let mut xi = vec![0u8; self.dim];
        self.draw_into(worker, x.as_slice(), false, rng, &mut out, &mut xi);
        let xi = matches!(self.noise, NoiseModel::BernoulliPm { .. }).then_some(xi);
        Ok(GradientDraw { grad: DenseVector::from_computed(out, "stochastic gradient")?, xi })
    }

    pub(crate) fn local_value_slice(&self, worker: usize, x: &[f64]) -> f64 {
        match &self.objective {
            Objective::Quadratic { locals, .. } => locals[worker].value(x),
            Objective::Classification(t) => t.value(worker, x),
        }
    }

    pub(crate) fn exact_grad_into(&self, worker: usize, x: &[f64], poisoned: bool, out: &mut [f64]) {
        match &self.objective {
            Objective::Quadratic { locals, .. } => locals[worker].grad_into(x, out),
            Objective::Classification(t) => t.grad_into(worker, x, poisoned, out),
        }
    }

    /// Draws a stochastic gradient for any worker slot. `poisoned` selects the
    /// label-flipped shard on sample-based tasks.
    pub(crate) fn draw_into(&self, worker: usize, x: &[f64], poisoned: bool, rng: &mut RngStream, out: &mut [f64], xi: &mut [u8]) {
        match (&self.objective, self.noise) {
            (Objective::Classification(t), NoiseModel::Minibatch { m }) => {
                t.minibatch_grad_into(worker, x, poisoned, m, rng, out)
            }
            _ => {
                self.exact_grad_into(worker, x, poisoned, out);
                self.noise.perturb(out, xi, rng);
            }
        }
    }

    pub(crate) fn global_value_slice(&self, x: &[f64]) -> f64 {
        match &self.objective {
            Objective::Quadratic { global, .. } => global.value(x),
            Objective::Classification(t) => {
                let ids = self.pop.honest_ids();
                ids.iter().map(|&i| t.value(i, x)).sum::<f64>() / ids.len() as f64
            }
        }
    }

    pub(crate) fn global_grad_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.objective {
            Objective::Quadratic { global, .. } => global.grad_into(x, out),
            Objective::Classification(t) => {
                let ids = self.pop.honest_ids();
                let mut tmp = vec![0.0; self.dim];
                out.iter_mut().for_each(|o| *o = 0.0);
                for &i in ids {
                    t.grad_into(i, x, false, &mut tmp);
                    out.iter_mut().zip(&tmp).for_each(|(o, g)| *o += g);
                }
                let inv = 1.0 / ids.len() as f64;
                out.iter_mut().for_each(|o| *o *= inv);
            }
        }
    }

    pub(crate) fn f_gap_slice(&self, x: &[f64]) -> f64 {
        self.global_value_slice(x) - self.analytic.f_star.unwrap_or(0.0)
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::Construction("dimension must be at least 1".into()));
    }
    Ok(())
}

/// Config-level description of an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    HeteroLowerBound { mu: f64, g: f64, b: f64, dim: usize },
    NoiseLowerBound { mu: f64, b: f64, sigma: f64, dim: usize },
    SyntheticFamily { n: usize, k: usize, a: f64, g: f64, b: f64, dim: usize },
    /// One row of curvatures and one of linear terms per honest worker.
    Quadratic { a: Vec<Vec<f64>>, c: Vec<Vec<f64>> },
    Classification { task: ClassificationSpec, workers: usize },
}

/// Instance plus noise override and Byzantine worker count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub spec: ProblemSpec,
    pub noise: Option<NoiseModel>,
    /// Byzantine workers added on top of the honest ones.
    pub byzantine: usize,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            spec: ProblemSpec::HeteroLowerBound { mu: 1.0, g: 1.0, b: 0.5, dim: 1 },
            noise: None,
            byzantine: 0,
        }
    }
}

impl ProblemConfig {
    pub fn build(&self, seed: u64) -> Result<ProblemInstance> {
        let inst = match &self.spec {
            ProblemSpec::HeteroLowerBound { mu, g, b, dim } => ProblemInstance::hetero_lower_bound_dim(*mu, *g, *b, *dim)?,
            ProblemSpec::NoiseLowerBound { mu, b, sigma, dim } => {
                ProblemInstance::noise_lower_bound_dim(*mu, *b, *sigma, *dim)?
            }
            ProblemSpec::SyntheticFamily { n, k, a, g, b, dim } => {
                ProblemInstance::synthetic_family_dim(*n, *k, *a, *g, *b, *dim)?
            }
            ProblemSpec::Quadratic { a, c } => {
                if a.len() != c.len() || a.is_empty() {
                    return Err(Error::config("problem.a and problem.c need the same nonzero number of rows"));
                }
                let locals = a
                    .iter()
                    .zip(c)
                    .map(|(a, c)| QuadraticLocal::new(a.clone(), c.clone()))
                    .collect::<Result<Vec<_>>>()?;
                let pop = WorkerPopulation::trailing_byzantine(locals.len(), 0)?;
                ProblemInstance::from_quadratics(locals, pop, NoiseModel::None)?
            }
            ProblemSpec::Classification { task, workers } => {
                let inst = ProblemInstance::classification(task, *workers, self.byzantine, self.noise.unwrap_or(NoiseModel::None), seed)?;
                return Ok(inst);
            }
        };
        let inst = match self.noise {
            Some(noise) => inst.with_noise(noise)?,
            None => inst,
        };
        inst.with_byzantine(self.byzantine)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamId};

    fn s(x: f64) -> DenseVector {
        DenseVector::scalar(x).unwrap()
    }

    #[test]
    fn hetero_parameters() {
        let inst = ProblemInstance::hetero_lower_bound(1.0, 1.0, 0.5).unwrap();
        let Construction::HeteroLowerBound(p) = inst.construction() else { panic!("wrong construction") };
        assert!((p.delta - 0.4330127).abs() < 1e-7);
        assert_eq!(p.epsilon, 0.5);
        assert_eq!(inst.analytic().x_star, Some(s(0.0)));
        assert_eq!(inst.global_gradient(&s(2.0)).unwrap(), s(2.0));
        let homog = ProblemInstance::hetero_lower_bound(1.0, 0.0, 0.0).unwrap();
        assert_eq!(homog.locals().unwrap()[0], homog.locals().unwrap()[1]);
    }

    #[test]
    fn noise_gradients() {
        let inst = ProblemInstance::noise_lower_bound(1.0, 0.5, 1.0).unwrap();
        assert_eq!(inst.local_gradient(0, &s(2.0)).unwrap(), s(3.0));
        assert_eq!(inst.local_gradient(1, &s(2.0)).unwrap(), s(1.0));
        assert_eq!(inst.global_gradient(&s(2.0)).unwrap(), s(2.0));
        let mut rng = RngStream::new(1, StreamId::new(0, 0, Purpose::Gradient));
        for _ in 0..50 {
            let d = inst.stochastic_gradient(0, &s(0.0), &mut rng).unwrap();
            let xi = d.xi.unwrap()[0];
            assert_eq!(d.grad.first(), if xi == 0 { 1.0 } else { -1.0 });
        }
    }

    #[test]
    fn synthetic_parameters() {
        let inst = ProblemInstance::synthetic_family(20, 7, 1.0, 1.0, 1.0).unwrap();
        let Construction::SyntheticFamily(p) = inst.construction() else { panic!("wrong construction") };
        assert!((p.c - 1.19523).abs() < 1e-5, "c = {}", p.c);
        assert!((p.d - 6.31881).abs() < 1e-5, "d = {}", p.d);
        let zero = ProblemInstance::synthetic_family(20, 7, 1.0, 1.0, 0.0).unwrap();
        let Construction::SyntheticFamily(p0) = zero.construction() else { panic!() };
        assert_eq!(p0.d, 0.0);
        let err = ProblemInstance::synthetic_family(20, 7, 1.0, 1.0, (14.0f64 / 6.0).sqrt()).unwrap_err();
        assert!(err.to_string().contains("2k/(n-2k)"), "{err}");
    }

    #[test]
    fn byzantine_workers_cannot_draw_honest_gradients() {
        let inst = ProblemInstance::hetero_lower_bound(1.0, 1.0, 0.5).unwrap().with_byzantine(1).unwrap();
        assert_eq!(inst.pop().n(), 3);
        let mut rng = RngStream::new(1, StreamId::new(0, 2, Purpose::Gradient));
        assert!(matches!(inst.stochastic_gradient(2, &s(0.0), &mut rng), Err(Error::Contract(_))));
        assert_eq!(inst.global_gradient(&s(1.0)).unwrap(), s(1.0));
    }

    #[test]
    fn drifted_minimizers() {
        let h = ProblemInstance::hetero_lower_bound(1.0, 1.0, 0.5).unwrap();
        assert!((h.drifted_minimizer(0.1).unwrap().first() - 0.183199).abs() < 1e-6);
        let n = ProblemInstance::noise_lower_bound(1.0, 0.5, 1.0).unwrap();
        assert!((n.drifted_minimizer(0.1).unwrap().first() - 0.171687).abs() < 1e-6);
    }
}
