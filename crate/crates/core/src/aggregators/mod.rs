//! Aggregation rules.
//!
//! Robust rules only see the list of updates. Oracle rules additionally receive
//! the honest index set and an [`OracleContext`]; passing honest ids to any
//! other rule is rejected so the robust rules cannot depend on them.

pub mod oracle;
pub mod robustness;
pub mod rules;

use serde::{Deserialize, Serialize};

pub use oracle::{noise_drift, OracleContext, OracleVariant, SignPolicy};
pub use robustness::{estimate_kappa, RobustnessEstimate, WorstCase};
pub use rules::{average, cwm, cwtm, geometric_median, krum, krum_scores, multi_krum};

use crate::error::{Error, Result};
use crate::vector::DenseVector;

/// Default Weiszfeld smoothing.
pub const DEFAULT_GM_NU: f64 = 1e-8;
/// Default Weiszfeld iteration count.
pub const DEFAULT_GM_ITERS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    Average,
    Krum,
    MultiKrum { q: usize },
    Cwm,
    Cwtm { q: usize },
    Gm { iters: usize, nu: f64 },
    OracleAdversarial { kappa: f64, variant: OracleVariant },
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::Average => "average",
            Rule::Krum => "krum",
            Rule::MultiKrum { .. } => "multi_krum",
            Rule::Cwm => "cwm",
            Rule::Cwtm { .. } => "cwtm",
            Rule::Gm { .. } => "gm",
            Rule::OracleAdversarial { .. } => "oracle_adversarial",
        }
    }
}

/// A rule bound to a population size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatorSpec {
    pub rule: Rule,
    pub n: usize,
    pub b: usize,
}

impl AggregatorSpec {
    pub fn new(rule: Rule, n: usize, b: usize) -> Result<Self> {
        let spec = Self { rule, n, b };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, b) = (self.n, self.b);
        if n == 0 || 2 * b >= n {
            return Err(Error::config(format!(
                "aggregator needs b < n/2 for (b, kappa)-robustness (n = {n}, b = {b})"
            )));
        }
        match self.rule {
            Rule::Krum if n < b + 2 => Err(Error::config("krum needs n - b - 1 >= 1")),
            Rule::MultiKrum { q } if q == 0 || n < 2 * q + 1 || n < b + 2 => {
                Err(Error::config(format!("multi_krum needs q >= 1, n - 2q >= 1 and n - b - 1 >= 1 (q = {q}, n = {n})")))
            }
            Rule::Cwtm { q } if q == 0 || n < 2 * q + 1 => {
                Err(Error::config(format!("cwtm needs q >= 1 and n - 2q >= 1 (q = {q}, n = {n})")))
            }
            Rule::Gm { iters, nu } if iters == 0 || !(nu > 0.0 && nu.is_finite()) => {
                Err(Error::config("gm needs iters >= 1 and nu > 0"))
            }
            Rule::OracleAdversarial { kappa, .. } if !(kappa >= 0.0 && kappa.is_finite()) => {
                Err(Error::config(format!("oracle kappa must be finite and >= 0, got {kappa}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_oracle(&self) -> bool {
        matches!(self.rule, Rule::OracleAdversarial { .. })
    }

    /// Configured κ of an oracle rule.
    pub fn kappa(&self) -> Option<f64> {
        match self.rule {
            Rule::OracleAdversarial { kappa, .. } => Some(kappa),
            _ => None,
        }
    }
}

/// Applies the rule. `honest` must be given exactly when the rule is an oracle rule.
pub fn aggregate(
    spec: &AggregatorSpec,
    updates: &[DenseVector],
    honest: Option<&[usize]>,
    ctx: &OracleContext,
) -> Result<DenseVector> {
    let dim = updates.first().map(DenseVector::dim).ok_or_else(|| Error::config("no updates to aggregate"))?;
    let mut out = vec![0.0; dim];
    aggregate_into(spec, updates, honest, ctx, &mut out)?;
    DenseVector::from_computed(out, "aggregation")
}

/// Buffer-reusing form of [`aggregate`]; `out` is not checked for finiteness.
pub(crate) fn aggregate_into(
    spec: &AggregatorSpec,
    updates: &[DenseVector],
    honest: Option<&[usize]>,
    ctx: &OracleContext,
    out: &mut [f64],
) -> Result<()> {
    if updates.len() != spec.n {
        return Err(Error::config(format!("aggregator expects {} updates, got {}", spec.n, updates.len())));
    }
    crate::vector::check_dims(updates, out.len())?;
    let copy = |v: DenseVector, out: &mut [f64]| out.copy_from_slice(v.as_slice());
    match (spec.rule, honest) {
        (Rule::OracleAdversarial { kappa, variant }, Some(h)) => match variant {
            OracleVariant::VarianceSign { policy } => oracle::variance_sign_into(updates, h, kappa, policy, ctx, out),
            OracleVariant::HeteroC1 => oracle::hetero_c1_into(updates, h, kappa, out),
            OracleVariant::NoiseC2 => oracle::noise_c2_into(updates, h, kappa, ctx, out),
        },
        (Rule::OracleAdversarial { .. }, None) => {
            Err(Error::config("oracle_adversarial rules require the honest index set"))
        }
        (_, Some(_)) => Err(Error::config(format!(
            "rule {} must not receive the honest index set",
            spec.rule.name()
        ))),
        (Rule::Average, None) => {
            rules::average_into(updates, out);
            Ok(())
        }
        (Rule::Krum, None) => krum(updates, spec.b).map(|v| copy(v, out)),
        (Rule::MultiKrum { q }, None) => multi_krum(updates, spec.b, q).map(|v| copy(v, out)),
        (Rule::Cwm, None) => cwm(updates).map(|v| copy(v, out)),
        (Rule::Cwtm { q }, None) => cwtm(updates, q).map(|v| copy(v, out)),
        (Rule::Gm { iters, nu }, None) => geometric_median(updates, iters, nu).map(|v| copy(v, out)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(xs: &[f64]) -> Vec<DenseVector> {
        xs.iter().map(|&x| DenseVector::scalar(x).unwrap()).collect()
    }

    fn sign_rule(kappa: f64) -> AggregatorSpec {
        let variant = OracleVariant::VarianceSign { policy: SignPolicy::Displacement };
        AggregatorSpec::new(Rule::OracleAdversarial { kappa, variant }, 2, 0).unwrap()
    }

    #[test]
    fn average_example() {
        let spec = AggregatorSpec::new(Rule::Average, 2, 0).unwrap();
        let out = aggregate(&spec, &s(&[1.0, 3.0]), None, &OracleContext::default()).unwrap();
        assert_eq!(out.first(), 2.0);
    }

    #[test]
    fn variance_sign_example() {
        let x = [3.0];
        let xs = [0.0];
        let ctx = OracleContext { x: Some(&x), x_star: Some(&xs), ..Default::default() };
        let out = aggregate(&sign_rule(0.25), &s(&[0.0, 2.0]), Some(&[0, 1]), &ctx).unwrap();
        assert_eq!(out.first(), 0.5);
        // Zero displacement takes the + sign.
        let ctx0 = OracleContext { x: Some(&xs), x_star: Some(&xs), ..Default::default() };
        let out = aggregate(&sign_rule(0.25), &s(&[0.0, 2.0]), Some(&[0, 1]), &ctx0).unwrap();
        assert_eq!(out.first(), 1.5);
    }

    #[test]
    fn honest_set_gating() {
        let ctx = OracleContext::default();
        assert!(aggregate(&sign_rule(0.1), &s(&[0.0, 1.0]), None, &ctx).is_err());
        let avg = AggregatorSpec::new(Rule::Average, 2, 0).unwrap();
        assert!(aggregate(&avg, &s(&[0.0, 1.0]), Some(&[0, 1]), &ctx).is_err());
    }

    #[test]
    fn aggregator_spec_validation() {
        assert!(AggregatorSpec::new(Rule::Cwtm { q: 2 }, 4, 1).is_err());
        assert!(AggregatorSpec::new(Rule::Average, 4, 2).is_err());
        assert!(AggregatorSpec::new(Rule::MultiKrum { q: 2 }, 5, 1).is_ok());
        assert!(AggregatorSpec::new(Rule::MultiKrum { q: 3 }, 5, 1).is_err());
    }

    #[test]
    fn noise_c2_table() {
        let p = crate::problems::NoiseParams { mu: 1.0, b: 0.5, sigma: 1.0 };
        assert_eq!(noise_drift(&p, 1.0, 2.0, 1, 0), -1.0 + 1.0);
        assert_eq!(noise_drift(&p, 1.0, 2.0, 0, 1), 1.0 + 1.0);
        assert_eq!(noise_drift(&p, 1.0, 2.0, 1, 1), 1.0);
        assert_eq!(noise_drift(&p, 1.0, 2.0, 0, 0), 1.0);
    }
}
