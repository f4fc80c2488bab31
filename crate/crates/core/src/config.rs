//! Run configuration shared by the trainer and the command line.

use serde::{Deserialize, Serialize};

use crate::aggregators::Rule;
use crate::attacks::AttackKind;
use crate::error::{Error, Result};
use crate::problems::{ProblemConfig, ProblemInstance};
use crate::trainer::schedule::ScheduleSpec;

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub rule: Rule,
    pub attack: AttackKind,
    pub schedule: ScheduleSpec,
    /// Number of iterations T.
    pub iterations: usize,
    /// Initial model; all ones when absent.
    pub x0: Option<Vec<f64>>,
    pub seed: u64,
    /// Monte-Carlo replicates.
    pub replicates: usize,
    pub track_lyapunov: bool,
    /// κ used by the Lyapunov tracker when the rule is not an oracle rule.
    pub lyapunov_kappa: Option<f64>,
    /// Trailing fraction of iterations averaged by the floor estimate.
    pub floor_window: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemConfig::default(),
            rule: Rule::Average,
            attack: AttackKind::None,
            schedule: ScheduleSpec::default(),
            iterations: 100,
            x0: None,
            seed: 0,
            replicates: 1,
            track_lyapunov: false,
            lyapunov_kappa: None,
            floor_window: 0.1,
        }
    }
}

impl RunConfig {
    /// Checks the instance-independent invariants.
    pub fn validate_basic(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("run.iterations must be at least 1"));
        }
        if self.replicates == 0 {
            return Err(Error::config("run.replicates must be at least 1"));
        }
        if !(self.floor_window > 0.0 && self.floor_window <= 1.0) {
            return Err(Error::config(format!("run.floor_window must lie in (0, 1], got {}", self.floor_window)));
        }
        if let Some(x0) = &self.x0 {
            if x0.is_empty() || !x0.iter().all(|v| v.is_finite()) {
                return Err(Error::config("run.x0 must be a non-empty list of finite values"));
            }
        }
        Ok(())
    }

    pub fn build_instance(&self) -> Result<ProblemInstance> {
        self.problem.build(self.seed)
    }

    /// Advisory messages that do not block the run.
    pub fn warnings(&self, instance: &ProblemInstance) -> Vec<String> {
        let mut out = Vec::new();
        let kappa = match self.rule {
            Rule::OracleAdversarial { kappa, .. } => Some(kappa),
            _ => self.lyapunov_kappa,
        };
        if let (Some(kappa), Some(b)) = (kappa, instance.analytic().b) {
            if kappa * b * b >= 1.0 / 56.0 {
                out.push(format!(
                    "kappa * B^2 = {:.6} >= 1/56: the momentum convergence guarantee does not cover this setting",
                    kappa * b * b
                ));
            }
            if kappa * b * b >= 1.0 {
                out.push(format!("kappa * B^2 = {:.6} >= 1: no finite error floor is guaranteed", kappa * b * b));
            }
        }
        out
    }
}
