//! Flat `key = value` configuration files.
//!
//! Keys are dotted (`problem.mu`, `schedule.gamma`, …), `#` starts a comment,
//! list values are comma separated and quadratic coefficient rows are
//! separated by `;`. The full schema lives in `configs/schema.txt`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::aggregators::{OracleVariant, Rule, SignPolicy, DEFAULT_GM_ITERS, DEFAULT_GM_NU};
use crate::attacks::{AttackKind, DEFAULT_ALIE_CANDIDATES};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::problems::{ClassificationSpec, NoiseModel, ProblemConfig, ProblemSpec};
use crate::trainer::schedule::{self, Momentum, ScheduleSpec, StepSize};
use crate::trainer::Trainer;

/// Raw key/value pairs with usage tracking so unknown keys can be reported.
#[derive(Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
    used: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {line_no}: expected `key = value`, got `{line}`")))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::config(format!("line {line_no}: empty key")));
            }
            if let Some((prev, _)) = entries.insert(key.clone(), (line_no, value.trim().to_string())) {
                return Err(Error::config(format!("line {line_no}: key `{key}` already set on line {prev}")));
            }
        }
        Ok(Self { entries, used: Default::default() })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        let v = self.entries.get(key).map(|(_, v)| v.as_str());
        if v.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        v
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn parse_as<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::config(format!("field `{key}`: expected {what}, got `{v}`"))),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.parse_as::<f64>(key, "a number")?.unwrap_or(default);
        if !v.is_finite() {
            return Err(Error::config(format!("field `{key}`: value must be finite")));
        }
        Ok(v)
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        self.parse_as::<f64>(key, "a number")
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.parse_as::<usize>(key, "a nonnegative integer")?.unwrap_or(default))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.parse_as::<u64>(key, "a nonnegative integer")?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        Ok(self.parse_as::<bool>(key, "true or false")?.unwrap_or(default))
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.raw(key).unwrap_or(default)
    }

    pub fn list_f64(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => parse_list(key, v).map(Some),
        }
    }

    pub fn list_usize(&self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::config(format!("field `{key}`: `{}` is not a nonnegative integer", s.trim())))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    pub fn list_str(&self, key: &str) -> Option<Vec<String>> {
        self.raw(key).map(|v| v.split(',').map(|s| s.trim().to_string()).collect())
    }

    fn rows(&self, key: &str) -> Result<Option<Vec<Vec<f64>>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.split(';').map(|row| parse_list(key, row)).collect::<Result<Vec<_>>>().map(Some),
        }
    }

    /// Errors on any key that was never read.
    pub fn reject_unknown(&self) -> Result<()> {
        let used = self.used.borrow();
        if let Some((key, (line, _))) = self.entries.iter().find(|(k, _)| !used.contains(*k)) {
            return Err(Error::config(format!("line {line}: field `{key}` is unknown or not used by this configuration")));
        }
        Ok(())
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::config(format!("field `{key}`: `{s}` is not a finite number")))
        })
        .collect()
}

fn unknown_choice(key: &str, got: &str, allowed: &[&str]) -> Error {
    Error::config(format!("field `{key}`: unknown value `{got}` (expected one of {})", allowed.join(", ")))
}

fn problem_from(kv: &KeyValues) -> Result<ProblemConfig> {
    let kind = kv.str_or("problem.kind", "hetero_lower_bound");
    let dim = kv.usize_or("problem.dim", 1)?;
    let spec = match kind {
        "hetero_lower_bound" => ProblemSpec::HeteroLowerBound {
            mu: kv.f64_or("problem.mu", 1.0)?,
            g: kv.f64_or("problem.G", 1.0)?,
            b: kv.f64_or("problem.B", 0.5)?,
            dim,
        },
        "noise_lower_bound" => ProblemSpec::NoiseLowerBound {
            mu: kv.f64_or("problem.mu", 1.0)?,
            b: kv.f64_or("problem.B", 0.5)?,
            sigma: kv.f64_or("problem.sigma", 1.0)?,
            dim,
        },
        "synthetic_family" => ProblemSpec::SyntheticFamily {
            n: kv.usize_or("problem.n", 20)?,
            k: kv.usize_or("problem.k", 7)?,
            a: kv.f64_or("problem.a", 1.0)?,
            g: kv.f64_or("problem.G", 1.0)?,
            b: kv.f64_or("problem.B", 1.0)?,
            dim,
        },
        "quadratic" => {
            let a = kv.rows("problem.curvatures")?.ok_or_else(|| Error::config("field `problem.curvatures` is required"))?;
            let c = kv.rows("problem.linear")?.ok_or_else(|| Error::config("field `problem.linear` is required"))?;
            ProblemSpec::Quadratic { a, c }
        }
        "classification" => {
            let d = ClassificationSpec::default();
            ProblemSpec::Classification {
                task: ClassificationSpec {
                    features: kv.usize_or("problem.features", d.features)?,
                    classes: kv.usize_or("problem.classes", d.classes)?,
                    samples_per_class: kv.usize_or("problem.samples_per_class", d.samples_per_class)?,
                    separation: kv.f64_or("problem.separation", d.separation)?,
                    dirichlet_alpha: kv.f64_or("problem.dirichlet_alpha", d.dirichlet_alpha)?,
                    l2: kv.f64_or("problem.l2", d.l2)?,
                },
                workers: kv.usize_or("problem.workers", 10)?,
            }
        }
        other => {
            return Err(unknown_choice(
                "problem.kind",
                other,
                &["hetero_lower_bound", "noise_lower_bound", "synthetic_family", "quadratic", "classification"],
            ))
        }
    };
    let noise = if kv.has("problem.noise") {
        let sigma = kv.f64_or("problem.noise_sigma", 1.0)?;
        Some(match kv.str_or("problem.noise", "none") {
            "none" => NoiseModel::None,
            "gaussian" => NoiseModel::Gaussian { sigma },
            "bernoulli_pm" => NoiseModel::BernoulliPm { sigma },
            "minibatch" => NoiseModel::Minibatch { m: kv.usize_or("problem.batch", 8)? },
            other => return Err(unknown_choice("problem.noise", other, &["none", "gaussian", "bernoulli_pm", "minibatch"])),
        })
    } else {
        None
    };
    Ok(ProblemConfig { spec, noise, byzantine: kv.usize_or("problem.byzantine", 0)? })
}

fn rule_from(kv: &KeyValues) -> Result<Rule> {
    Ok(match kv.str_or("aggregator.rule", "average") {
        "average" => Rule::Average,
        "krum" => Rule::Krum,
        "multi_krum" => Rule::MultiKrum { q: kv.usize_or("aggregator.q", 1)? },
        "cwm" => Rule::Cwm,
        "cwtm" => Rule::Cwtm { q: kv.usize_or("aggregator.q", 1)? },
        "gm" => Rule::Gm {
            iters: kv.usize_or("aggregator.iters", DEFAULT_GM_ITERS)?,
            nu: kv.f64_or("aggregator.nu", DEFAULT_GM_NU)?,
        },
        "oracle_adversarial" => {
            let variant = match kv.str_or("aggregator.variant", "variance_sign") {
                "variance_sign" => OracleVariant::VarianceSign {
                    policy: match kv.str_or("aggregator.sign_policy", "displacement") {
                        "displacement" => SignPolicy::Displacement,
                        "next_iterate" => SignPolicy::NextIterate,
                        other => {
                            return Err(unknown_choice("aggregator.sign_policy", other, &["displacement", "next_iterate"]))
                        }
                    },
                },
                "hetero_c1" => OracleVariant::HeteroC1,
                "noise_c2" => OracleVariant::NoiseC2,
                other => {
                    return Err(unknown_choice("aggregator.variant", other, &["variance_sign", "hetero_c1", "noise_c2"]))
                }
            };
            Rule::OracleAdversarial { kappa: kv.f64_or("aggregator.kappa", 0.1)?, variant }
        }
        other => {
            return Err(unknown_choice(
                "aggregator.rule",
                other,
                &["average", "krum", "multi_krum", "cwm", "cwtm", "gm", "oracle_adversarial"],
            ))
        }
    })
}

/// Parses an aggregation rule from `aggregator.*` style key/values, rejecting unused keys.
pub fn parse_rule(text: &str) -> Result<Rule> {
    let kv = KeyValues::parse(text)?;
    let rule = rule_from(&kv)?;
    kv.reject_unknown()?;
    Ok(rule)
}

fn attack_from(kv: &KeyValues) -> Result<AttackKind> {
    Ok(match kv.str_or("attack.kind", "none") {
        "none" => AttackKind::None,
        "sign_flip" => AttackKind::SignFlip,
        "label_flip" => AttackKind::LabelFlip,
        "alie" => AttackKind::Alie {
            candidates: kv.list_f64("attack.candidates")?.unwrap_or_else(|| DEFAULT_ALIE_CANDIDATES.to_vec()),
        },
        other => return Err(unknown_choice("attack.kind", other, &["none", "sign_flip", "label_flip", "alie"])),
    })
}

/// Step-size family with the step-size knob left symbolic; used by sweeps.
pub(crate) fn stepsize_of_kind(kind: &str, gamma0: f64, t_max: usize) -> Result<StepSize> {
    Ok(match kind {
        "constant" => StepSize::Constant { gamma: gamma0 },
        "invsqrt" => StepSize::InvSqrt { gamma0 },
        "half_decay" => StepSize::HalfDecay { gamma0 },
        "cosine" => StepSize::Cosine { gamma0, t_max },
        other => return Err(unknown_choice("schedule.stepsize", other, &["constant", "invsqrt", "half_decay", "cosine"])),
    })
}

/// Schedule with PL constants possibly marked `auto`, resolved later.
struct PendingSchedule {
    spec: ScheduleSpec,
    auto_alpha: bool,
    auto_s0: bool,
    delta: f64,
}

fn schedule_from(kv: &KeyValues, iterations: usize) -> Result<PendingSchedule> {
    let momentum = match kv.str_or("schedule.momentum", "zero") {
        "zero" => Momentum::Zero,
        "constant" => Momentum::Constant { beta: kv.f64_or("schedule.beta", 0.9)? },
        "tied" => Momentum::Tied { c_beta: kv.f64_or("schedule.c_beta", schedule::DEFAULT_TIE_CONSTANT)? },
        other => return Err(unknown_choice("schedule.momentum", other, &["zero", "constant", "tied"])),
    };
    let kind = kv.str_or("schedule.stepsize", "constant");
    let mut pending = PendingSchedule {
        spec: ScheduleSpec { stepsize: StepSize::Constant { gamma: 0.0 }, momentum },
        auto_alpha: false,
        auto_s0: false,
        delta: kv.f64_or("schedule.delta", schedule::DEFAULT_PL_DELTA)?,
    };
    pending.spec.stepsize = if kind == "pl_piecewise" {
        let alpha = match kv.str_or("schedule.alpha", "auto") {
            "auto" => {
                pending.auto_alpha = true;
                1.0
            }
            _ => kv.f64_or("schedule.alpha", 1.0)?,
        };
        let s0 = match kv.str_or("schedule.s0", "auto") {
            "auto" => {
                pending.auto_s0 = true;
                3.0
            }
            _ => kv.f64_or("schedule.s0", 3.0)?,
        };
        StepSize::PlPiecewise { alpha, s0 }
    } else {
        let gamma0 = if kind == "constant" {
            kv.f64_or("schedule.gamma", kv.f64_or("schedule.gamma0", 0.1)?)?
        } else {
            kv.f64_or("schedule.gamma0", 0.1)?
        };
        stepsize_of_kind(kind, gamma0, kv.usize_or("schedule.t_max", iterations)?)?
    };
    Ok(pending)
}

/// First integer strictly above `min`.
fn next_above(min: f64) -> f64 {
    let c = min.ceil();
    if c > min {
        c
    } else {
        c + 1.0
    }
}

/// Parsed configuration with any non-fatal warnings.
#[derive(Clone, Debug)]
pub struct ParsedConfig {
    pub config: RunConfig,
    pub warnings: Vec<String>,
}

/// Parses and fully validates a configuration file.
pub fn parse_config(path: &Path) -> Result<ParsedConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

/// Builds a run configuration from already-parsed key/values, leaving unknown-key checks to the caller.
pub(crate) fn config_from_kv(kv: &KeyValues) -> Result<ParsedConfig> {
    let iterations = kv.usize_or("run.iterations", 100)?;
    let problem = problem_from(kv)?;
    let rule = rule_from(kv)?;
    let attack = attack_from(kv)?;
    let pending = schedule_from(kv, iterations)?;
    let mut config = RunConfig {
        problem,
        rule,
        attack,
        schedule: pending.spec,
        iterations,
        x0: kv.list_f64("run.x0")?,
        seed: kv.u64_or("run.seed", 0)?,
        replicates: kv.usize_or("run.replicates", 1)?,
        track_lyapunov: kv.bool_or("run.lyapunov", false)?,
        lyapunov_kappa: kv.opt_f64("run.lyapunov_kappa")?,
        floor_window: kv.f64_or("run.floor_window", 0.1)?,
    };
    config.validate_basic()?;
    let instance = config.build_instance()?;
    if let StepSize::PlPiecewise { alpha, s0 } = &mut config.schedule.stepsize {
        let a = instance.analytic();
        let kappa = match config.rule {
            Rule::OracleAdversarial { kappa, .. } => kappa,
            _ => config.lyapunov_kappa.unwrap_or(0.0),
        };
        let b = a.b.unwrap_or(0.0);
        let momentum = config.schedule.momentum != Momentum::Zero;
        if pending.auto_alpha {
            *alpha = if momentum {
                schedule::momentum_pl_alpha(a.mu, kappa, b)
            } else {
                schedule::rdsgd_pl_alpha(a.mu, kappa, b, pending.delta)
            };
            if !(*alpha > 0.0) {
                return Err(Error::config(format!(
                    "automatic PL rate constant is {alpha:.6} <= 0: kappa * B^2 is too large for a guaranteed rate"
                )));
            }
        }
        if pending.auto_s0 {
            *s0 = next_above(if momentum {
                schedule::momentum_pl_s0_min(a.l, *alpha)
            } else {
                schedule::rdsgd_pl_s0_min(a.l, pending.delta, *alpha)
            });
        }
    }
    let warnings = config.warnings(&instance);
    Trainer::with_instance(&config, instance)?;
    Ok(ParsedConfig { config, warnings })
}

/// Parses and validates configuration text.
pub fn parse_config_str(text: &str) -> Result<ParsedConfig> {
    let kv = KeyValues::parse(text)?;
    let parsed = config_from_kv(&kv)?;
    kv.reject_unknown()?;
    Ok(parsed)
}
