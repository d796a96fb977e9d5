//! Declarative scenario configuration (TOML) and its lowering to [`Scenario`].
//!
//! Unknown keys are rejected, and semantic validation errors name the offending
//! field. Top-level scalars (`x0`, `dt`, `horizon`) must appear before the
//! first table in the file, per TOML rules.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use cbf_core::cbf::{
    make_rotation_2d, AffineCbf, Cbf, CbfSet, ClassKappaE, QuadraticCbf, SafeSetSpec,
    TransformedCbf,
};
use cbf_core::dynamics::{AdmissibleBox, LtiSystem, SystemModel};
use cbf_core::filter::{FilterKind, FilterStrategy, Policy};
use cbf_core::sim::{OnInfeasible, Scenario};
use cbf_core::{InputVec, StateVec};

use crate::CliError;

/// Metric defaults for config-driven runs; presets override their own.
pub const DEFAULT_CHATTER_THRESHOLD: f64 = 0.05;
pub const DEFAULT_SINGULAR_EPS: f64 = 1e-8;

fn bad(field: &str, msg: &str) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub x0: Vec<f64>,
    /// Sampling interval, seconds.
    pub dt: f64,
    /// Simulated time, seconds.
    pub horizon: f64,
    pub system: SystemConfig,
    pub cbf: CbfConfig,
    pub gamma: GammaConfig,
    pub strategy: StrategyConfig,
    pub pi: PolicyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<OutputsConfig>,
    /// Admissible state box; required by `check-cbf`, ignored by `simulate`.
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoxConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Named model: `sim` (identified quadrotor) or `real` (z-axis model).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, rename = "A", skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, rename = "B", skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CbfConfig {
    /// `quadratic`, `affine`, or `polytope`.
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, rename = "P", skip_serializing_if = "Option::is_none")]
    pub p_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<MemberConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransformConfig>,
    /// Reference set for the polytope inclusion check in `check-cbf`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer: Option<OuterConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MemberConfig {
    pub p: Vec<f64>,
    pub b: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TransformConfig {
    /// Planar rotation angle, radians.
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OuterConfig {
    pub beta: f64,
    #[serde(rename = "P")]
    pub p_matrix: Vec<Vec<f64>>,
    pub c: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GammaConfig {
    /// `identity` or `linear`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    /// `none`, `standard`, or `penalty`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_safe: Option<PolicyConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    /// `constant` or `zero`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Parses and semantically validates a config file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg: ScenarioConfig =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    validate_config(&cfg)?;
    Ok(cfg)
}

fn validate_config(cfg: &ScenarioConfig) -> Result<(), CliError> {
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(bad("dt", &format!("must be a positive number of seconds, got {}", cfg.dt)));
    }
    if cfg.horizon.is_nan() || cfg.horizon < cfg.dt {
        return Err(bad(
            "horizon",
            &format!("must cover at least one sampling interval, got {} < dt = {}", cfg.horizon, cfg.dt),
        ));
    }
    if cfg.x0.is_empty() || cfg.x0.iter().any(|v| !v.is_finite()) {
        return Err(bad("x0", "must be a nonempty list of finite numbers"));
    }
    match (&cfg.system.name, &cfg.system.a, &cfg.system.b) {
        (Some(_), None, None) | (None, Some(_), Some(_)) => {}
        _ => {
            return Err(bad(
                "system",
                "specify either `name` or both `A` and `B` matrices",
            ))
        }
    }
    match cfg.cbf.kind.as_str() {
        "quadratic" => {
            if cfg.cbf.beta.is_none() || cfg.cbf.p_matrix.is_none() || cfg.cbf.c.is_none() {
                return Err(bad("cbf", "quadratic cbf requires `beta`, `P`, and `c`"));
            }
        }
        "affine" => {
            if cfg.cbf.p.is_none() || cfg.cbf.b.is_none() {
                return Err(bad("cbf", "affine cbf requires `p` and `b`"));
            }
        }
        "polytope" => {
            if cfg.cbf.members.as_ref().is_none_or(|m| m.is_empty()) {
                return Err(bad("cbf.members", "polytope cbf requires at least one member"));
            }
            if cfg.cbf.transform.is_some() {
                return Err(bad("cbf.transform", "transforms apply to quadratic or affine cbfs only"));
            }
        }
        other => return Err(bad("cbf.type", &format!("unknown cbf type `{other}`"))),
    }
    match cfg.gamma.kind.as_str() {
        "identity" => {}
        "linear" => {
            if cfg.gamma.k.is_none() {
                return Err(bad("gamma.k", "linear gamma requires a gain"));
            }
        }
        other => return Err(bad("gamma.kind", &format!("unknown gamma `{other}`"))),
    }
    match cfg.strategy.kind.as_str() {
        "none" | "standard" => {}
        "penalty" => {
            if cfg.strategy.r.is_none() || cfg.strategy.eps.is_none() {
                return Err(bad("strategy", "penalty strategy requires `r` and `eps`"));
            }
        }
        other => return Err(bad("strategy.kind", &format!("unknown strategy `{other}`"))),
    }
    match cfg.pi.kind.as_str() {
        "zero" => {}
        "constant" => {
            if cfg.pi.value.is_none() {
                return Err(bad("pi.value", "constant policy requires a value"));
            }
        }
        other => return Err(bad("pi.kind", &format!("unknown policy `{other}`"))),
    }
    if let Some(b) = &cfg.bounds {
        if b.lower.len() != b.upper.len() {
            return Err(bad("box", "lower and upper must have equal length"));
        }
    }
    Ok(())
}

pub(crate) fn to_matrix(rows: &[Vec<f64>], field: &str) -> Result<DMatrix<f64>, CliError> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    if nr == 0 || nc == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(bad(field, "must be a rectangular, nonempty matrix"));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

pub fn build_system(cfg: &SystemConfig) -> Result<LtiSystem, CliError> {
    match (&cfg.name, &cfg.a, &cfg.b) {
        (Some(name), _, _) => match name.as_str() {
            "sim" => Ok(cbf_core::sim::sim_system()),
            "real" => Ok(cbf_core::sim::real_system()),
            other => Err(bad("system.name", &format!("unknown system `{other}` (expected `sim` or `real`)"))),
        },
        (None, Some(a), Some(b)) => {
            Ok(LtiSystem::new(to_matrix(a, "system.A")?, to_matrix(b, "system.B")?)?)
        }
        _ => Err(bad("system", "specify either `name` or both `A` and `B`")),
    }
}

fn build_policy(cfg: &PolicyConfig, m: usize, field: &str) -> Result<Policy, CliError> {
    match cfg.kind.as_str() {
        "zero" => Ok(Policy::zero(m)),
        "constant" => {
            let value = cfg
                .value
                .as_ref()
                .ok_or_else(|| bad(field, "constant policy requires a value"))?;
            if value.len() != m {
                return Err(bad(field, &format!("value has length {}, expected {m}", value.len())));
            }
            Ok(Policy::constant(InputVec::from_vec(value.clone())))
        }
        other => Err(bad(field, &format!("unknown policy `{other}`"))),
    }
}

pub(crate) fn build_gamma(cfg: &GammaConfig) -> Result<ClassKappaE, CliError> {
    match cfg.kind.as_str() {
        "identity" => Ok(ClassKappaE::Identity),
        "linear" => {
            let k = cfg.k.ok_or_else(|| bad("gamma.k", "linear gamma requires a gain"))?;
            Ok(ClassKappaE::linear(k)?)
        }
        other => Err(bad("gamma.kind", &format!("unknown gamma `{other}`"))),
    }
}

pub fn build_safe_set(cfg: &CbfConfig) -> Result<SafeSetSpec, CliError> {
    let base = match cfg.kind.as_str() {
        "quadratic" => {
            let beta = cfg.beta.ok_or_else(|| bad("cbf.beta", "required"))?;
            let p = to_matrix(cfg.p_matrix.as_ref().ok_or_else(|| bad("cbf.P", "required"))?, "cbf.P")?;
            let c = cfg.c.as_ref().ok_or_else(|| bad("cbf.c", "required"))?;
            Cbf::Quadratic(QuadraticCbf::new(beta, StateVec::from_vec(c.clone()), p)?)
        }
        "affine" => {
            let p = cfg.p.as_ref().ok_or_else(|| bad("cbf.p", "required"))?;
            let b = cfg.b.ok_or_else(|| bad("cbf.b", "required"))?;
            Cbf::Affine(AffineCbf::new(StateVec::from_vec(p.clone()), b)?)
        }
        "polytope" => {
            let members = cfg
                .members
                .as_ref()
                .ok_or_else(|| bad("cbf.members", "required"))?
                .iter()
                .map(|m| AffineCbf::new(StateVec::from_vec(m.p.clone()), m.b))
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(SafeSetSpec::Polytope(CbfSet::new(members)?));
        }
        other => return Err(bad("cbf.type", &format!("unknown cbf type `{other}`"))),
    };
    let cbf = match &cfg.transform {
        None => base,
        Some(t) => {
            let n = base.dim();
            if n != 2 {
                return Err(bad("cbf.transform", "planar transforms require n = 2"));
            }
            let rotation = make_rotation_2d(t.theta);
            let delta = match &t.delta {
                Some(d) => StateVec::from_vec(d.clone()),
                None => StateVec::zeros(n),
            };
            Cbf::Transformed(TransformedCbf::new(base, rotation, delta)?)
        }
    };
    Ok(SafeSetSpec::Single(cbf))
}

pub fn build_bounds(cfg: &BoxConfig) -> Result<AdmissibleBox, CliError> {
    Ok(AdmissibleBox::new(cfg.lower.clone(), cfg.upper.clone())?)
}

/// Lowers a validated config to a runnable scenario.
pub fn to_scenario(cfg: &ScenarioConfig) -> Result<Scenario, CliError> {
    let system = build_system(&cfg.system)?;
    let m = system.input_dim();
    let safe_set = build_safe_set(&cfg.cbf)?;
    let gamma = build_gamma(&cfg.gamma)?;
    let pi = build_policy(&cfg.pi, m, "pi")?;
    let strategy = match cfg.strategy.kind.as_str() {
        "none" => None,
        "standard" => Some(FilterStrategy::standard(safe_set.clone(), gamma)),
        "penalty" => {
            let r = cfg.strategy.r.ok_or_else(|| bad("strategy.r", "required"))?;
            let eps = cfg.strategy.eps.ok_or_else(|| bad("strategy.eps", "required"))?;
            let pi_safe = match &cfg.strategy.pi_safe {
                Some(p) => build_policy(p, m, "strategy.pi_safe")?,
                None => Policy::zero(m),
            };
            Some(FilterStrategy::penalty(safe_set.clone(), gamma, r, eps, pi_safe)?)
        }
        other => return Err(bad("strategy.kind", &format!("unknown strategy `{other}`"))),
    };
    Ok(Scenario {
        system: SystemModel::Lti(system),
        safe_set,
        strategy,
        pi,
        x0: StateVec::from_vec(cfg.x0.clone()),
        dt: cfg.dt,
        horizon: cfg.horizon,
        chatter_threshold: DEFAULT_CHATTER_THRESHOLD,
        singular_eps: DEFAULT_SINGULAR_EPS,
        on_infeasible: OnInfeasible::Halt,
    })
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn policy_config(p: &Policy) -> PolicyConfig {
    match p {
        Policy::Zero { .. } => PolicyConfig {
            kind: "zero".into(),
            value: None,
        },
        Policy::Constant { value } => PolicyConfig {
            kind: "constant".into(),
            value: Some(value.iter().copied().collect()),
        },
    }
}

fn cbf_config(spec: &SafeSetSpec) -> CbfConfig {
    let empty = CbfConfig {
        kind: String::new(),
        beta: None,
        p_matrix: None,
        c: None,
        p: None,
        b: None,
        members: None,
        transform: None,
        outer: None,
    };
    match spec {
        SafeSetSpec::Polytope(set) => CbfConfig {
            kind: "polytope".into(),
            members: Some(
                set.members()
                    .iter()
                    .map(|m| MemberConfig {
                        p: m.p().iter().copied().collect(),
                        b: m.b(),
                    })
                    .collect(),
            ),
            ..empty
        },
        SafeSetSpec::Single(cbf) => {
            let (base, transform) = match cbf {
                Cbf::Transformed(t) => {
                    let r = t.rotation();
                    let theta = r[(1, 0)].atan2(r[(0, 0)]);
                    (
                        t.inner(),
                        Some(TransformConfig {
                            theta,
                            delta: Some(t.delta().iter().copied().collect()),
                        }),
                    )
                }
                other => (other, None),
            };
            match base {
                Cbf::Quadratic(q) => CbfConfig {
                    kind: "quadratic".into(),
                    beta: Some(q.beta()),
                    p_matrix: Some(matrix_rows(q.p_matrix())),
                    c: Some(q.center().iter().copied().collect()),
                    transform,
                    ..empty
                },
                Cbf::Affine(a) => CbfConfig {
                    kind: "affine".into(),
                    p: Some(a.p().iter().copied().collect()),
                    b: Some(a.b()),
                    transform,
                    ..empty
                },
                Cbf::Transformed(_) => unreachable!("nested transforms are not constructed"),
            }
        }
    }
}

/// Re-expresses a scenario as a config document (the report echo). Feeding the
/// echo back through [`to_scenario`] reproduces the run.
pub fn scenario_to_config(scn: &Scenario) -> ScenarioConfig {
    let system = match &scn.system {
        SystemModel::Lti(s) => SystemConfig {
            name: None,
            a: Some(matrix_rows(s.a())),
            b: Some(matrix_rows(s.b())),
        },
        SystemModel::Generic(_) => SystemConfig {
            name: None,
            a: None,
            b: None,
        },
    };
    let (strategy, gamma) = match &scn.strategy {
        None => (
            StrategyConfig {
                kind: "none".into(),
                r: None,
                eps: None,
                pi_safe: None,
            },
            GammaConfig {
                kind: "identity".into(),
                k: None,
            },
        ),
        Some(st) => {
            let gamma = match st.gamma {
                ClassKappaE::Identity => GammaConfig {
                    kind: "identity".into(),
                    k: None,
                },
                ClassKappaE::LinearGain(k) => GammaConfig {
                    kind: "linear".into(),
                    k: Some(k),
                },
            };
            let strategy = match &st.kind {
                FilterKind::Standard => StrategyConfig {
                    kind: "standard".into(),
                    r: None,
                    eps: None,
                    pi_safe: None,
                },
                FilterKind::Penalty { r, eps, pi_safe } => StrategyConfig {
                    kind: "penalty".into(),
                    r: Some(*r),
                    eps: Some(*eps),
                    pi_safe: Some(policy_config(pi_safe)),
                },
            };
            (strategy, gamma)
        }
    };
    ScenarioConfig {
        x0: scn.x0.iter().copied().collect(),
        dt: scn.dt,
        horizon: scn.horizon,
        system,
        cbf: cbf_config(&scn.safe_set),
        gamma,
        strategy,
        pi: policy_config(&scn.pi),
        outputs: None,
        bounds: None,
    }
}
