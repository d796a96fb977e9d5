//! Deterministic closed-loop simulation, safety/chattering metrics, and the
//! bundled case-study presets.
//!
//! Each run samples the filter at `t_k = k·dt`, holds the returned input over
//! `[t_k, t_k + dt)`, and advances the state with the exact ZOH map (LTI) or
//! RK4 (generic). Identical scenarios produce bit-identical trajectories.

use serde::Serialize;

use crate::cbf::{CbfSet, ClassKappaE, Cbf, QuadraticCbf, SafeSetSpec, TransformedCbf};
use crate::dynamics::{step_rk4, ControlAffine, LtiSystem, SystemModel};
use crate::filter::{filter_step, FilterStrategy, Policy};
use crate::lie::spec_min_lie;
use crate::{Error, InputVec, Result, StateVec};

/// What to do when the per-step QP is infeasible mid-run.
#[derive(Clone, Debug)]
pub enum OnInfeasible {
    /// Stop with an error naming the step (default). An infeasible step means
    /// the configured barrier is not a valid CBF at the current state; halting
    /// surfaces that loudly instead of papering over it.
    Halt,
    /// Apply the given policy for that step and continue.
    Apply(Policy),
}

/// A complete closed-loop experiment description.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub system: SystemModel,
    /// The set membership is recorded against; for filtered runs the presets
    /// use the same specification the filter enforces.
    pub safe_set: SafeSetSpec,
    /// `None` runs the uncertified policy without filtering.
    pub strategy: Option<FilterStrategy>,
    pub pi: Policy,
    pub x0: StateVec,
    /// Sampling interval in seconds.
    pub dt: f64,
    /// Total simulated time in seconds.
    pub horizon: f64,
    /// Input-difference magnitude that counts toward chattering.
    pub chatter_threshold: f64,
    /// `‖L_g h‖` at or below this counts as a near-singular step.
    pub singular_eps: f64,
    pub on_infeasible: OnInfeasible,
}

impl Scenario {
    fn validate(&self) -> Result<()> {
        let n = self.system.state_dim();
        let m = self.system.input_dim();
        if self.safe_set.dim() != n {
            return Err(Error::InvalidParameter(format!(
                "safe set dimension {} does not match state dimension {n}",
                self.safe_set.dim()
            )));
        }
        if self.x0.len() != n {
            return Err(Error::InvalidParameter(format!(
                "x0 has length {}, expected {n}",
                self.x0.len()
            )));
        }
        if !self.x0.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("x0 must be finite".into()));
        }
        if self.pi.dim() != m {
            return Err(Error::InvalidParameter(format!(
                "policy output dimension {} does not match input dimension {m}",
                self.pi.dim()
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.horizon.is_nan() || self.horizon < self.dt {
            return Err(Error::InvalidParameter(format!(
                "horizon {} must be at least one sampling interval {}",
                self.horizon, self.dt
            )));
        }
        Ok(())
    }

    /// Non-fatal issues worth surfacing before a run, currently an initial
    /// state outside the safe set. Modified sets need not contain the legacy
    /// initial condition, so this warns rather than errors.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.safe_set.contains(&self.x0) {
            out.push(format!(
                "initial state lies outside the safe set (h = {:.6})",
                self.safe_set.h_value(&self.x0)
            ));
        }
        out
    }

    /// Number of integration steps; the trajectory has one more record.
    pub fn step_count(&self) -> usize {
        (self.horizon / self.dt + 1e-9).floor() as usize
    }
}

/// One sampled record of the closed loop.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub t: f64,
    pub x: StateVec,
    pub u_proposed: InputVec,
    pub u_applied: InputVec,
    /// Barrier values at `x`, one per safe-set member.
    pub h: Vec<f64>,
    /// `‖L_g h‖` of the weakest member at `x`.
    pub lg_norm: f64,
    pub active: bool,
    pub fallback_engaged: bool,
}

/// Uniformly sampled closed-loop trace; `records[k].t = k·dt`.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn min_h(&self) -> f64 {
        self.records
            .iter()
            .flat_map(|r| r.h.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Safety and chattering summary of one trajectory.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Metrics {
    pub min_h: f64,
    pub violated: bool,
    pub input_min: f64,
    pub input_max: f64,
    /// Σ‖u_k − u_{k−1}‖ over the applied-input sequence.
    pub total_variation: f64,
    /// Sign changes between consecutive input differences larger than the
    /// chatter threshold.
    pub chatter_count: usize,
    /// Records with `lg_norm ≤ eps`.
    pub steps_near_singular: usize,
    pub chatter_threshold: f64,
    pub singular_eps: f64,
}

/// Computes [`Metrics`] from a trajectory.
///
/// Chattering is counted per input channel as sign alternations in the
/// subsequence of step differences exceeding the threshold; the reported count
/// is the worst channel. A constant input sequence yields zero.
pub fn compute_metrics(traj: &Trajectory, chatter_threshold: f64, eps: f64) -> Metrics {
    assert!(!traj.records.is_empty(), "metrics require a nonempty trajectory");
    let min_h = traj.min_h();
    let mut input_min = f64::INFINITY;
    let mut input_max = f64::NEG_INFINITY;
    for r in &traj.records {
        for v in r.u_applied.iter() {
            input_min = input_min.min(*v);
            input_max = input_max.max(*v);
        }
    }
    let mut total_variation = 0.0;
    for w in traj.records.windows(2) {
        total_variation += (&w[1].u_applied - &w[0].u_applied).norm();
    }
    let m = traj.records[0].u_applied.len();
    let mut chatter_count = 0usize;
    for c in 0..m {
        let mut count = 0usize;
        let mut prev_sign = 0i8;
        for w in traj.records.windows(2) {
            let d = w[1].u_applied[c] - w[0].u_applied[c];
            if d.abs() > chatter_threshold {
                let sign = if d > 0.0 { 1 } else { -1 };
                if prev_sign != 0 && sign != prev_sign {
                    count += 1;
                }
                prev_sign = sign;
            }
        }
        chatter_count = chatter_count.max(count);
    }
    let steps_near_singular = traj.records.iter().filter(|r| r.lg_norm <= eps).count();
    Metrics {
        min_h,
        violated: min_h < 0.0,
        input_min,
        input_max,
        total_variation,
        chatter_count,
        steps_near_singular,
        chatter_threshold,
        singular_eps: eps,
    }
}

/// Runs the closed loop and returns the trajectory with its metrics.
pub fn run(scn: &Scenario) -> Result<(Trajectory, Metrics)> {
    scn.validate()?;
    let steps = scn.step_count();
    let zoh = match &scn.system {
        SystemModel::Lti(sys) => Some(sys.zoh(scn.dt)?),
        SystemModel::Generic(_) => None,
    };
    let mut records = Vec::with_capacity(steps + 1);
    let mut x = scn.x0.clone();
    for k in 0..=steps {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { step: k });
        }
        let u_proposed = scn.pi.eval(&x);
        let (u_applied, active, fallback_engaged, lg_norm) = match &scn.strategy {
            None => {
                let lie = spec_min_lie(&scn.system, &scn.safe_set, &x);
                (u_proposed.clone(), false, false, lie.lg_norm)
            }
            Some(strategy) => match filter_step(&scn.system, strategy, &scn.pi, &x) {
                Ok(d) => (d.u_out, d.active, d.fallback_engaged, d.lie.lg_norm),
                Err(e @ Error::Infeasible { .. }) => match &scn.on_infeasible {
                    OnInfeasible::Halt => return Err(e.at_step(k)),
                    OnInfeasible::Apply(policy) => {
                        let lie = spec_min_lie(&scn.system, &scn.safe_set, &x);
                        (policy.eval(&x), false, false, lie.lg_norm)
                    }
                },
                Err(e) => return Err(e.at_step(k)),
            },
        };
        records.push(StepRecord {
            t: k as f64 * scn.dt,
            x: x.clone(),
            u_proposed,
            u_applied: u_applied.clone(),
            h: scn.safe_set.h_values(&x),
            lg_norm,
            active,
            fallback_engaged,
        });
        if k < steps {
            x = match (&zoh, &scn.system) {
                (Some(map), _) => map.step(&x, &u_applied),
                (None, sys) => step_rk4(sys, &x, &u_applied, scn.dt)?,
            };
        }
    }
    let traj = Trajectory { records };
    let metrics = compute_metrics(&traj, scn.chatter_threshold, scn.singular_eps);
    Ok((traj, metrics))
}

/// Reruns the scenario at each sampling interval and collects the metrics.
pub fn dt_sweep(scn: &Scenario, dts: &[f64]) -> Result<Vec<Metrics>> {
    if dts.is_empty() {
        return Err(Error::InvalidParameter("dt sweep needs at least one value".into()));
    }
    let mut out = Vec::with_capacity(dts.len());
    for &dt in dts {
        let mut case = scn.clone();
        case.dt = dt;
        let (_, metrics) = run(&case)?;
        out.push(metrics);
    }
    Ok(out)
}

pub const PRESET_NAMES: [&str; 9] = [
    "sim-uncertified",
    "sim-standard",
    "sim-penalty",
    "sim-transformed",
    "sim-affine",
    "real-standard",
    "real-penalty",
    "real-transformed",
    "real-affine",
];

/// Identified quadrotor model used by the `sim-*` presets.
pub fn sim_system() -> LtiSystem {
    LtiSystem::from_rows(&[&[0.0, 1.0], &[-0.09, 0.10]], &[&[0.0], &[18.09]]).unwrap()
}

/// Quadrotor z-axis delta-thrust model used by the `real-*` presets.
pub fn real_system() -> LtiSystem {
    LtiSystem::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]], &[&[0.0], &[30.30]]).unwrap()
}

/// Ellipsoidal barrier shared by both preset families (centers differ).
fn ellipse(center: [f64; 2]) -> QuadraticCbf {
    QuadraticCbf::new(
        1.0,
        StateVec::from_vec(center.to_vec()),
        nalgebra::DMatrix::from_row_slice(2, 2, &[1.31, 0.0, 0.0, 4.00]),
    )
    .unwrap()
}

const QUAD_MASS: f64 = 0.033;
const GRAVITY: f64 = 9.81;

/// Hover-normalized uncertified policy of the `real-*` presets: −0.05·m·g.
pub fn real_pi_value() -> f64 {
    -0.05 * QUAD_MASS * GRAVITY
}

fn polytope_angles(count: usize, offset: f64) -> Vec<f64> {
    (0..count)
        .map(|k| offset + 2.0 * std::f64::consts::PI * k as f64 / count as f64)
        .collect()
}

/// Rotates an ellipse about its own center: `h̃(x) = h(R(x − δ))` maps the
/// center back onto itself when `δ = c − Rᵀc`.
fn rotated_about_center(inner: QuadraticCbf, theta: f64) -> Cbf {
    let rotation = crate::cbf::make_rotation_2d(theta);
    let center = inner.center().clone();
    let delta = &center - rotation.transpose() * &center;
    Cbf::Transformed(TransformedCbf::new(Cbf::Quadratic(inner), rotation, delta).unwrap())
}

/// Builds one of the bundled case-study scenarios.
///
/// The `sim-*` family runs the identified model for 15 s at dt = 1 ms from
/// x₀ = (0.5, −0.1) under π(x) = −0.1 with the identity class-K map. The
/// `real-*` family runs the z-axis model for 30 s at dt = 167 ms from
/// x₀ = (1.25, 0) under π(x) = −0.05·m·g. Strategy parameters: penalty r = 1
/// (sim) and r = 75 (real), both with ε = 1e-8 and a zero backup policy; the
/// transformation rotates the ellipse by π/6 about its center; the inner
/// polytopes use 7 (sim) and 5 (real) affine members, none parallel to the
/// input direction.
pub fn preset(name: &str) -> Result<Scenario> {
    let gamma = ClassKappaE::Identity;
    let scenario = |system: LtiSystem,
                    safe_set: SafeSetSpec,
                    strategy: Option<FilterStrategy>,
                    pi: Policy,
                    x0: [f64; 2],
                    dt: f64,
                    horizon: f64,
                    chatter_threshold: f64| Scenario {
        system: SystemModel::Lti(system),
        safe_set,
        strategy,
        pi,
        x0: StateVec::from_vec(x0.to_vec()),
        dt,
        horizon,
        chatter_threshold,
        singular_eps: 1e-8,
        on_infeasible: OnInfeasible::Halt,
    };

    let sim_pi = Policy::constant(InputVec::from_vec(vec![-0.1]));
    let real_pi = Policy::constant(InputVec::from_vec(vec![real_pi_value()]));
    let sim_chatter = 0.05;
    let real_chatter = 0.005 * QUAD_MASS * GRAVITY;

    let scn = match name {
        "sim-uncertified" => scenario(
            sim_system(),
            SafeSetSpec::Single(Cbf::Quadratic(ellipse([0.0, 0.0]))),
            None,
            sim_pi,
            [0.5, -0.1],
            0.001,
            15.0,
            sim_chatter,
        ),
        "sim-standard" => {
            let spec = SafeSetSpec::Single(Cbf::Quadratic(ellipse([0.0, 0.0])));
            scenario(
                sim_system(),
                spec.clone(),
                Some(FilterStrategy::standard(spec, gamma)),
                sim_pi,
                [0.5, -0.1],
                0.001,
                15.0,
                sim_chatter,
            )
        }
        "sim-penalty" => {
            let spec = SafeSetSpec::Single(Cbf::Quadratic(ellipse([0.0, 0.0])));
            let strategy = FilterStrategy::penalty(spec.clone(), gamma, 1.0, 1e-8, Policy::zero(1))?;
            scenario(
                sim_system(),
                spec,
                Some(strategy),
                sim_pi,
                [0.5, -0.1],
                0.001,
                15.0,
                sim_chatter,
            )
        }
        "sim-transformed" => {
            let cbf = rotated_about_center(ellipse([0.0, 0.0]), std::f64::consts::FRAC_PI_6);
            let spec = SafeSetSpec::Single(cbf);
            scenario(
                sim_system(),
                spec.clone(),
                Some(FilterStrategy::standard(spec, gamma)),
                sim_pi,
                [0.5, -0.1],
                0.001,
                15.0,
                sim_chatter,
            )
        }
        "sim-affine" => {
            let set = CbfSet::inscribed_in_ellipse(&ellipse([0.0, 0.0]), &polytope_angles(7, 0.2))?;
            let spec = SafeSetSpec::Polytope(set);
            scenario(
                sim_system(),
                spec.clone(),
                Some(FilterStrategy::standard(spec, gamma)),
                sim_pi,
                [0.5, -0.1],
                0.001,
                15.0,
                sim_chatter,
            )
        }
        "real-standard" => {
            let spec = SafeSetSpec::Single(Cbf::Quadratic(ellipse([1.125, 0.0])));
            scenario(
                real_system(),
                spec.clone(),
                Some(FilterStrategy::standard(spec, gamma)),
                real_pi,
                [1.25, 0.0],
                0.167,
                30.0,
                real_chatter,
            )
        }
        "real-penalty" => {
            let spec = SafeSetSpec::Single(Cbf::Quadratic(ellipse([1.125, 0.0])));
            let strategy = FilterStrategy::penalty(spec.clone(), gamma, 75.0, 1e-8, Policy::zero(1))?;
            scenario(
                real_system(),
                spec,
                Some(strategy),
                real_pi,
                [1.25, 0.0],
                0.167,
                30.0,
                real_chatter,
            )
        }
        "real-transformed" => {
            let cbf = rotated_about_center(ellipse([1.125, 0.0]), std::f64::consts::FRAC_PI_6);
            let spec = SafeSetSpec::Single(cbf);
            scenario(
                real_system(),
                spec.clone(),
                Some(FilterStrategy::standard(spec, gamma)),
                real_pi,
                [1.25, 0.0],
                0.167,
                30.0,
                real_chatter,
            )
        }
        "real-affine" => {
            let set = CbfSet::inscribed_in_ellipse(&ellipse([1.125, 0.0]), &polytope_angles(5, 0.4))?;
            let spec = SafeSetSpec::Polytope(set);
            scenario(
                real_system(),
                spec.clone(),
                Some(FilterStrategy::standard(spec, gamma)),
                real_pi,
                [1.25, 0.0],
                0.167,
                30.0,
                real_chatter,
            )
        }
        other => {
            return Err(Error::UnknownPreset {
                name: other.to_string(),
                valid: PRESET_NAMES.join(", "),
            })
        }
    };
    Ok(scn)
}
