//! Per-step safety-filter optimization.
//!
//! The standard filter solves `argmin ½‖u − π(x)‖²` subject to one barrier
//! constraint `L_g hᵢ(x)·u ≥ −γ(hᵢ(x)) − L_f hᵢ(x)` per member of the safe-set
//! specification. The penalty variant augments the objective with
//! `r/(2w²)·‖u − π_safe(x)‖²` where `w = ‖L_g L_f^{s−1} h(x)‖`, and hands
//! control to the backup policy outright when `w ≤ ε`.
//!
//! A constraint whose input coefficient row is exactly zero imposes nothing
//! when its bound is already met: it is dropped and the filter passes the
//! proposed input through unchanged. This is the inactivity failure mode of
//! sampled implementations, reproduced deliberately rather than patched over.

use nalgebra::DMatrix;

use crate::cbf::{ClassKappaE, SafeSetSpec};
use crate::dynamics::ControlAffine;
use crate::lie::{lie_from_grad, HocbfChain, LieData};
use crate::{Error, InputVec, Result, StateVec};

/// Constraints are binding when `|a·u − b|` falls below this absolute slack.
const ACTIVE_TOL: f64 = 1e-9;

/// A proposed or backup control policy.
#[derive(Clone, Debug, PartialEq)]
pub enum Policy {
    /// Always returns the zero input of the given dimension.
    Zero { dim: usize },
    /// Always returns a fixed input.
    Constant { value: InputVec },
}

impl Policy {
    pub fn zero(dim: usize) -> Self {
        Policy::Zero { dim }
    }

    pub fn constant(value: InputVec) -> Self {
        Policy::Constant { value }
    }

    pub fn dim(&self) -> usize {
        match self {
            Policy::Zero { dim } => *dim,
            Policy::Constant { value } => value.len(),
        }
    }

    pub fn eval(&self, _x: &StateVec) -> InputVec {
        match self {
            Policy::Zero { dim } => InputVec::zeros(*dim),
            Policy::Constant { value } => value.clone(),
        }
    }
}

/// Projection problem: minimize `½‖u − u_ref‖²` over `{u : aᵢ·u ≥ bᵢ}`,
/// optionally intersected with box bounds on `u`.
#[derive(Clone, Debug)]
pub struct QpInstance {
    pub u_ref: InputVec,
    /// Half-space constraints `a·u ≥ b`.
    pub constraints: Vec<(InputVec, f64)>,
    /// Optional `(lower, upper)` input box. Disabled by default: the filter
    /// optimizes over all of Rᵐ and never silently clips.
    pub bounds: Option<(InputVec, InputVec)>,
}

impl QpInstance {
    pub fn new(u_ref: InputVec, constraints: Vec<(InputVec, f64)>) -> Self {
        Self {
            u_ref,
            constraints,
            bounds: None,
        }
    }
}

/// Solver output: the minimizer plus the indices of binding constraints.
#[derive(Clone, Debug)]
pub struct QpSolution {
    pub u: InputVec,
    /// Constraint indices satisfying `|a·u − b| ≤ 1e-9` at the optimum.
    pub active: Vec<usize>,
}

/// Minimizer of `½‖u − u_ref‖²` over the feasible set.
pub fn solve_qp(inst: &QpInstance) -> Result<InputVec> {
    solve_qp_detailed(inst).map(|s| s.u)
}

/// As [`solve_qp`], also reporting which constraints bind at the optimum.
///
/// Single-input problems use an exact interval-intersection path; larger ones
/// use a dense active-set iteration with a complementary-slackness check.
pub fn solve_qp_detailed(inst: &QpInstance) -> Result<QpSolution> {
    let m = inst.u_ref.len();
    if !inst.u_ref.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter("u_ref must be finite".into()));
    }
    for (i, (a, b)) in inst.constraints.iter().enumerate() {
        if a.len() != m {
            return Err(Error::InvalidParameter(format!(
                "constraint {i} has dimension {}, expected {m}",
                a.len()
            )));
        }
        if !(a.iter().all(|v| v.is_finite()) && b.is_finite()) {
            return Err(Error::InvalidParameter(format!("constraint {i} has non-finite coefficients")));
        }
    }
    if m == 1 {
        solve_scalar(inst)
    } else {
        solve_active_set(inst)
    }
}

fn solve_scalar(inst: &QpInstance) -> Result<QpSolution> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (i, (a, b)) in inst.constraints.iter().enumerate() {
        let a = a[0];
        if a == 0.0 {
            if *b > 0.0 {
                // 0·u ≥ b with b > 0 can never hold.
                return Err(Error::Infeasible { index: i, violation: *b });
            }
            continue; // trivially satisfied for every input: dropped
        }
        let bound = b / a;
        if a > 0.0 {
            lo = lo.max(bound);
        } else {
            hi = hi.min(bound);
        }
    }
    if let Some((bl, bu)) = &inst.bounds {
        lo = lo.max(bl[0]);
        hi = hi.min(bu[0]);
    }
    if lo > hi {
        // Empty interval: certify with the constraint most violated at the
        // nearest attainable point.
        let (index, violation) = most_violated(inst, hi.min(lo));
        return Err(Error::Infeasible { index, violation });
    }
    let u = inst.u_ref[0].clamp(lo, hi);
    let uvec = InputVec::from_vec(vec![u]);
    let active = inst
        .constraints
        .iter()
        .enumerate()
        .filter(|(_, (a, b))| a[0] != 0.0 && (a[0] * u - b).abs() <= ACTIVE_TOL)
        .map(|(i, _)| i)
        .collect();
    Ok(QpSolution { u: uvec, active })
}

fn most_violated(inst: &QpInstance, u: f64) -> (usize, f64) {
    let mut worst = (0, 0.0);
    for (i, (a, b)) in inst.constraints.iter().enumerate() {
        let viol = b - a[0] * u;
        if viol > worst.1 {
            worst = (i, viol);
        }
    }
    worst
}

/// Primal active-set projection for m ≥ 2. Constraints enter the working set
/// most-violated-first (index as tiebreak) and leave on a negative multiplier.
fn solve_active_set(inst: &QpInstance) -> Result<QpSolution> {
    let m = inst.u_ref.len();
    // Box bounds become ordinary half-space rows.
    let mut rows: Vec<(InputVec, f64)> = inst.constraints.clone();
    let n_user = rows.len();
    if let Some((bl, bu)) = &inst.bounds {
        for j in 0..m {
            let mut e = InputVec::zeros(m);
            e[j] = 1.0;
            rows.push((e.clone(), bl[j]));
            rows.push((-e, -bu[j]));
        }
    }
    for (i, (a, b)) in rows.iter().enumerate() {
        if a.norm() == 0.0 && *b > 0.0 {
            return Err(Error::Infeasible { index: i, violation: *b });
        }
    }

    let mut working: Vec<usize> = Vec::new();
    let mut u = inst.u_ref.clone();
    for _ in 0..(50 * (rows.len() + 1)) {
        // Solve the equality-constrained projection on the working set:
        // u = u_ref + A_Wᵀ λ with (A_W A_Wᵀ) λ = b_W − A_W u_ref.
        let lambda = if working.is_empty() {
            Vec::new()
        } else {
            let k = working.len();
            let aw = DMatrix::from_fn(k, m, |r, c| rows[working[r]].0[c]);
            let rhs = nalgebra::DVector::from_fn(k, |r, _| {
                rows[working[r]].1 - rows[working[r]].0.dot(&inst.u_ref)
            });
            let gram = &aw * aw.transpose();
            let sol = gram
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|_| Error::InvalidParameter("degenerate working set".into()))?;
            u = inst.u_ref.clone();
            for (r, &idx) in working.iter().enumerate() {
                u += &rows[idx].0 * sol[r];
            }
            sol.iter().copied().collect::<Vec<_>>()
        };
        if working.is_empty() {
            u = inst.u_ref.clone();
        }

        // Drop the most negative multiplier, if any.
        if let Some((pos, _)) = lambda
            .iter()
            .enumerate()
            .filter(|(_, l)| **l < -1e-12)
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        {
            working.remove(pos);
            continue;
        }

        // Add the most violated constraint, if any.
        let mut worst: Option<(usize, f64)> = None;
        for (i, (a, b)) in rows.iter().enumerate() {
            if working.contains(&i) || a.norm() == 0.0 {
                continue;
            }
            let viol = b - a.dot(&u);
            if viol > 1e-12 && worst.is_none_or(|(_, w)| viol > w) {
                worst = Some((i, viol));
            }
        }
        match worst {
            Some((i, _)) => working.push(i),
            None => {
                let active = working
                    .iter()
                    .copied()
                    .filter(|&i| i < n_user)
                    .collect::<Vec<_>>();
                return Ok(QpSolution { u, active });
            }
        }
    }
    let worst = rows
        .iter()
        .enumerate()
        .map(|(i, (a, b))| (i, b - a.dot(&u)))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap_or((0, 0.0));
    Err(Error::Infeasible {
        index: worst.0,
        violation: worst.1,
    })
}

/// Exhaustive scan of a scalar objective over feasible grid points.
///
/// A deliberately naive verification oracle for single-input problems: it
/// shares no code with [`solve_qp`]. Returns the best feasible grid point
/// (first hit on ties) or the infeasibility certificate if no grid point
/// satisfies every constraint.
pub fn grid_oracle<F>(
    objective: F,
    constraints: &[(f64, f64)],
    range: (f64, f64),
    step: f64,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    assert!(step > 0.0, "grid step must be positive");
    let n = ((range.1 - range.0) / step).round() as usize;
    let mut best: Option<(f64, f64)> = None;
    for k in 0..=n {
        let u = range.0 + step * k as f64;
        if constraints.iter().all(|(a, b)| a * u >= *b) {
            let j = objective(u);
            if best.is_none_or(|(_, bj)| j < bj) {
                best = Some((u, j));
            }
        }
    }
    match best {
        Some((u, _)) => Ok(u),
        None => {
            let mid = (range.0 + range.1) / 2.0;
            let (index, violation) = constraints
                .iter()
                .enumerate()
                .map(|(i, (a, b))| (i, b - a * mid))
                .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap_or((0, 0.0));
            Err(Error::Infeasible { index, violation })
        }
    }
}

/// [`grid_oracle`] specialized to the projection objective of a [`QpInstance`].
pub fn grid_oracle_qp(inst: &QpInstance, range: (f64, f64), step: f64) -> Result<InputVec> {
    assert_eq!(inst.u_ref.len(), 1, "grid oracle handles single-input problems");
    let u_ref = inst.u_ref[0];
    let constraints: Vec<(f64, f64)> = inst.constraints.iter().map(|(a, b)| (a[0], *b)).collect();
    let mut range = range;
    if let Some((bl, bu)) = &inst.bounds {
        range = (range.0.max(bl[0]), range.1.min(bu[0]));
    }
    grid_oracle(|u| 0.5 * (u - u_ref) * (u - u_ref), &constraints, range, step)
        .map(|u| InputVec::from_vec(vec![u]))
}

/// Which optimization the filter solves each step.
#[derive(Clone, Debug, PartialEq)]
pub enum FilterKind {
    /// Plain projection of the proposed input onto the barrier constraints.
    Standard,
    /// Weighted objective that tracks the backup policy as `‖L_g h‖ → 0` and
    /// switches to it outright when `‖L_g h‖ ≤ eps`.
    Penalty { r: f64, eps: f64, pi_safe: Policy },
}

/// Full per-step filter specification: objective, safe set, class-K shaping,
/// and an optional higher-order chain for misspecified relative degree.
///
/// When a chain is present it supplies both the constraint and the class-K
/// shaping through its own gains; `gamma` is only used for the first-order
/// member constraints.
#[derive(Clone, Debug)]
pub struct FilterStrategy {
    pub kind: FilterKind,
    pub cbf_source: SafeSetSpec,
    pub gamma: ClassKappaE,
    pub hocbf: Option<HocbfChain>,
}

impl FilterStrategy {
    pub fn standard(cbf_source: SafeSetSpec, gamma: ClassKappaE) -> Self {
        Self {
            kind: FilterKind::Standard,
            cbf_source,
            gamma,
            hocbf: None,
        }
    }

    pub fn penalty(
        cbf_source: SafeSetSpec,
        gamma: ClassKappaE,
        r: f64,
        eps: f64,
        pi_safe: Policy,
    ) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!("penalty weight r must be positive, got {r}")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("penalty eps must be positive, got {eps}")));
        }
        Ok(Self {
            kind: FilterKind::Penalty { r, eps, pi_safe },
            cbf_source,
            gamma,
            hocbf: None,
        })
    }
}

/// Outcome of one filter evaluation.
#[derive(Clone, Debug)]
pub struct FilterDecision {
    pub u_out: InputVec,
    /// Some barrier constraint binds at the optimum.
    pub active: bool,
    /// The penalty eps-switch fired and the backup policy was applied.
    pub fallback_engaged: bool,
    /// Lie data of the weakest constraint direction (diagnostics).
    pub lie: LieData,
    /// Objective value at `u_out`; the penalty term is included when defined.
    pub objective_value: f64,
}

/// Builds the per-member constraints `L_g hᵢ·u ≥ −γ(hᵢ) − L_f hᵢ` and the
/// diagnostic Lie data (weakest member, lowest index on ties).
fn barrier_constraints(
    sys: &dyn ControlAffine,
    strategy: &FilterStrategy,
    x: &StateVec,
) -> (Vec<(InputVec, f64)>, LieData) {
    if let Some(chain) = &strategy.hocbf {
        let (coeff, bound) = chain.constraint(x);
        let lie = LieData {
            lf_h: chain.cbf().p().dot(&sys.drift(x)),
            lg_norm: coeff.norm(),
            lg_h: coeff.clone(),
        };
        return (vec![(coeff, bound)], lie);
    }
    let spec = &strategy.cbf_source;
    let mut constraints = Vec::with_capacity(spec.member_count());
    let mut weakest: Option<LieData> = None;
    for i in 0..spec.member_count() {
        let lie = lie_from_grad(sys, &spec.member_grad(i, x), x);
        let h = spec.member_h(i, x);
        constraints.push((lie.lg_h.clone(), -strategy.gamma.eval(h) - lie.lf_h));
        if weakest.as_ref().is_none_or(|w| lie.lg_norm < w.lg_norm) {
            weakest = Some(lie);
        }
    }
    (constraints, weakest.expect("spec has at least one member"))
}

/// Standard CBF-QP filter step (projection of the proposed input).
///
/// Where `‖L_g h(x)‖ = 0` and the bound is already met, the constraint is
/// dropped and the proposed input passes through with `active = false`.
/// Where the bound cannot be met by any input the QP is infeasible, which
/// signals an invalid barrier at `x`.
pub fn filter_standard(
    sys: &dyn ControlAffine,
    strategy: &FilterStrategy,
    pi: &Policy,
    x: &StateVec,
) -> Result<FilterDecision> {
    let (constraints, lie) = barrier_constraints(sys, strategy, x);
    let u_ref = pi.eval(x);
    let sol = solve_qp_detailed(&QpInstance::new(u_ref.clone(), constraints))?;
    let objective_value = 0.5 * (&sol.u - &u_ref).norm_squared();
    Ok(FilterDecision {
        u_out: sol.u,
        active: !sol.active.is_empty(),
        fallback_engaged: false,
        lie,
        objective_value,
    })
}

/// Penalty-augmented filter step.
///
/// With `w = ‖L_g L_f^{s−1} h(x)‖`: if `w ≤ eps` the backup policy is applied
/// directly. Otherwise the quadratic objective
/// `½‖u − π(x)‖² + r/(2w²)·‖u − π_safe(x)‖²` has the unconstrained minimizer
/// `ū = (π(x) + λ·π_safe(x))/(1 + λ)` with `λ = r/w²`, and because its Hessian
/// is the scalar `(1 + λ)·I` the constrained solution is the plain projection
/// of `ū` onto the barrier constraints.
pub fn filter_penalty(
    sys: &dyn ControlAffine,
    strategy: &FilterStrategy,
    pi: &Policy,
    x: &StateVec,
) -> Result<FilterDecision> {
    let FilterKind::Penalty { r, eps, pi_safe } = &strategy.kind else {
        return Err(Error::InvalidParameter(
            "filter_penalty requires a Penalty strategy".into(),
        ));
    };
    let (constraints, lie) = barrier_constraints(sys, strategy, x);
    let w = lie.lg_norm;
    let u_prop = pi.eval(x);
    if w <= *eps {
        let u_out = pi_safe.eval(x);
        let objective_value = 0.5 * (&u_out - &u_prop).norm_squared();
        return Ok(FilterDecision {
            u_out,
            active: false,
            fallback_engaged: true,
            lie,
            objective_value,
        });
    }
    let lambda = r / (w * w);
    let u_safe = pi_safe.eval(x);
    let u_bar = (&u_prop + &u_safe * lambda) / (1.0 + lambda);
    let sol = solve_qp_detailed(&QpInstance::new(u_bar, constraints))?;
    let objective_value = 0.5 * (&sol.u - &u_prop).norm_squared()
        + lambda / 2.0 * (&sol.u - &u_safe).norm_squared();
    Ok(FilterDecision {
        u_out: sol.u,
        active: !sol.active.is_empty(),
        fallback_engaged: false,
        lie,
        objective_value,
    })
}

/// Dispatches on the strategy kind.
pub fn filter_step(
    sys: &dyn ControlAffine,
    strategy: &FilterStrategy,
    pi: &Policy,
    x: &StateVec,
) -> Result<FilterDecision> {
    match &strategy.kind {
        FilterKind::Standard => filter_standard(sys, strategy, pi, x),
        FilterKind::Penalty { .. } => filter_penalty(sys, strategy, pi, x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbf::{Cbf, QuadraticCbf};
    use crate::dynamics::LtiSystem;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn sim_system() -> LtiSystem {
        LtiSystem::from_rows(&[&[0.0, 1.0], &[-0.09, 0.10]], &[&[0.0], &[18.09]]).unwrap()
    }

    fn sim_spec() -> SafeSetSpec {
        SafeSetSpec::Single(Cbf::Quadratic(
            QuadraticCbf::new(
                1.0,
                StateVec::zeros(2),
                DMatrix::from_row_slice(2, 2, &[1.31, 0.0, 0.0, 4.00]),
            )
            .unwrap(),
        ))
    }

    fn single(a: f64, b: f64) -> (InputVec, f64) {
        (InputVec::from_vec(vec![a]), b)
    }

    #[test]
    fn qp_feasible_reference_passes_through() {
        let inst = QpInstance::new(InputVec::from_vec(vec![0.2]), vec![single(1.0, -1.0)]);
        let sol = solve_qp_detailed(&inst).unwrap();
        assert_eq!(sol.u[0], 0.2);
        assert!(sol.active.is_empty());
    }

    #[test]
    fn qp_projects_onto_single_constraint() {
        // The scenario constraint at x₀: 14.472·u ≥ −0.7195 with u_ref = −0.1.
        let inst = QpInstance::new(InputVec::from_vec(vec![-0.1]), vec![single(14.472, -0.7195)]);
        let sol = solve_qp_detailed(&inst).unwrap();
        assert_relative_eq!(sol.u[0], -0.0497167, max_relative = 1e-5);
        assert_eq!(sol.active, vec![0]);
        assert!((14.472 * sol.u[0] - (-0.7195)).abs() <= 1e-8);

        // Independent verification by exhaustive scan.
        let oracle = grid_oracle_qp(&inst, (-5.0, 5.0), 1e-5).unwrap();
        assert!((sol.u[0] - oracle[0]).abs() <= 1e-5);
    }

    #[test]
    fn qp_empty_interval_is_infeasible() {
        // {u ≥ 1} ∩ {−u ≥ 0} is empty.
        let inst = QpInstance::new(
            InputVec::from_vec(vec![0.0]),
            vec![single(1.0, 1.0), single(-1.0, 0.0)],
        );
        assert!(matches!(solve_qp(&inst), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn qp_zero_row_semantics() {
        // 0·u ≥ −1 is vacuous; 0·u ≥ 1 is infeasible.
        let ok = QpInstance::new(InputVec::from_vec(vec![0.3]), vec![single(0.0, -1.0)]);
        assert_eq!(solve_qp(&ok).unwrap()[0], 0.3);
        let bad = QpInstance::new(InputVec::from_vec(vec![0.3]), vec![single(0.0, 1.0)]);
        assert!(matches!(
            solve_qp(&bad),
            Err(Error::Infeasible { index: 0, violation }) if violation == 1.0
        ));
    }

    #[test]
    fn qp_respects_box_bounds() {
        let mut inst = QpInstance::new(InputVec::from_vec(vec![5.0]), vec![]);
        inst.bounds = Some((InputVec::from_vec(vec![-1.0]), InputVec::from_vec(vec![1.0])));
        assert_eq!(solve_qp(&inst).unwrap()[0], 1.0);
    }

    #[test]
    fn qp_active_set_two_dimensional() {
        // Project (0, 0) onto {u₁ ≥ 1} ∩ {u₂ ≥ 2}.
        let inst = QpInstance::new(
            InputVec::zeros(2),
            vec![
                (InputVec::from_vec(vec![1.0, 0.0]), 1.0),
                (InputVec::from_vec(vec![0.0, 1.0]), 2.0),
            ],
        );
        let sol = solve_qp_detailed(&inst).unwrap();
        assert_relative_eq!(sol.u[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(sol.u[1], 2.0, max_relative = 1e-12);
        assert_eq!(sol.active.len(), 2);

        // A constraint that does not bind must be left out of the active set.
        let inst = QpInstance::new(
            InputVec::from_vec(vec![3.0, 0.0]),
            vec![
                (InputVec::from_vec(vec![1.0, 0.0]), 1.0),
                (InputVec::from_vec(vec![0.0, 1.0]), -5.0),
            ],
        );
        let sol = solve_qp_detailed(&inst).unwrap();
        assert_eq!(sol.u, InputVec::from_vec(vec![3.0, 0.0]));
        assert!(sol.active.is_empty());
    }

    #[test]
    fn standard_filter_at_case_study_start() {
        let sys = sim_system();
        let strategy = FilterStrategy::standard(sim_spec(), ClassKappaE::Identity);
        let pi = Policy::constant(InputVec::from_vec(vec![-0.1]));
        let x = StateVec::from_vec(vec![0.5, -0.1]);
        let d = filter_standard(&sys, &strategy, &pi, &x).unwrap();
        assert_relative_eq!(d.u_out[0], -0.0497167, max_relative = 1e-4);
        assert!(d.active);
        assert!(!d.fallback_engaged);
        assert_relative_eq!(d.lie.lg_norm, 14.472, max_relative = 1e-12);
    }

    #[test]
    fn standard_filter_inactive_on_singular_line() {
        // On {x₂ = 0} inside the safe set the constraint is 0·u ≥ −h ≤ 0:
        // dropped, and the uncertified input goes straight through.
        let sys = sim_system();
        let strategy = FilterStrategy::standard(sim_spec(), ClassKappaE::Identity);
        let pi = Policy::constant(InputVec::from_vec(vec![-0.1]));
        let x = StateVec::from_vec(vec![0.5, 0.0]);
        let d = filter_standard(&sys, &strategy, &pi, &x).unwrap();
        assert_eq!(d.u_out[0], -0.1);
        assert!(!d.active);
    }

    #[test]
    fn standard_filter_infeasible_outside_on_singular_line() {
        // x = [1, 0] is outside C with L_g h = 0 and L_f h = 0 < −γ(h):
        // the condition 0·u ≥ 0.31 cannot be met.
        let sys = sim_system();
        let strategy = FilterStrategy::standard(sim_spec(), ClassKappaE::Identity);
        let pi = Policy::constant(InputVec::from_vec(vec![-0.1]));
        let x = StateVec::from_vec(vec![1.0, 0.0]);
        assert!(matches!(
            filter_standard(&sys, &strategy, &pi, &x),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn penalty_filter_switches_to_backup() {
        let sys = sim_system();
        let strategy = FilterStrategy::penalty(
            sim_spec(),
            ClassKappaE::Identity,
            1.0,
            1e-8,
            Policy::zero(1),
        )
        .unwrap();
        let pi = Policy::constant(InputVec::from_vec(vec![-0.1]));
        // On the singular line w = 0 ≤ eps: the backup policy is applied.
        let x = StateVec::from_vec(vec![0.5, 0.0]);
        let d = filter_penalty(&sys, &strategy, &pi, &x).unwrap();
        assert_eq!(d.u_out[0], 0.0);
        assert!(d.fallback_engaged);
        assert!(!d.active);
    }

    #[test]
    fn penalty_filter_weighted_target_at_case_study_start() {
        let sys = sim_system();
        let strategy = FilterStrategy::penalty(
            sim_spec(),
            ClassKappaE::Identity,
            1.0,
            1e-8,
            Policy::zero(1),
        )
        .unwrap();
        let pi = Policy::constant(InputVec::from_vec(vec![-0.1]));
        let x = StateVec::from_vec(vec![0.5, -0.1]);
        let d = filter_penalty(&sys, &strategy, &pi, &x).unwrap();
        // λ = 1/14.472² = 0.0047748 pulls the target to ū = −0.0995248, and the
        // binding constraint then lands on the same boundary point as the
        // standard filter.
        assert!(d.active);
        assert_relative_eq!(d.u_out[0], -0.0497167, max_relative = 1e-4);

        // Unconstrained case: the weighted target itself.
        let strategy_far = FilterStrategy::penalty(
            sim_spec(),
            ClassKappaE::Identity,
            1.0,
            1e-8,
            Policy::zero(1),
        )
        .unwrap();
        let x_far = StateVec::from_vec(vec![0.0, -0.1]);
        let d = filter_penalty(&sys, &strategy_far, &pi, &x_far).unwrap();
        if !d.active {
            let w = d.lie.lg_norm;
            let lambda = 1.0 / (w * w);
            assert_relative_eq!(d.u_out[0], -0.1 / (1.0 + lambda), max_relative = 1e-12);
        }
    }

    #[test]
    fn penalty_with_tiny_r_matches_standard() {
        let sys = sim_system();
        let pi = Policy::constant(InputVec::from_vec(vec![-0.1]));
        let x = StateVec::from_vec(vec![0.5, -0.1]);
        let standard = FilterStrategy::standard(sim_spec(), ClassKappaE::Identity);
        let penalty = FilterStrategy::penalty(
            sim_spec(),
            ClassKappaE::Identity,
            1e-30,
            1e-8,
            Policy::zero(1),
        )
        .unwrap();
        let ds = filter_standard(&sys, &standard, &pi, &x).unwrap();
        let dp = filter_penalty(&sys, &penalty, &pi, &x).unwrap();
        assert!((ds.u_out[0] - dp.u_out[0]).abs() <= 1e-12);
    }

    #[test]
    fn penalty_target_approaches_backup_monotonically() {
        // ‖ū − π_safe‖ = ‖π − π_safe‖/(1+λ) must not increase as w decreases.
        let pi = 1.5;
        let pi_safe = -0.5;
        let r = 1.0;
        let mut prev = f64::INFINITY;
        for k in 0..60 {
            let w = 10.0 * 0.7f64.powi(k);
            let lambda = r / (w * w);
            let u_bar = (pi + lambda * pi_safe) / (1.0 + lambda);
            let dist = (u_bar - pi_safe).abs();
            assert!(dist <= prev + 1e-15);
            prev = dist;
        }
    }

    #[test]
    fn penalty_rejects_bad_parameters() {
        assert!(FilterStrategy::penalty(sim_spec(), ClassKappaE::Identity, 0.0, 1e-8, Policy::zero(1)).is_err());
        assert!(FilterStrategy::penalty(sim_spec(), ClassKappaE::Identity, 1.0, 0.0, Policy::zero(1)).is_err());
    }

    #[test]
    fn hocbf_chain_supplies_the_constraint() {
        // A second-order chain on the double integrator: the filter constrains
        // through ḣ₁ ≥ −k₂h₁ and its authority weight is |p₁ᵀB|, constant.
        let sys = LtiSystem::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]], &[&[0.0], &[30.30]]).unwrap();
        let cbf = crate::cbf::AffineCbf::new(StateVec::from_vec(vec![1.0, 0.0]), 0.0).unwrap();
        let chain = crate::lie::HocbfChain::new(sys.clone(), cbf.clone(), vec![1.0, 1.0], 1e-9).unwrap();
        let mut strategy = FilterStrategy::penalty(
            SafeSetSpec::Single(crate::cbf::Cbf::Affine(cbf)),
            ClassKappaE::Identity,
            1.0,
            1e-8,
            Policy::zero(1),
        )
        .unwrap();
        strategy.hocbf = Some(chain);
        let pi = Policy::constant(InputVec::from_vec(vec![-2.0]));
        let x = StateVec::from_vec(vec![1.25, 0.0]);
        let d = filter_penalty(&sys, &strategy, &pi, &x).unwrap();
        assert_relative_eq!(d.lie.lg_norm, 30.30, max_relative = 1e-12);
        assert!(!d.fallback_engaged);
        // Constraint 30.30·u ≥ −1.25 binds against the aggressive proposal.
        assert!(d.active);
        assert_relative_eq!(d.u_out[0], -1.25 / 30.30, max_relative = 1e-6);
    }

    #[test]
    fn polytope_filtering_never_reports_a_singular_direction() {
        // With every |pᵢᵀB| > 0 the weakest-member norm is a positive constant:
        // the singular set of the polytope barrier is empty.
        let sys = sim_system();
        let quad = QuadraticCbf::new(
            1.0,
            StateVec::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.31, 0.0, 0.0, 4.00]),
        )
        .unwrap();
        let angles: Vec<f64> = (0..7)
            .map(|k| 0.2 + 2.0 * std::f64::consts::PI * k as f64 / 7.0)
            .collect();
        let set = crate::cbf::CbfSet::inscribed_in_ellipse(&quad, &angles).unwrap();
        let expected: f64 = set
            .members()
            .iter()
            .map(|m| (m.p().dot(&sys.b().column(0).into_owned())).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(expected > 1e-3);
        let strategy = FilterStrategy::standard(SafeSetSpec::Polytope(set), ClassKappaE::Identity);
        let pi = Policy::constant(InputVec::from_vec(vec![-0.1]));
        for x in [
            StateVec::from_vec(vec![0.0, 0.0]),
            StateVec::from_vec(vec![0.5, -0.1]),
            StateVec::from_vec(vec![-0.7, 0.0]),
        ] {
            let d = filter_standard(&sys, &strategy, &pi, &x).unwrap();
            assert_relative_eq!(d.lie.lg_norm, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn grid_oracle_trivial_cases() {
        // Feasible reference: nearest grid point to u_ref.
        let inst = QpInstance::new(InputVec::from_vec(vec![0.33333]), vec![single(1.0, -10.0)]);
        let u = grid_oracle_qp(&inst, (-1.0, 1.0), 1e-4).unwrap();
        assert!((u[0] - 0.33333).abs() <= 1e-4);
        // Empty feasible set.
        let inst = QpInstance::new(
            InputVec::from_vec(vec![0.0]),
            vec![single(1.0, 1.0), single(-1.0, 0.0)],
        );
        assert!(grid_oracle_qp(&inst, (-1.0, 1.0), 1e-3).is_err());
    }
}
