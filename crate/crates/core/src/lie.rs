//! Lie derivatives, relative-degree diagnostics, and higher-order CBF chains.
//!
//! The barrier condition `ḣ(x, u) = L_f h(x) + L_g h(x)·u ≥ −γ(h(x))` only
//! constrains the input where `L_g h(x) ≠ 0`. This module computes those
//! derivatives, locates the singular set `{x : ‖L_g h(x)‖ ≤ ε}` where the
//! relative degree exceeds one and the filter goes inactive, and builds the
//! order-s constraint for affine barriers on LTI systems.

use serde::Serialize;

use crate::cbf::{AffineCbf, Cbf, SafeSetSpec};
use crate::dynamics::{AdmissibleBox, ControlAffine, LtiSystem};
use crate::{Error, InputVec, Result, StateVec};

/// Lie derivatives of a barrier at one state: `ḣ(x, u) = lf_h + lg_h·u`.
#[derive(Clone, Debug, PartialEq)]
pub struct LieData {
    /// `L_f h(x) = ∇h(x)·f(x)`.
    pub lf_h: f64,
    /// `L_g h(x) = g(x)ᵀ∇h(x)`, one entry per input channel.
    pub lg_h: InputVec,
    /// Euclidean norm of `lg_h`.
    pub lg_norm: f64,
}

/// Lie data from a precomputed gradient.
pub fn lie_from_grad(sys: &dyn ControlAffine, grad: &StateVec, x: &StateVec) -> LieData {
    let lf_h = grad.dot(&sys.drift(x));
    let lg_h = sys.input_matrix(x).transpose() * grad;
    let lg_norm = lg_h.norm();
    LieData { lf_h, lg_h, lg_norm }
}

/// Lie derivatives of a barrier along the dynamics.
pub fn lie_derivatives(sys: &dyn ControlAffine, cbf: &Cbf, x: &StateVec) -> LieData {
    lie_from_grad(sys, &cbf.h_grad(x), x)
}

/// Lie data for every member of a safe-set specification, in member order.
pub fn spec_lie_all(sys: &dyn ControlAffine, spec: &SafeSetSpec, x: &StateVec) -> Vec<LieData> {
    (0..spec.member_count())
        .map(|i| lie_from_grad(sys, &spec.member_grad(i, x), x))
        .collect()
}

/// The member with the smallest `‖L_g h‖` (the one closest to losing input
/// authority), ties broken by lowest index.
pub fn spec_min_lie(sys: &dyn ControlAffine, spec: &SafeSetSpec, x: &StateVec) -> LieData {
    let mut best: Option<LieData> = None;
    for lie in spec_lie_all(sys, spec, x) {
        let replace = best.as_ref().is_none_or(|b| lie.lg_norm < b.lg_norm);
        if replace {
            best = Some(lie);
        }
    }
    best.expect("safe-set spec has at least one member")
}

/// Relative-degree diagnosis: the order `s` (when determined) and the sampled
/// states where `‖L_g h(x)‖ ≤ eps`.
#[derive(Clone, Debug, Serialize)]
pub struct RelativeDegreeReport {
    /// Smallest `i` with `L_g L_f^{i−1} h ≠ 0`; `None` if no order up to n works.
    pub s: Option<usize>,
    /// Sampled states with `‖L_g h(x)‖ ≤ eps`, in grid order.
    pub singular_points: Vec<Vec<f64>>,
    pub eps: f64,
}

/// Global relative degree of an affine barrier on an LTI system.
///
/// For `h = pᵀx + b` on `ẋ = Ax + Bu`, `L_g L_f^{i−1} h = pᵀA^{i−1}B` is
/// state-independent; the relative degree is the smallest `i ∈ {1..n}` with
/// `‖pᵀA^{i−1}B‖ > tol`, and undetermined if none qualifies.
pub fn global_relative_degree_affine_lti(
    sys: &LtiSystem,
    cbf: &AffineCbf,
    tol: f64,
) -> Result<RelativeDegreeReport> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let n = sys.state_dim();
    let mut row = cbf.p().clone();
    let mut s = None;
    for i in 1..=n {
        let coeff = sys.b().transpose() * &row;
        if coeff.norm() > tol {
            s = Some(i);
            break;
        }
        row = sys.a().transpose() * row;
    }
    Ok(RelativeDegreeReport {
        s,
        singular_points: Vec::new(),
        eps: tol,
    })
}

/// Grid scan for the singular set `{x : ‖L_g h(x)‖ ≤ eps}` over a box. For a
/// polytope the minimum member norm is used, so a point is reported only when
/// every retained direction loses authority together with the weakest member.
pub fn singular_set_scan(
    sys: &dyn ControlAffine,
    spec: &SafeSetSpec,
    bounds: &AdmissibleBox,
    grid_per_dim: usize,
    eps: f64,
) -> Result<RelativeDegreeReport> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if grid_per_dim < 2 {
        return Err(Error::InvalidParameter("grid_per_dim must be at least 2".into()));
    }
    let mut singular_points = Vec::new();
    for x in bounds.grid_points(grid_per_dim) {
        let lie = spec_min_lie(sys, spec, &x);
        if lie.lg_norm <= eps {
            singular_points.push(x.iter().copied().collect());
        }
    }
    Ok(RelativeDegreeReport {
        s: None,
        singular_points,
        eps,
    })
}

/// Higher-order CBF chain for an affine barrier on an LTI system.
///
/// With linear class-K gains `kᵢ` the recursion `hᵢ = ḣ_{i−1} + kᵢ·h_{i−1}`
/// stays affine: `h₀ = pᵀx + b`, `pᵢ = Aᵀp_{i−1} + kᵢ·p_{i−1}`,
/// `bᵢ = kᵢ·b_{i−1}`. The chain depth equals the relative degree, at which
/// order the input finally appears in `ḣ_{s−1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HocbfChain {
    system: LtiSystem,
    cbf: AffineCbf,
    gains: Vec<f64>,
    s: usize,
}

impl HocbfChain {
    /// Builds a chain, determining the relative degree with tolerance `tol` and
    /// requiring exactly one positive gain per order.
    pub fn new(system: LtiSystem, cbf: AffineCbf, gains: Vec<f64>, tol: f64) -> Result<Self> {
        let report = global_relative_degree_affine_lti(&system, &cbf, tol)?;
        let s = report.s.ok_or(Error::UndeterminedRelativeDegree)?;
        if gains.len() != s {
            return Err(Error::InvalidParameter(format!(
                "chain depth must equal the relative degree {s}, got {} gains",
                gains.len()
            )));
        }
        if gains.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(Error::InvalidParameter(
                "class-K gains must be positive and finite".into(),
            ));
        }
        Ok(Self { system, cbf, gains, s })
    }

    pub fn relative_degree(&self) -> usize {
        self.s
    }

    pub fn system(&self) -> &LtiSystem {
        &self.system
    }

    pub fn cbf(&self) -> &AffineCbf {
        &self.cbf
    }

    /// Coefficients `(p_{s−1}, b_{s−1})` of the last chain level.
    fn last_level(&self) -> (StateVec, f64) {
        let mut p = self.cbf.p().clone();
        let mut b = self.cbf.b();
        for i in 1..self.s {
            let k = self.gains[i - 1];
            p = self.system.a().transpose() * &p + &p * k;
            b *= k;
        }
        (p, b)
    }

    /// Value of the last chain level `h_{s−1}(x)`.
    pub fn level_value(&self, x: &StateVec) -> f64 {
        let (p, b) = self.last_level();
        p.dot(x) + b
    }

    /// The order-s barrier condition at `x` as `coeff_u·u ≥ lower_bound`.
    ///
    /// `coeff_u = Bᵀp_{s−1}` and the bound collects the drift derivative and
    /// the final class-K term: `lower_bound = −p_{s−1}ᵀAx − k_s·h_{s−1}(x)`.
    /// For s = 1 this is exactly the standard constraint
    /// `L_g h·u ≥ −γ(h) − L_f h` with `γ(v) = k₁·v`.
    pub fn constraint(&self, x: &StateVec) -> (InputVec, f64) {
        let (p, b) = self.last_level();
        let coeff_u = self.system.b().transpose() * &p;
        let drift = p.dot(&(self.system.a() * x));
        let k_s = self.gains[self.s - 1];
        let lower_bound = -drift - k_s * (p.dot(x) + b);
        (coeff_u, lower_bound)
    }
}

/// Free-function form of [`HocbfChain::constraint`].
pub fn hocbf_constraint(chain: &HocbfChain, x: &StateVec) -> (InputVec, f64) {
    chain.constraint(x)
}
