//! Barrier-function candidates: values, gradients, and safe-set modifications.
//!
//! The safe set is the zero-superlevel set `C = {x : h(x) ≥ 0}`. Besides the
//! plain quadratic (ellipsoidal) and affine candidates, this module provides the
//! two set-modification strategies used to keep input authority away from the
//! states the closed loop visits: rotating/translating an existing barrier, and
//! replacing it with an intersection of affine barriers (an inner polytope).

use nalgebra::{Cholesky, DMatrix};
use serde::Serialize;

use crate::dynamics::AdmissibleBox;
use crate::{Error, Result, StateVec};

/// Extended class-K function `γ`: continuous, strictly increasing, `γ(0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum ClassKappaE {
    /// `γ(v) = v`.
    Identity,
    /// `γ(v) = k·v` with `k > 0`.
    LinearGain(f64),
}

impl ClassKappaE {
    pub fn linear(k: f64) -> Result<Self> {
        if k > 0.0 && k.is_finite() {
            Ok(ClassKappaE::LinearGain(k))
        } else {
            Err(Error::InvalidParameter(format!(
                "class-K gain must be positive and finite, got {k}"
            )))
        }
    }

    pub fn eval(&self, v: f64) -> f64 {
        match self {
            ClassKappaE::Identity => v,
            ClassKappaE::LinearGain(k) => k * v,
        }
    }
}

/// Ellipsoidal barrier `h(x) = β − (x−c)ᵀ P (x−c)` with `P ≻ 0`, `β > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticCbf {
    beta: f64,
    center: StateVec,
    p: DMatrix<f64>,
}

impl QuadraticCbf {
    pub fn new(beta: f64, center: StateVec, p: DMatrix<f64>) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidCbf(format!("beta must be positive, got {beta}")));
        }
        if !p.is_square() || p.nrows() != center.len() {
            return Err(Error::InvalidCbf(format!(
                "P must be {n}x{n} to match the center, got {r}x{c}",
                n = center.len(),
                r = p.nrows(),
                c = p.ncols()
            )));
        }
        let asym = (&p - p.transpose()).abs().max();
        if asym.is_nan() || asym > 1e-12 * p.abs().max().max(1.0) {
            return Err(Error::InvalidCbf("P must be symmetric".into()));
        }
        if Cholesky::new(p.clone()).is_none() {
            return Err(Error::InvalidCbf("P must be positive definite".into()));
        }
        Ok(Self { beta, center, p })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn center(&self) -> &StateVec {
        &self.center
    }

    pub fn p_matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn h(&self, x: &StateVec) -> f64 {
        let d = x - &self.center;
        self.beta - d.dot(&(&self.p * &d))
    }

    pub fn grad(&self, x: &StateVec) -> StateVec {
        let d = x - &self.center;
        (&self.p * d) * -2.0
    }

    /// Points on the boundary `{x : h(x) = 0}`, one per angle, for n = 2.
    ///
    /// Uses the Cholesky factor of P to map the unit circle onto the ellipse.
    pub fn boundary_points_2d(&self, angles: &[f64]) -> Result<Vec<StateVec>> {
        if self.center.len() != 2 {
            return Err(Error::UnsupportedDimension(
                "boundary sampling is only implemented for n = 2".into(),
            ));
        }
        let chol = Cholesky::new(self.p.clone())
            .ok_or_else(|| Error::InvalidCbf("P must be positive definite".into()))?;
        let lt = chol.l().transpose();
        let scale = self.beta.sqrt();
        Ok(angles
            .iter()
            .map(|t| {
                let unit = StateVec::from_vec(vec![t.cos(), t.sin()]);
                // Solve Lᵀ y = û so that yᵀ P y = 1, then scale to the β-level set.
                let y = lt.clone().solve_upper_triangular(&unit).expect("L is nonsingular");
                &self.center + y * scale
            })
            .collect())
    }
}

/// Affine barrier `h(x) = pᵀx + b`; its gradient is constant.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineCbf {
    p: StateVec,
    b: f64,
}

impl AffineCbf {
    pub fn new(p: StateVec, b: f64) -> Result<Self> {
        if p.norm() == 0.0 {
            return Err(Error::InvalidCbf("affine coefficient vector p must be nonzero".into()));
        }
        if !(p.iter().all(|v| v.is_finite()) && b.is_finite()) {
            return Err(Error::InvalidCbf("affine cbf parameters must be finite".into()));
        }
        Ok(Self { p, b })
    }

    pub fn p(&self) -> &StateVec {
        &self.p
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn h(&self, x: &StateVec) -> f64 {
        self.p.dot(x) + self.b
    }
}

/// Barrier obtained from another by `h̃(x) = h(R(x − δ))` with `R ∈ SO(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformedCbf {
    inner: Box<Cbf>,
    rotation: DMatrix<f64>,
    delta: StateVec,
}

impl TransformedCbf {
    pub fn new(inner: Cbf, rotation: DMatrix<f64>, delta: StateVec) -> Result<Self> {
        let n = inner.dim();
        if rotation.nrows() != n || rotation.ncols() != n || delta.len() != n {
            return Err(Error::InvalidCbf(format!(
                "transform must be {n}x{n} with a length-{n} translation"
            )));
        }
        let orth = (&rotation * rotation.transpose() - DMatrix::identity(n, n))
            .abs()
            .max();
        if orth.is_nan() || orth > 1e-10 {
            return Err(Error::InvalidCbf("R must satisfy R·Rᵀ = I".into()));
        }
        let det = rotation.clone().lu().determinant();
        if det.is_nan() || (det - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidCbf(format!("R must have det 1, got {det}")));
        }
        Ok(Self {
            inner: Box::new(inner),
            rotation,
            delta,
        })
    }

    pub fn inner(&self) -> &Cbf {
        &self.inner
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn delta(&self) -> &StateVec {
        &self.delta
    }

    fn map(&self, x: &StateVec) -> StateVec {
        &self.rotation * (x - &self.delta)
    }

    pub fn h(&self, x: &StateVec) -> f64 {
        self.inner.h_value(&self.map(x))
    }

    pub fn grad(&self, x: &StateVec) -> StateVec {
        self.rotation.transpose() * self.inner.h_grad(&self.map(x))
    }
}

/// One barrier candidate: value `h(x)` and gradient `∇h(x)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Cbf {
    Quadratic(QuadraticCbf),
    Affine(AffineCbf),
    Transformed(TransformedCbf),
}

impl Cbf {
    pub fn dim(&self) -> usize {
        match self {
            Cbf::Quadratic(q) => q.center.len(),
            Cbf::Affine(a) => a.p.len(),
            Cbf::Transformed(t) => t.delta.len(),
        }
    }

    pub fn h_value(&self, x: &StateVec) -> f64 {
        match self {
            Cbf::Quadratic(q) => q.h(x),
            Cbf::Affine(a) => a.h(x),
            Cbf::Transformed(t) => t.h(x),
        }
    }

    pub fn h_grad(&self, x: &StateVec) -> StateVec {
        match self {
            Cbf::Quadratic(q) => q.grad(x),
            Cbf::Affine(a) => a.p.clone(),
            Cbf::Transformed(t) => t.grad(x),
        }
    }
}

/// Planar rotation by `theta`: `[[cos θ, −sin θ], [sin θ, cos θ]]`.
///
/// Only the two-dimensional construction is provided; general SO(n) factories
/// are out of scope, and [`TransformedCbf::new`] rejects dimension mismatches.
pub fn make_rotation_2d(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Ordered intersection of affine barriers defining `C̃ = {x : hᵢ(x) ≥ 0 ∀i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct CbfSet {
    members: Vec<AffineCbf>,
}

impl CbfSet {
    pub fn new(members: Vec<AffineCbf>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidCbf("a cbf set needs at least one member".into()));
        }
        let n = members[0].p.len();
        if members.iter().any(|m| m.p.len() != n) {
            return Err(Error::InvalidCbf("all cbf set members must share one dimension".into()));
        }
        Ok(Self { members })
    }

    /// Inner polytope of the ellipse `{h ≥ 0}`: the convex hull of boundary
    /// points at the given angles, one half-space per edge. Angles must be
    /// sorted; consecutive vertices sharing an x₁ coordinate would produce an
    /// edge whose normal has no x₂ component, so callers choosing constraints
    /// for systems with `B = [0; b₂]` should avoid symmetric angle pairs.
    pub fn inscribed_in_ellipse(quad: &QuadraticCbf, angles: &[f64]) -> Result<Self> {
        if angles.len() < 3 {
            return Err(Error::InvalidParameter(
                "an inscribed polytope needs at least 3 vertices".into(),
            ));
        }
        let vertices = quad.boundary_points_2d(angles)?;
        let center = quad.center();
        let q = vertices.len();
        let mut members = Vec::with_capacity(q);
        for i in 0..q {
            let v = &vertices[i];
            let w = &vertices[(i + 1) % q];
            let d = w - v;
            let mut normal = StateVec::from_vec(vec![-d[1], d[0]]);
            if normal.dot(&(center - v)) < 0.0 {
                normal = -normal;
            }
            let scale = normal.norm();
            if scale == 0.0 {
                return Err(Error::InvalidCbf(format!(
                    "degenerate edge between vertices {i} and {}",
                    (i + 1) % q
                )));
            }
            normal /= scale;
            let b = -normal.dot(v);
            members.push(AffineCbf::new(normal, b)?);
        }
        Self::new(members)
    }

    pub fn members(&self) -> &[AffineCbf] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Pointwise minimum over members: nonnegative iff `x ∈ C̃`. A diagnostic
    /// membership value, not a smooth barrier; the filter imposes each member
    /// as its own constraint.
    pub fn h_min(&self, x: &StateVec) -> f64 {
        self.members
            .iter()
            .map(|m| m.h(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the member attaining the minimum, ties broken by lowest index.
    pub fn active_member(&self, x: &StateVec) -> usize {
        let mut best = 0;
        let mut best_h = f64::INFINITY;
        for (i, m) in self.members.iter().enumerate() {
            let h = m.h(x);
            if h < best_h {
                best_h = h;
                best = i;
            }
        }
        best
    }
}

/// The safe set of a scenario: a single barrier or a polytope of affine ones.
#[derive(Clone, Debug, PartialEq)]
pub enum SafeSetSpec {
    Single(Cbf),
    Polytope(CbfSet),
}

impl SafeSetSpec {
    pub fn dim(&self) -> usize {
        match self {
            SafeSetSpec::Single(c) => c.dim(),
            SafeSetSpec::Polytope(s) => s.members[0].p.len(),
        }
    }

    pub fn member_count(&self) -> usize {
        match self {
            SafeSetSpec::Single(_) => 1,
            SafeSetSpec::Polytope(s) => s.len(),
        }
    }

    pub fn member_h(&self, idx: usize, x: &StateVec) -> f64 {
        match self {
            SafeSetSpec::Single(c) => {
                assert_eq!(idx, 0);
                c.h_value(x)
            }
            SafeSetSpec::Polytope(s) => s.members[idx].h(x),
        }
    }

    pub fn member_grad(&self, idx: usize, x: &StateVec) -> StateVec {
        match self {
            SafeSetSpec::Single(c) => {
                assert_eq!(idx, 0);
                c.h_grad(x)
            }
            SafeSetSpec::Polytope(s) => s.members[idx].p.clone(),
        }
    }

    /// All member values, in member order.
    pub fn h_values(&self, x: &StateVec) -> Vec<f64> {
        (0..self.member_count()).map(|i| self.member_h(i, x)).collect()
    }

    /// Minimum member value; `x` is in the safe set iff this is nonnegative.
    pub fn h_value(&self, x: &StateVec) -> f64 {
        match self {
            SafeSetSpec::Single(c) => c.h_value(x),
            SafeSetSpec::Polytope(s) => s.h_min(x),
        }
    }

    /// Gradient of the active (minimum) member, ties broken by lowest index.
    pub fn h_grad(&self, x: &StateVec) -> StateVec {
        match self {
            SafeSetSpec::Single(c) => c.h_grad(x),
            SafeSetSpec::Polytope(s) => s.members[s.active_member(x)].p.clone(),
        }
    }

    pub fn contains(&self, x: &StateVec) -> bool {
        self.h_value(x) >= 0.0
    }
}

/// Result of sampling `C̃ ⊆ C` on a grid: points inside the polytope but
/// outside the reference set. Empty certifies the inclusion at grid resolution.
#[derive(Clone, Debug, Serialize)]
pub struct InnerCheckReport {
    pub grid_per_dim: usize,
    pub points_checked: usize,
    pub violations: Vec<Vec<f64>>,
}

impl InnerCheckReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples the box and reports every grid point with `min_i hᵢ(x) ≥ 0` but
/// `outer.h(x) < 0`, i.e. violations of the inner approximation `C̃ ⊆ C`.
pub fn polytope_inner_check(
    set: &CbfSet,
    outer: &Cbf,
    bounds: &AdmissibleBox,
    grid_per_dim: usize,
) -> Result<InnerCheckReport> {
    if grid_per_dim < 2 {
        return Err(Error::InvalidParameter("grid_per_dim must be at least 2".into()));
    }
    let points = bounds.grid_points(grid_per_dim);
    let mut violations = Vec::new();
    for x in &points {
        if set.h_min(x) >= 0.0 && outer.h_value(x) < 0.0 {
            violations.push(x.iter().copied().collect());
        }
    }
    Ok(InnerCheckReport {
        grid_per_dim,
        points_checked: points.len(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sim_ellipse() -> QuadraticCbf {
        QuadraticCbf::new(
            1.0,
            StateVec::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.31, 0.0, 0.0, 4.00]),
        )
        .unwrap()
    }

    #[test]
    fn quadratic_value_and_gradient() {
        let cbf = sim_ellipse();
        let x = StateVec::from_vec(vec![0.5, -0.1]);
        assert_relative_eq!(cbf.h(&x), 0.6325, max_relative = 1e-12);
        let g = cbf.grad(&x);
        assert_relative_eq!(g[0], -1.31, max_relative = 1e-12);
        assert_relative_eq!(g[1], 0.8, max_relative = 1e-12);
        // Gradient vanishes at the center.
        assert_eq!(cbf.grad(&StateVec::zeros(2)), StateVec::zeros(2));
    }

    #[test]
    fn quadratic_boundary_evaluates_to_zero() {
        let cbf = sim_ellipse();
        for x in cbf.boundary_points_2d(&[0.0, 0.7, 2.0, 4.5]).unwrap() {
            assert!(cbf.h(&x).abs() <= 1e-12);
        }
    }

    #[test]
    fn quadratic_rejects_bad_parameters() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(QuadraticCbf::new(0.0, StateVec::zeros(2), p.clone()).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]);
        assert!(QuadraticCbf::new(1.0, StateVec::zeros(2), asym).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(QuadraticCbf::new(1.0, StateVec::zeros(2), indefinite).is_err());
    }

    #[test]
    fn affine_value() {
        let cbf = AffineCbf::new(StateVec::from_vec(vec![1.0, 0.0]), 0.0).unwrap();
        assert_eq!(cbf.h(&StateVec::from_vec(vec![1.25, 0.0])), 1.25);
        assert!(AffineCbf::new(StateVec::zeros(2), 1.0).is_err());
    }

    #[test]
    fn rotation_construction() {
        let r0 = make_rotation_2d(0.0);
        assert_eq!(r0, DMatrix::identity(2, 2));

        let r = make_rotation_2d(std::f64::consts::FRAC_PI_6);
        assert_relative_eq!(r[(0, 0)], 0.866025, max_relative = 1e-6);
        assert_relative_eq!(r[(0, 1)], -0.5, max_relative = 1e-12);
        assert_relative_eq!(r[(1, 0)], 0.5, max_relative = 1e-12);
        assert_relative_eq!(r[(1, 1)], 0.866025, max_relative = 1e-6);

        let quarter = make_rotation_2d(std::f64::consts::FRAC_PI_2);
        assert!(quarter[(0, 0)].abs() <= 1e-15);
        assert_relative_eq!(quarter[(0, 1)], -1.0, max_relative = 1e-12);

        // SO(2) invariants for a sweep of angles.
        for k in -8..=8 {
            let r = make_rotation_2d(0.37 * k as f64);
            let orth = (&r * r.transpose() - DMatrix::identity(2, 2)).abs().max();
            assert!(orth <= 1e-10);
            assert!((r.clone().lu().determinant() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn transformed_identity_matches_inner() {
        let inner = Cbf::Quadratic(sim_ellipse());
        let t = TransformedCbf::new(inner.clone(), DMatrix::identity(2, 2), StateVec::zeros(2))
            .unwrap();
        let x = StateVec::from_vec(vec![0.3, 0.2]);
        assert_eq!(t.h(&x), inner.h_value(&x));
        assert_eq!(t.grad(&x), inner.h_grad(&x));
    }

    #[test]
    fn transformed_matches_manual_composition() {
        let inner = Cbf::Quadratic(sim_ellipse());
        let r = make_rotation_2d(std::f64::consts::FRAC_PI_6);
        let delta = StateVec::from_vec(vec![0.05, -0.02]);
        let t = TransformedCbf::new(inner.clone(), r.clone(), delta.clone()).unwrap();
        for x in [
            StateVec::from_vec(vec![0.5, -0.1]),
            StateVec::from_vec(vec![-0.2, 0.4]),
            StateVec::from_vec(vec![0.0, 0.0]),
        ] {
            let mapped = &r * (&x - &delta);
            assert_eq!(t.h(&x), inner.h_value(&mapped));
        }
    }

    #[test]
    fn transformed_rejects_non_rotation() {
        let inner = Cbf::Quadratic(sim_ellipse());
        let scaled = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        assert!(TransformedCbf::new(inner.clone(), scaled, StateVec::zeros(2)).is_err());
        // Orthogonal but det = −1 (a reflection).
        let reflect = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(TransformedCbf::new(inner, reflect, StateVec::zeros(2)).is_err());
    }

    #[test]
    fn class_kappa_e_properties() {
        let id = ClassKappaE::Identity;
        let lin = ClassKappaE::linear(2.5).unwrap();
        assert_eq!(id.eval(0.0), 0.0);
        assert_eq!(lin.eval(0.0), 0.0);
        for gamma in [id, lin] {
            let mut prev = f64::NEG_INFINITY;
            for k in 0..1000 {
                let v = -10.0 + 20.0 * (k as f64) / 999.0;
                let g = gamma.eval(v);
                assert!(g > prev, "class-K must be strictly increasing");
                prev = g;
            }
        }
        assert!(ClassKappaE::linear(0.0).is_err());
        assert!(ClassKappaE::linear(-1.0).is_err());
    }

    #[test]
    fn polytope_min_and_active_member() {
        let set = CbfSet::new(vec![
            AffineCbf::new(StateVec::from_vec(vec![1.0, 0.0]), 0.3).unwrap(),
            AffineCbf::new(StateVec::from_vec(vec![-1.0, 0.0]), 0.3).unwrap(),
            AffineCbf::new(StateVec::from_vec(vec![0.0, 1.0]), 0.3).unwrap(),
            AffineCbf::new(StateVec::from_vec(vec![0.0, -1.0]), 0.3).unwrap(),
        ])
        .unwrap();
        let spec = SafeSetSpec::Polytope(set.clone());
        let inside = StateVec::from_vec(vec![0.1, 0.0]);
        let outside = StateVec::from_vec(vec![0.5, 0.0]);
        assert!(spec.contains(&inside));
        assert!(!spec.contains(&outside));
        // Min-based membership agrees with the per-member conjunction.
        for x in [&inside, &outside] {
            let all_nonneg = spec.h_values(x).iter().all(|h| *h >= 0.0);
            assert_eq!(spec.contains(x), all_nonneg);
        }
        // At the center every member ties at 0.3; lowest index wins.
        assert_eq!(set.active_member(&StateVec::zeros(2)), 0);
        assert_eq!(spec.h_grad(&outside), StateVec::from_vec(vec![-1.0, 0.0]));
    }

    /// Brute-force double loop used as the oracle for the grid inclusion check.
    fn brute_force_violations(
        set: &CbfSet,
        outer: &Cbf,
        bounds: &AdmissibleBox,
        per_dim: usize,
    ) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for i in 0..per_dim {
            for j in 0..per_dim {
                let x1 = bounds.lower()[0]
                    + (bounds.upper()[0] - bounds.lower()[0]) * i as f64 / (per_dim - 1) as f64;
                let x2 = bounds.lower()[1]
                    + (bounds.upper()[1] - bounds.lower()[1]) * j as f64 / (per_dim - 1) as f64;
                let x = StateVec::from_vec(vec![x1, x2]);
                if set.members().iter().all(|m| m.h(&x) >= 0.0) && outer.h_value(&x) < 0.0 {
                    out.push(vec![x1, x2]);
                }
            }
        }
        out
    }

    #[test]
    fn inner_check_single_halfspace_inside_small_box() {
        // The box [-0.4,0.4]² lies entirely inside the ellipse (corner value 0.85 < 1),
        // so any polytope restricted to it passes the grid check.
        let outer = Cbf::Quadratic(sim_ellipse());
        let set = CbfSet::new(vec![
            AffineCbf::new(StateVec::from_vec(vec![1.0, 0.0]), 0.5).unwrap(),
        ])
        .unwrap();
        let bounds = AdmissibleBox::new(vec![-0.4, -0.4], vec![0.4, 0.4]).unwrap();
        let report = polytope_inner_check(&set, &outer, &bounds, 41).unwrap();
        assert!(report.holds());
        assert_eq!(report.violations, brute_force_violations(&set, &outer, &bounds, 41));
    }

    #[test]
    fn inner_check_flags_member_past_the_ellipse() {
        let outer = Cbf::Quadratic(sim_ellipse());
        let bounds = AdmissibleBox::new(vec![-0.9, -0.55], vec![0.9, 0.55]).unwrap();
        // Square [-0.3,0.9]x[-0.3,0.3]: the corner (0.9, 0.3) lies outside the ellipse.
        let set = CbfSet::new(vec![
            AffineCbf::new(StateVec::from_vec(vec![1.0, 0.0]), 0.3).unwrap(),
            AffineCbf::new(StateVec::from_vec(vec![-1.0, 0.0]), 0.9).unwrap(),
            AffineCbf::new(StateVec::from_vec(vec![0.0, 1.0]), 0.3).unwrap(),
            AffineCbf::new(StateVec::from_vec(vec![0.0, -1.0]), 0.3).unwrap(),
        ])
        .unwrap();
        let report = polytope_inner_check(&set, &outer, &bounds, 61).unwrap();
        assert!(!report.holds());
        assert_eq!(report.violations, brute_force_violations(&set, &outer, &bounds, 61));
    }

    #[test]
    fn inner_check_rejects_superset() {
        // The whole admissible box cannot be an inner approximation of the ellipse.
        let outer = Cbf::Quadratic(sim_ellipse());
        let bounds = AdmissibleBox::new(vec![-0.9, -0.55], vec![0.9, 0.55]).unwrap();
        let set = CbfSet::new(vec![
            AffineCbf::new(StateVec::from_vec(vec![1.0, 0.0]), 0.9).unwrap(),
            AffineCbf::new(StateVec::from_vec(vec![-1.0, 0.0]), 0.9).unwrap(),
            AffineCbf::new(StateVec::from_vec(vec![0.0, 1.0]), 0.55).unwrap(),
            AffineCbf::new(StateVec::from_vec(vec![0.0, -1.0]), 0.55).unwrap(),
        ])
        .unwrap();
        let report = polytope_inner_check(&set, &outer, &bounds, 41).unwrap();
        assert!(!report.holds());
    }

    #[test]
    fn inscribed_polytope_is_inside_and_contains_center() {
        let quad = sim_ellipse();
        let angles: Vec<f64> = (0..7)
            .map(|k| 0.2 + 2.0 * std::f64::consts::PI * k as f64 / 7.0)
            .collect();
        let set = CbfSet::inscribed_in_ellipse(&quad, &angles).unwrap();
        assert_eq!(set.len(), 7);
        assert!(set.h_min(quad.center()) > 0.0);
        let outer = Cbf::Quadratic(quad);
        let bounds = AdmissibleBox::new(vec![-0.9, -0.55], vec![0.9, 0.55]).unwrap();
        let report = polytope_inner_check(&set, &outer, &bounds, 201).unwrap();
        assert!(report.holds(), "inscribed polytope must sit inside the ellipse");
    }
}
