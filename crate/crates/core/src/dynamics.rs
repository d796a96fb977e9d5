//! Control-affine dynamics and one-step integration under a held input.
//!
//! Two integration paths are provided. LTI systems are advanced with the exact
//! zero-order-hold map obtained from the matrix exponential of the augmented
//! block matrix `[[A, B], [0, 0]]·dt`, so the only error in an LTI simulation is
//! the sampling itself. Generic nonlinear systems use a classical fixed-step RK4.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// State vector `x ∈ Rⁿ`.
pub type StateVec = DVector<f64>;
/// Input vector `u ∈ Rᵐ`.
pub type InputVec = DVector<f64>;

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidSystem(format!("{what} has non-finite entries")))
    }
}

/// Continuous-time LTI system `ẋ = A x + B u`.
#[derive(Clone, Debug, PartialEq)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidSystem(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() {
            return Err(Error::InvalidSystem(format!(
                "B must have {} rows, got {}",
                a.nrows(),
                b.nrows()
            )));
        }
        if b.ncols() == 0 {
            return Err(Error::InvalidSystem("B must have at least one column".into()));
        }
        check_finite(&a, "A")?;
        check_finite(&b, "B")?;
        Ok(Self { a, b })
    }

    /// Convenience constructor from row-major nested slices.
    pub fn from_rows(a: &[&[f64]], b: &[&[f64]]) -> Result<Self> {
        let to_mat = |rows: &[&[f64]]| -> DMatrix<f64> {
            let nr = rows.len();
            let nc = rows.first().map_or(0, |r| r.len());
            DMatrix::from_fn(nr, nc, |i, j| rows[i][j])
        };
        Self::new(to_mat(a), to_mat(b))
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// Exact zero-order-hold discretization at sampling interval `dt`.
    ///
    /// The returned map satisfies `x(t₀+dt) = Ad·x(t₀) + Bd·u` for any input held
    /// constant over `[t₀, t₀+dt)`. Computed once and reused across a simulation.
    pub fn zoh(&self, dt: f64) -> Result<ZohMap> {
        let (ad, bd) = lti_discretize(self, dt)?;
        Ok(ZohMap { ad, bd, dt })
    }
}

/// Cached exact discretization `(Ad, Bd)` of an [`LtiSystem`] for one `dt`.
#[derive(Clone, Debug)]
pub struct ZohMap {
    pub ad: DMatrix<f64>,
    pub bd: DMatrix<f64>,
    pub dt: f64,
}

impl ZohMap {
    pub fn step(&self, x: &StateVec, u: &InputVec) -> StateVec {
        &self.ad * x + &self.bd * u
    }
}

/// Interface shared by LTI and generic control-affine systems `ẋ = f(x) + g(x)u`.
pub trait ControlAffine {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// Drift term `f(x)`.
    fn drift(&self, x: &StateVec) -> StateVec;
    /// Input matrix `g(x)` of shape n×m.
    fn input_matrix(&self, x: &StateVec) -> DMatrix<f64>;

    /// Full vector field `f(x) + g(x)u`.
    fn vector_field(&self, x: &StateVec, u: &InputVec) -> StateVec {
        self.drift(x) + self.input_matrix(x) * u
    }
}

impl ControlAffine for LtiSystem {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn drift(&self, x: &StateVec) -> StateVec {
        &self.a * x
    }

    fn input_matrix(&self, _x: &StateVec) -> DMatrix<f64> {
        self.b.clone()
    }
}

type DriftFn = dyn Fn(&StateVec) -> StateVec + Send + Sync;
type InputMatFn = dyn Fn(&StateVec) -> DMatrix<f64> + Send + Sync;

/// Generic control-affine system with user-supplied evaluators for `f` and `g`.
#[derive(Clone)]
pub struct ControlAffineSystem {
    n: usize,
    m: usize,
    f: Arc<DriftFn>,
    g: Arc<InputMatFn>,
}

impl std::fmt::Debug for ControlAffineSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("n", &self.n)
            .field("m", &self.m)
            .finish_non_exhaustive()
    }
}

impl ControlAffineSystem {
    pub fn new<F, G>(n: usize, m: usize, f: F, g: G) -> Self
    where
        F: Fn(&StateVec) -> StateVec + Send + Sync + 'static,
        G: Fn(&StateVec) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            n,
            m,
            f: Arc::new(f),
            g: Arc::new(g),
        }
    }

    pub fn from_lti(sys: &LtiSystem) -> Self {
        let a = sys.a().clone();
        let b = sys.b().clone();
        let m = sys.input_dim();
        Self::new(sys.state_dim(), m, move |x| &a * x, move |_| b.clone())
    }
}

impl ControlAffine for ControlAffineSystem {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn input_dim(&self) -> usize {
        self.m
    }

    fn drift(&self, x: &StateVec) -> StateVec {
        (self.f)(x)
    }

    fn input_matrix(&self, x: &StateVec) -> DMatrix<f64> {
        (self.g)(x)
    }
}

/// Either an LTI system (stepped exactly) or a generic one (stepped with RK4).
#[derive(Clone, Debug)]
pub enum SystemModel {
    Lti(LtiSystem),
    Generic(ControlAffineSystem),
}

impl ControlAffine for SystemModel {
    fn state_dim(&self) -> usize {
        match self {
            SystemModel::Lti(s) => s.state_dim(),
            SystemModel::Generic(s) => s.state_dim(),
        }
    }

    fn input_dim(&self) -> usize {
        match self {
            SystemModel::Lti(s) => s.input_dim(),
            SystemModel::Generic(s) => s.input_dim(),
        }
    }

    fn drift(&self, x: &StateVec) -> StateVec {
        match self {
            SystemModel::Lti(s) => s.drift(x),
            SystemModel::Generic(s) => s.drift(x),
        }
    }

    fn input_matrix(&self, x: &StateVec) -> DMatrix<f64> {
        match self {
            SystemModel::Lti(s) => s.input_matrix(x),
            SystemModel::Generic(s) => s.input_matrix(x),
        }
    }
}

/// Axis-aligned box of admissible states, used by grid diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibleBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl AdmissibleBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidParameter(
                "box lower/upper bounds must have equal nonzero length".into(),
            ));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidParameter(format!(
                    "box dimension {i}: require finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &StateVec) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(i, v)| self.lower[i] <= *v && *v <= self.upper[i])
    }

    /// Uniform grid with `per_dim` samples per dimension, endpoints included,
    /// enumerated in row-major order (last dimension fastest).
    pub fn grid_points(&self, per_dim: usize) -> Vec<StateVec> {
        assert!(per_dim >= 2, "grid requires at least 2 samples per dimension");
        let n = self.dim();
        let coord = |i: usize, k: usize| {
            self.lower[i] + (self.upper[i] - self.lower[i]) * (k as f64) / ((per_dim - 1) as f64)
        };
        let total = per_dim.pow(n as u32);
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            points.push(StateVec::from_fn(n, |i, _| coord(i, idx[i])));
            for i in (0..n).rev() {
                idx[i] += 1;
                if idx[i] < per_dim {
                    break;
                }
                idx[i] = 0;
            }
        }
        points
    }
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling-and-squaring with a Taylor-series core.
///
/// The argument is halved until its infinity norm is at most 1/2, the series is
/// summed until terms fall below 1e-19 of the running result, and the result is
/// squared back up. Relative accuracy is better than 1e-12 for `‖M‖ ≤ 10`.
pub fn matrix_exp(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::InvalidSystem(format!(
            "matrix exponential requires a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    check_finite(m, "matrix")?;
    let n = m.nrows();

    let mut squarings = 0u32;
    let mut norm = inf_norm(m);
    while norm > 0.5 {
        norm /= 2.0;
        squarings += 1;
    }
    let scaled = m / 2f64.powi(squarings as i32);

    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=40 {
        term = (&term * &scaled) / (k as f64);
        result += &term;
        if inf_norm(&term) <= 1e-19 * inf_norm(&result) {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// Exact ZOH discretization: `Ad = exp(A·dt)`, `Bd = ∫₀^dt exp(Aτ)dτ · B`.
///
/// Both blocks are read off the exponential of the augmented matrix
/// `[[A, B], [0, 0]]·dt`.
pub fn lti_discretize(sys: &LtiSystem, dt: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive and finite, got {dt}"
        )));
    }
    let n = sys.state_dim();
    let m = sys.input_dim();
    let mut aug = DMatrix::<f64>::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(sys.a() * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(sys.b() * dt));
    let e = matrix_exp(&aug)?;
    let ad = e.view((0, 0), (n, n)).into_owned();
    let bd = e.view((0, n), (n, m)).into_owned();
    Ok((ad, bd))
}

/// Advances an LTI system by one sampling interval under a held input.
pub fn step_exact(sys: &LtiSystem, x: &StateVec, u: &InputVec, dt: f64) -> Result<StateVec> {
    if x.len() != sys.state_dim() || u.len() != sys.input_dim() {
        return Err(Error::InvalidParameter(format!(
            "dimension mismatch: expected x∈R^{}, u∈R^{}, got {} and {}",
            sys.state_dim(),
            sys.input_dim(),
            x.len(),
            u.len()
        )));
    }
    Ok(sys.zoh(dt)?.step(x, u))
}

/// One classical fourth-order Runge-Kutta step of `ẋ = f(x) + g(x)u` with `u`
/// held constant. For LTI systems this agrees with [`step_exact`] to O(dt⁵).
pub fn step_rk4(sys: &dyn ControlAffine, x: &StateVec, u: &InputVec, dt: f64) -> Result<StateVec> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive and finite, got {dt}"
        )));
    }
    let deriv = |x: &StateVec| sys.vector_field(x, u);
    let k1 = deriv(x);
    let k2 = deriv(&(x + &k1 * (dt / 2.0)));
    let k3 = deriv(&(x + &k2 * (dt / 2.0)));
    let k4 = deriv(&(x + &k3 * dt));
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}
