//! Concrete map families: point action, Jacobians, analytic inverses, and
//! the induced action on leaf expansions.

use serde::{Deserialize, Serialize};

use crate::circlefn::CircleFunction;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::param::{Parameterization, Parameterization3};
use crate::spline::SplineOrder;
use crate::taylor::TaylorField;
use crate::taylor2::TaylorField2;

const TAU: f64 = std::f64::consts::TAU;

/// A planar map of the annulus with one designated continuation parameter.
///
/// `apply_field` is the lift of the point action to truncated fiber
/// expansions `W(θ,s)`; it must agree with `apply` pointwise up to the
/// truncation order.
pub trait PlanarMap: Clone + Sync {
    fn apply(&self, x: f64, y: f64) -> (f64, f64);

    /// Analytic inverse of `apply`.
    fn invert(&self, x: f64, y: f64) -> (f64, f64);

    /// Row-major Jacobian of `apply`.
    fn jacobian(&self, x: f64, y: f64) -> [[f64; 2]; 2];

    /// `f∘W` for a leaf expansion `W = (w1, w2)`.
    fn apply_field(&self, w1: &TaylorField, w2: &TaylorField) -> (TaylorField, TaylorField);

    /// Current value of the continuation parameter.
    fn param(&self) -> f64;

    /// The same family at a different continuation parameter.
    fn with_param(&self, value: f64) -> Self;

    /// `∂f/∂parameter` along `W`; feeds first-order continuation predictors.
    fn dparam_field(&self, w1: &TaylorField, w2: &TaylorField) -> (TaylorField, TaylorField);

    /// Named parameter values, in the order run logs should print them.
    fn describe(&self) -> Vec<(&'static str, f64)> {
        vec![("param", self.param())]
    }
}

/// Dissipative standard map with kick potential `V(θ) = −cos(2πθ)/(2π)²`:
///
/// ```text
/// p' = γ·p + γ·k·sin(2πθ)/(2π)
/// θ' = θ + p' + η
/// ```
///
/// `γ ∈ (0,1)` is the dissipation, `η` the drift, `k ≥ 0` the kick
/// strength; the continuation parameter is `k`. At `γ = 1`, `η = 0` the
/// point action reduces to the Chirikov standard map (iteration only; the
/// foliation solver needs `γ < 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dst {
    pub gamma: f64,
    pub eta: f64,
    pub k: f64,
}

impl Dst {
    pub fn new(gamma: f64, eta: f64, k: f64) -> Result<Self> {
        if !(gamma.is_finite() && eta.is_finite() && k.is_finite()) {
            return Err(Error::invalid("map parameters must be finite"));
        }
        if gamma <= 0.0 || gamma > 1.0 {
            return Err(Error::invalid("dissipation must lie in (0, 1]"));
        }
        if k < 0.0 {
            return Err(Error::invalid("kick strength must be nonnegative"));
        }
        Ok(Dst { gamma, eta, k })
    }

    fn kick(&self, x: f64) -> f64 {
        self.k * (TAU * x).sin() / TAU
    }

    /// Exact solution of the invariance equation at `k = 0`:
    /// `W = (θ + c²s, c·s)` with `c = γ/(γ−1)`, `a = θ + η`, `λ ≡ γ`.
    pub fn exact_unperturbed(
        &self,
        grid: &Grid,
        order: SplineOrder,
        degree: usize,
        b: f64,
    ) -> Result<Parameterization> {
        if self.gamma >= 1.0 {
            return Err(Error::invalid(
                "the unperturbed foliation needs dissipation below 1",
            ));
        }
        if degree == 0 {
            return Err(Error::invalid("leaf expansions need degree at least 1"));
        }
        let c = self.gamma / (self.gamma - 1.0);
        let w1 = TaylorField::monomial(CircleFunction::identity(grid, order), 0, degree, b).add(
            &TaylorField::monomial(
                CircleFunction::constant(grid, c * c / b, order),
                1,
                degree,
                b,
            ),
        );
        let w2 = TaylorField::monomial(CircleFunction::constant(grid, c / b, order), 1, degree, b);
        let a = CircleFunction::rotation(grid, self.eta, order);
        let a_inv = CircleFunction::rotation(grid, -self.eta, order);
        let lambda = CircleFunction::constant(grid, self.gamma, order);
        Parameterization::new(w1, w2, a, a_inv, lambda)
    }

    /// Replace the drift, keeping dissipation and kick.
    pub fn with_eta(&self, eta: f64) -> Dst {
        Dst { eta, ..*self }
    }
}

impl PlanarMap for Dst {
    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let p = self.gamma * (y + self.kick(x));
        (x + p + self.eta, p)
    }

    fn invert(&self, x: f64, y: f64) -> (f64, f64) {
        let theta = x - y - self.eta;
        (theta, y / self.gamma - self.kick(theta))
    }

    fn jacobian(&self, x: f64, _y: f64) -> [[f64; 2]; 2] {
        let c = self.gamma * self.k * (TAU * x).cos();
        [[1.0 + c, self.gamma], [c, self.gamma]]
    }

    fn apply_field(&self, w1: &TaylorField, w2: &TaylorField) -> (TaylorField, TaylorField) {
        let (sin, _) = w1.sin_cos(TAU);
        let p = w2.scale(self.gamma).add(&sin.scale(self.gamma * self.k / TAU));
        let x = w1.add(&p).add_const(self.eta);
        (x, p)
    }

    fn param(&self) -> f64 {
        self.k
    }

    fn with_param(&self, value: f64) -> Self {
        Dst { k: value, ..*self }
    }

    fn dparam_field(&self, w1: &TaylorField, _w2: &TaylorField) -> (TaylorField, TaylorField) {
        let (sin, _) = w1.sin_cos(TAU);
        let e2 = sin.scale(self.gamma / TAU);
        (e2.clone(), e2)
    }

    fn describe(&self) -> Vec<(&'static str, f64)> {
        vec![("gamma", self.gamma), ("eta", self.eta), ("k", self.k)]
    }
}

/// A map of `T¹ × R²` with a one-dimensional invariant circle and a
/// designated continuation parameter; the 3-D analog of [`PlanarMap`].
pub trait SpaceMap: Clone + Sync {
    fn apply(&self, x: f64, y: f64, z: f64) -> (f64, f64, f64);

    /// Analytic inverse of `apply`.
    fn invert(&self, x: f64, y: f64, z: f64) -> (f64, f64, f64);

    /// Row-major Jacobian of `apply`.
    fn jacobian(&self, x: f64, y: f64, z: f64) -> [[f64; 3]; 3];

    /// `f∘W` for a two-parameter leaf expansion `W = (w₁, w₂, w₃)`.
    fn apply_field(&self, w: &[TaylorField2; 3]) -> [TaylorField2; 3];

    /// Current value of the continuation parameter.
    fn param(&self) -> f64;

    /// The same family at a different continuation parameter.
    fn with_param(&self, value: f64) -> Self;

    /// Named parameter values, in the order run logs should print them.
    fn describe(&self) -> Vec<(&'static str, f64)> {
        vec![("param", self.param())]
    }
}

/// Conjugate-pole kernels of the geometric series `Σ_{n≥1} yⁿ e^{2πinx}`:
/// `C(x,y) − 1` is its real part and `S(x,y)` its imaginary part, i.e.
/// `S(x,y) = y·sin(2πx)/(1 − 2y·cos(2πx) + y²)` and
/// `C(x,y) = (1 − y·cos(2πx))/(1 − 2y·cos(2πx) + y²)`.
fn pole_sin(x: f64, y: f64) -> f64 {
    y * (TAU * x).sin() / (1.0 - 2.0 * y * (TAU * x).cos() + y * y)
}

fn pole_cos(x: f64, y: f64) -> f64 {
    (1.0 - y * (TAU * x).cos()) / (1.0 - 2.0 * y * (TAU * x).cos() + y * y)
}

/// Fattened Arnold family on `T¹ × R²`:
///
/// ```text
/// x' = x + α + (ε/2π)·(sin(2πx) + y + z/2)
/// y' = β·(sin(2πx) + y)
/// z' = γ·(sin(2πx) + y + z)
/// ```
///
/// `α` is the drift, `ε ≥ 0` the perturbation (the continuation parameter),
/// and `β`, `γ` the two fiber eigenvalues, which must be nonresonant
/// (`|β| ≠ |γ|`). Depending on their moduli the invariant circle is stable
/// (both < 1), unstable (both > 1), or of saddle type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Faf3 {
    pub alpha: f64,
    pub eps: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Faf3 {
    pub fn new(alpha: f64, eps: f64, beta: f64, gamma: f64) -> Result<Self> {
        if !(alpha.is_finite() && eps.is_finite() && beta.is_finite() && gamma.is_finite()) {
            return Err(Error::invalid("map parameters must be finite"));
        }
        if beta == 0.0 || gamma == 0.0 {
            return Err(Error::invalid("fiber eigenvalues must be nonzero"));
        }
        if beta.abs() == gamma.abs() {
            return Err(Error::invalid(
                "fiber eigenvalues must be nonresonant (|β| ≠ |γ|)",
            ));
        }
        Ok(Faf3 {
            alpha,
            eps,
            beta,
            gamma,
        })
    }

    /// Both eigen-directions contracting.
    pub fn stable() -> Faf3 {
        Faf3::new(0.618033, 0.0, 0.4, 0.7).unwrap()
    }

    /// One contracting and one expanding eigen-direction.
    pub fn saddle() -> Faf3 {
        Faf3::new(0.25, 0.0, 0.5, 1.6).unwrap()
    }

    /// Both eigen-directions expanding.
    pub fn unstable() -> Faf3 {
        Faf3::new(0.37, 0.0, 1.3, 2.0).unwrap()
    }

    /// Exact solution of the invariance equation at `ε = 0`: the circle is
    /// the first-harmonic response of the fiber dynamics to the `sin(2πx)`
    /// forcing, the leaf directions are the flat eigen-coordinates:
    ///
    /// ```text
    /// W₁ = θ
    /// W₂ = −S(α,β)·cos(2πθ) + (C(α,β)−1)·sin(2πθ) + s₁
    /// W₃ = A·cos(2πθ) − B·sin(2πθ) + γ/(β−γ)·s₁ + s₂
    /// a  = θ + α,   λ₁ ≡ β,   λ₂ ≡ γ
    /// ```
    ///
    /// with `A = (γ/β)·(S(α,β)(C(−α,γ⁻¹)−1) + (C(α,β)−1)S(−α,γ⁻¹))` and
    /// `B = (γ/β)·((C(α,β)−1)(C(−α,γ⁻¹)−1) − S(α,β)S(−α,γ⁻¹))`; both follow
    /// from the first-harmonic solve of `w₃∘a = γ·w₃ + (γ/β)·w₂∘a`.
    pub fn exact_unperturbed(
        &self,
        grid: &Grid,
        order: SplineOrder,
        deg: (usize, usize),
        b: f64,
    ) -> Result<Parameterization3> {
        if self.beta.abs() == 1.0 || self.gamma.abs() == 1.0 {
            return Err(Error::invalid(
                "the unperturbed solution needs eigenvalue moduli away from 1",
            ));
        }
        if deg.0 == 0 || deg.1 == 0 {
            return Err(Error::invalid("leaf expansions need degree at least 1"));
        }
        let (sab, cab) = (pole_sin(self.alpha, self.beta), pole_cos(self.alpha, self.beta));
        let gi = 1.0 / self.gamma;
        let (sag, cag) = (pole_sin(-self.alpha, gi), pole_cos(-self.alpha, gi));
        let r = self.gamma / self.beta;
        let big_a = r * (sab * (cag - 1.0) + (cab - 1.0) * sag);
        let big_b = r * ((cab - 1.0) * (cag - 1.0) - sab * sag);
        let w1 = TaylorField2::monomial(CircleFunction::identity(grid, order), (0, 0), deg, b);
        let circle2 = CircleFunction::from_fn(grid.clone(), 0, order, |t| {
            -sab * (TAU * t).cos() + (cab - 1.0) * (TAU * t).sin()
        })?;
        let one_over_b = CircleFunction::constant(grid, 1.0 / b, order);
        let w2 = TaylorField2::monomial(circle2, (0, 0), deg, b)
            .add(&TaylorField2::monomial(one_over_b.clone(), (1, 0), deg, b));
        let circle3 = CircleFunction::from_fn(grid.clone(), 0, order, |t| {
            big_a * (TAU * t).cos() - big_b * (TAU * t).sin()
        })?;
        let slope = self.gamma / (self.beta - self.gamma);
        let w3 = TaylorField2::monomial(circle3, (0, 0), deg, b)
            .add(&TaylorField2::monomial(
                CircleFunction::constant(grid, slope / b, order),
                (1, 0),
                deg,
                b,
            ))
            .add(&TaylorField2::monomial(one_over_b, (0, 1), deg, b));
        let a = CircleFunction::rotation(grid, self.alpha, order);
        let a_inv = CircleFunction::rotation(grid, -self.alpha, order);
        let l1 = CircleFunction::constant(grid, self.beta, order);
        let l2 = CircleFunction::constant(grid, self.gamma, order);
        Parameterization3::new(w1, w2, w3, a, a_inv, l1, l2)
    }
}

impl SpaceMap for Faf3 {
    fn apply(&self, x: f64, y: f64, z: f64) -> (f64, f64, f64) {
        let s = (TAU * x).sin();
        (
            x + self.alpha + self.eps / TAU * (s + y + z / 2.0),
            self.beta * (s + y),
            self.gamma * (s + y + z),
        )
    }

    fn invert(&self, x: f64, y: f64, z: f64) -> (f64, f64, f64) {
        // sin(2πx₀) + y₀ = y/β and z₀ = z/γ − y/β collapse the angle update
        // to an explicit shift.
        let x0 = x
            - self.alpha
            - self.eps / TAU * (y / (2.0 * self.beta) + z / (2.0 * self.gamma));
        let s = (TAU * x0).sin();
        (x0, y / self.beta - s, z / self.gamma - y / self.beta)
    }

    fn jacobian(&self, x: f64, _y: f64, _z: f64) -> [[f64; 3]; 3] {
        let c = (TAU * x).cos();
        [
            [1.0 + self.eps * c, self.eps / TAU, self.eps / (2.0 * TAU)],
            [TAU * self.beta * c, self.beta, 0.0],
            [TAU * self.gamma * c, self.gamma, self.gamma],
        ]
    }

    fn apply_field(&self, w: &[TaylorField2; 3]) -> [TaylorField2; 3] {
        let (sin, _) = w[0].sin_cos(TAU);
        let sy = sin.add(&w[1]);
        let x = w[0]
            .add(&sy.add(&w[2].scale(0.5)).scale(self.eps / TAU))
            .add_const(self.alpha);
        let y = sy.scale(self.beta);
        let z = sy.add(&w[2]).scale(self.gamma);
        [x, y, z]
    }

    fn param(&self) -> f64 {
        self.eps
    }

    fn with_param(&self, value: f64) -> Self {
        Faf3 { eps: value, ..*self }
    }

    fn describe(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("alpha", self.alpha),
            ("eps", self.eps),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ]
    }
}
