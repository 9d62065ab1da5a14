//! A parameterized invariant circle together with its stable foliation.
//!
//! The object of study is a triple `(W, a, λ)` satisfying the invariance
//! equation `f∘W(θ,s) = W(a(θ), λ(θ)s)`: `W(θ,0)` traces the invariant
//! circle, `θ ↦ W(θ,·)` its stable leaves (isochrons), `a` the circle
//! dynamics and `λ` the contraction rate along leaves.

use crate::circlefn::CircleFunction;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::inverse;
use crate::spline::SplineOrder;
use crate::taylor::TaylorField;
use crate::taylor2::TaylorField2;

/// Approximate solution of the 2-D invariance equation.
///
/// `w1` carries index 1 at order zero (the circle winds once around the
/// angular direction); every other coefficient is periodic. `a` is an
/// orientation-preserving circle map stored with its cached inverse.
#[derive(Debug, Clone)]
pub struct Parameterization {
    pub w1: TaylorField,
    pub w2: TaylorField,
    pub a: CircleFunction,
    pub a_inv: CircleFunction,
    pub lambda: CircleFunction,
}

impl Parameterization {
    pub fn new(
        w1: TaylorField,
        w2: TaylorField,
        a: CircleFunction,
        a_inv: CircleFunction,
        lambda: CircleFunction,
    ) -> Result<Self> {
        if w1.index() != 1 {
            return Err(Error::invalid("w1 must have index 1 at order zero"));
        }
        if w2.index() != 0 {
            return Err(Error::invalid("w2 must be fully periodic"));
        }
        if a.index() != 1 || a_inv.index() != 1 {
            return Err(Error::invalid("a and a_inv must be degree-one circle maps"));
        }
        if lambda.index() != 0 {
            return Err(Error::invalid("lambda must be periodic"));
        }
        let grid = w1.grid();
        if !grid.same(w2.grid())
            || !grid.same(a.grid())
            || !grid.same(a_inv.grid())
            || !grid.same(lambda.grid())
        {
            return Err(Error::invalid("all components must share one grid"));
        }
        if (w1.b() - w2.b()).abs() != 0.0 {
            return Err(Error::invalid("w1 and w2 must share one fiber scale"));
        }
        if !a.is_monotone_lift() {
            return Err(Error::NotMonotone(
                "circle dynamics must be orientation-preserving".into(),
            ));
        }
        Ok(Parameterization { w1, w2, a, a_inv, lambda })
    }

    /// Build with the inverse computed from scratch.
    pub fn with_computed_inverse(
        w1: TaylorField,
        w2: TaylorField,
        a: CircleFunction,
        lambda: CircleFunction,
    ) -> Result<Self> {
        let a_inv = inverse::best_inverse(&a, None)?;
        Parameterization::new(w1, w2, a, a_inv, lambda)
    }

    pub fn grid(&self) -> &Grid {
        self.w1.grid()
    }

    pub fn degree(&self) -> usize {
        self.w1.degree().max(self.w2.degree())
    }

    pub fn b(&self) -> f64 {
        self.w1.b()
    }

    pub fn order(&self) -> SplineOrder {
        self.w1.order()
    }

    /// `Σ_j ‖·‖_{C^r} δ^j` of the leaf map, summed over the components.
    ///
    /// The value is gauge-dependent: reparameterizing the angle moves mass
    /// between the components of `W` and the distortion of `a` without
    /// changing the surface, so only O(5%) agreement between independent
    /// solvers is meaningful for this diagnostic.
    pub fn solution_norm(&self, r: usize, delta: f64) -> f64 {
        self.w1.xr_delta_norm(r, delta) + self.w2.xr_delta_norm(r, delta)
    }

    /// Size of the whole triple; used by divergence guards.
    pub fn total_norm(&self, delta: f64) -> f64 {
        self.solution_norm(0, delta)
            .max(self.a.c0_norm())
            .max(self.lambda.c0_norm())
    }

    /// How far the cached inverse is from a true inverse of `a`.
    pub fn inverse_defect(&self) -> f64 {
        inverse::inversion_defect(&self.a, &self.a_inv)
    }

    /// Transport every component to a new grid.
    pub fn resample(&self, grid: &Grid) -> Result<Self> {
        let a = self.a.resample(grid);
        let a_inv = inverse::best_inverse(&a, Some(&self.a_inv.resample(grid)))?;
        Parameterization::new(
            self.w1.resample(grid),
            self.w2.resample(grid),
            a,
            a_inv,
            self.lambda.resample(grid),
        )
    }

    /// Re-interpolate every component with a different spline order.
    pub fn with_order(&self, order: SplineOrder) -> Result<Self> {
        Parameterization::new(
            self.w1.with_order(order),
            self.w2.with_order(order),
            self.a.with_order(order),
            self.a_inv.with_order(order),
            self.lambda.with_order(order),
        )
    }

    /// Change the truncation degree of the leaf expansion.
    pub fn with_degree(&self, degree: usize) -> Self {
        Parameterization {
            w1: if degree >= self.w1.degree() {
                self.w1.extended(degree)
            } else {
                self.w1.truncated(degree)
            },
            w2: if degree >= self.w2.degree() {
                self.w2.extended(degree)
            } else {
                self.w2.truncated(degree)
            },
            a: self.a.clone(),
            a_inv: self.a_inv.clone(),
            lambda: self.lambda.clone(),
        }
    }

    /// Change the fiber scale without moving the represented surface.
    pub fn rescale_s(&self, b_new: f64) -> Result<Self> {
        Ok(Parameterization {
            w1: self.w1.rescale_s(b_new)?,
            w2: self.w2.rescale_s(b_new)?,
            a: self.a.clone(),
            a_inv: self.a_inv.clone(),
            lambda: self.lambda.clone(),
        })
    }

    /// The invariant circle `W(θ,0)` as a pair of circle functions.
    pub fn circle(&self) -> (CircleFunction, CircleFunction) {
        (self.w1.coeff(0).clone(), self.w2.coeff(0).clone())
    }

    /// Evaluate the leaf map at one point.
    pub fn eval(&self, theta: f64, s: f64) -> (f64, f64) {
        (self.w1.eval(theta, s), self.w2.eval(theta, s))
    }
}

/// Approximate solution of the 3-D invariance equation
/// `f∘W(θ,s₁,s₂) = W(a(θ), λ₁(θ)s₁, λ₂(θ)s₂)`.
///
/// The two fiber directions carry independent multipliers whose dynamical
/// averages must stay nonresonant for the order-by-order solve; unlike the
/// 2-D case either may exceed one (unstable and saddle circles are valid).
#[derive(Debug, Clone)]
pub struct Parameterization3 {
    pub w1: TaylorField2,
    pub w2: TaylorField2,
    pub w3: TaylorField2,
    pub a: CircleFunction,
    pub a_inv: CircleFunction,
    pub lambda1: CircleFunction,
    pub lambda2: CircleFunction,
}

impl Parameterization3 {
    pub fn new(
        w1: TaylorField2,
        w2: TaylorField2,
        w3: TaylorField2,
        a: CircleFunction,
        a_inv: CircleFunction,
        lambda1: CircleFunction,
        lambda2: CircleFunction,
    ) -> Result<Self> {
        if w1.index() != 1 {
            return Err(Error::invalid("w1 must have index 1 at order (0,0)"));
        }
        if w2.index() != 0 || w3.index() != 0 {
            return Err(Error::invalid("w2 and w3 must be fully periodic"));
        }
        if a.index() != 1 || a_inv.index() != 1 {
            return Err(Error::invalid("a and a_inv must be degree-one circle maps"));
        }
        if lambda1.index() != 0 || lambda2.index() != 0 {
            return Err(Error::invalid("fiber multipliers must be periodic"));
        }
        let grid = w1.grid();
        if !grid.same(w2.grid())
            || !grid.same(w3.grid())
            || !grid.same(a.grid())
            || !grid.same(a_inv.grid())
            || !grid.same(lambda1.grid())
            || !grid.same(lambda2.grid())
        {
            return Err(Error::invalid("all components must share one grid"));
        }
        if w1.b() != w2.b() || w1.b() != w3.b() {
            return Err(Error::invalid("leaf components must share one fiber scale"));
        }
        if w1.degrees() != w2.degrees() || w1.degrees() != w3.degrees() {
            return Err(Error::invalid(
                "leaf components must share one truncation rectangle",
            ));
        }
        if !a.is_monotone_lift() {
            return Err(Error::NotMonotone(
                "circle dynamics must be orientation-preserving".into(),
            ));
        }
        Ok(Parameterization3 {
            w1,
            w2,
            w3,
            a,
            a_inv,
            lambda1,
            lambda2,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.w1.grid()
    }

    pub fn degrees(&self) -> (usize, usize) {
        self.w1.degrees()
    }

    pub fn b(&self) -> f64 {
        self.w1.b()
    }

    pub fn order(&self) -> SplineOrder {
        self.w1.order()
    }

    /// `Σ_{x,y} ‖·‖_{C^r} δ^{x+y}` of the leaf map, summed over components
    /// (gauge-dependent, as in the 2-D case).
    pub fn solution_norm(&self, r: usize, delta: f64) -> f64 {
        self.w1.xr_delta_norm(r, delta)
            + self.w2.xr_delta_norm(r, delta)
            + self.w3.xr_delta_norm(r, delta)
    }

    /// Size of the whole tuple; used by divergence guards.
    pub fn total_norm(&self, delta: f64) -> f64 {
        self.solution_norm(0, delta)
            .max(self.a.c0_norm())
            .max(self.lambda1.c0_norm())
            .max(self.lambda2.c0_norm())
    }

    /// How far the cached inverse is from a true inverse of `a`.
    pub fn inverse_defect(&self) -> f64 {
        inverse::inversion_defect(&self.a, &self.a_inv)
    }

    /// The invariant circle `W(θ,0,0)` as a triple of circle functions.
    pub fn circle(&self) -> (CircleFunction, CircleFunction, CircleFunction) {
        (
            self.w1.coeff(0, 0).clone(),
            self.w2.coeff(0, 0).clone(),
            self.w3.coeff(0, 0).clone(),
        )
    }

    /// Evaluate the leaf map at one point.
    pub fn eval(&self, theta: f64, s1: f64, s2: f64) -> (f64, f64, f64) {
        (
            self.w1.eval(theta, s1, s2),
            self.w2.eval(theta, s1, s2),
            self.w3.eval(theta, s1, s2),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circlefn::CircleFunction;
    use crate::grid::Grid;
    use crate::taylor::TaylorField;

    fn sample(n: usize) -> Parameterization {
        let grid = Grid::uniform(n);
        let order = SplineOrder::Cubic;
        let w1 = TaylorField::monomial(CircleFunction::identity(&grid, order), 0, 1, 1.0)
            .add(&TaylorField::monomial(
                CircleFunction::constant(&grid, 1.0, order),
                1,
                1,
                1.0,
            ));
        let w2 = TaylorField::monomial(CircleFunction::constant(&grid, -1.0, order), 1, 1, 1.0);
        let a = CircleFunction::rotation(&grid, 0.3, order);
        let lambda = CircleFunction::constant(&grid, 0.5, order);
        Parameterization::with_computed_inverse(w1, w2, a, lambda).unwrap()
    }

    #[test]
    fn validates_index_conventions() {
        let p = sample(64);
        let err = Parameterization::new(
            p.w2.clone(),
            p.w2.clone(),
            p.a.clone(),
            p.a_inv.clone(),
            p.lambda.clone(),
        );
        assert!(err.is_err());
        let err = Parameterization::new(
            p.w1.clone(),
            p.w1.clone(),
            p.a.clone(),
            p.a_inv.clone(),
            p.lambda.clone(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_reversed_dynamics() {
        let p = sample(64);
        let grid = p.grid().clone();
        let order = p.order();
        let backwards = CircleFunction::from_fn(grid, 1, order, |t| t - 2.0 * t * t)
            .unwrap_or_else(|_| p.a.clone());
        let r = Parameterization::new(p.w1.clone(), p.w2.clone(), backwards, p.a_inv, p.lambda);
        assert!(r.is_err());
    }

    #[test]
    fn norms_and_eval() {
        let p = sample(64);
        // w1 = θ + s has X⁰ norm sup|θ| + δ; w2 = −s adds another δ.
        let delta = 0.001;
        let n = p.solution_norm(0, delta);
        assert!((n - (63.0 / 64.0 + 2.0 * delta)).abs() < 1e-12, "n = {n}");
        let (x, y) = p.eval(0.25, 0.5);
        assert!((x - 0.75).abs() < 1e-12);
        assert!((y + 0.5).abs() < 1e-12);
        assert!(p.inverse_defect() < 1e-12);
    }

    #[test]
    fn resample_and_degree_change_preserve_values() {
        let p = sample(64);
        let fine = p.resample(&Grid::uniform(128)).unwrap();
        let (x, y) = fine.eval(0.37, 0.2);
        assert!((x - p.eval(0.37, 0.2).0).abs() < 1e-9);
        assert!((y - p.eval(0.37, 0.2).1).abs() < 1e-9);
        let up = p.with_degree(4);
        assert_eq!(up.degree(), 4);
        assert!((up.eval(0.1, 0.3).0 - p.eval(0.1, 0.3).0).abs() < 1e-15);
    }
}
