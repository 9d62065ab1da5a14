//! Invariant circles and their stable foliations for dissipative maps.
//!
//! The library computes parameterizations `W(θ, s)` satisfying the
//! invariance equation
//!
//! ```text
//! f(W(θ, s)) = W(a(θ), λ(θ)·s)
//! ```
//!
//! so that `W(θ, 0)` traces an invariant circle with internal dynamics `a`
//! and `W(θ₀, ·)` sweeps the stable leaf (isochron) through each circle
//! point, contracted at rate `λ`. The solver is a quasi-Newton iteration
//! whose linearized equations reduce to one-dimensional cohomological
//! equations, giving quadratic convergence at linear cost per step in the
//! grid size and Taylor order.
//!
//! Layering, bottom up: [`grid`] and [`spline`] provide periodic B-spline
//! interpolation; [`circlefn`] wraps them into circle maps and periodic
//! functions with winding-index bookkeeping; [`taylor`] adds expansions in
//! the fiber coordinate; [`coho`] solves the cohomological equations;
//! [`inverse`] inverts circle maps; [`maps`] defines concrete map families;
//! [`param`] bundles a solution triple `(W, a, λ)`; [`newton`] runs the
//! quasi-Newton iteration.
//!
//! The same pipeline extends to 3-D maps with a two-dimensional stable (or
//! unstable, or saddle) set attached to the circle: [`taylor2`] provides
//! bivariate fiber expansions and [`newton3`] the corresponding iteration
//! for `f∘W(θ,s₁,s₂) = W(a(θ), λ₁(θ)s₁, λ₂(θ)s₂)`.
//!
//! On top sit [`continuation`] — parameter walks with adaptive steps,
//! grid and spline adaptation, fiber-degree raising and drift tracking
//! at a prescribed rotation number — and [`analysis`]: rotation numbers
//! by weighted Birkhoff averages, phase-lock detection, bundle angles
//! and breakdown fits, periodic-orbit eigenvalues, leaf globalization
//! and Hölder-regularity estimates.

pub mod analysis;
pub mod circlefn;
pub mod coho;
pub mod continuation;
pub mod error;
pub mod grid;
pub mod inverse;
pub mod maps;
pub mod newton;
pub mod newton3;
pub mod param;
pub mod spline;
pub mod taylor;
pub mod taylor2;
pub mod util;

pub use circlefn::CircleFunction;
pub use continuation::{
    continue_family, continue_family3, continue_fixed_rotation, increase_order,
    predictor_first_order, ContinuationOptions, ContinuationRecord,
};
pub use error::{Error, Result};
pub use grid::Grid;
pub use maps::{Dst, Faf3, PlanarMap, SpaceMap};
pub use newton::{solve_invariance, NewtonOptions};
pub use newton3::solve_invariance3;
pub use param::{Parameterization, Parameterization3};
pub use spline::SplineOrder;
pub use taylor::TaylorField;
pub use taylor2::TaylorField2;
