//! Inversion of orientation-preserving circle maps (index-1 lifts).
//!
//! The workhorse is graph reflection: writing `a = T_{a(t₀)} ∘ â` with
//! `â(t₀) = 0`, the graph of `â⁻¹` interpolates the reflected knot/value
//! pairs `(â(θᵢ), θᵢ)`, and `a⁻¹(θ) = â⁻¹(θ − a(t₀))`. Three refinement
//! schemes improve an existing approximation: Newton steps on the left and
//! right inverse equations, and a linearization solved as a cohomological
//! equation. `best_inverse` races all of them and keeps the candidate with
//! the smallest two-sided defect.

use crate::circlefn::CircleFunction;
use crate::coho::{self, CohoOptions};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Floor for `Da⁺` samples before the quotient-based refinements give up.
const DERIV_FLOOR: f64 = 1e-12;
/// Rounds of iterative left/right polishing inside `best_inverse`.
const POLISH_ROUNDS: usize = 3;

/// Inverse by graph reflection, re-evaluated on the grid of `a`.
pub fn invert_graph(a: &CircleFunction) -> Result<CircleFunction> {
    if !a.is_monotone_lift() {
        return Err(Error::NotMonotone(
            "graph inversion needs a strictly increasing index-1 lift".into(),
        ));
    }
    let a0 = a.values()[0];
    let reflected_knots: Vec<f64> = a.values().iter().map(|v| v - a0).collect();
    let reflected = CircleFunction::new(
        Grid::from_points(reflected_knots)?,
        a.grid().points().to_vec(),
        1,
        a.order(),
    )?;
    let values = a
        .grid()
        .points()
        .iter()
        .map(|&t| reflected.eval(t - a0))
        .collect();
    CircleFunction::new(a.grid().clone(), values, 1, a.order())
}

/// Newton step on `(a⁻¹ + Δ) ∘ a⁺ = id`: the update is `Δ = −e ∘ a⁻¹` with
/// `e = a⁻¹∘a⁺ − id`.
pub fn invert_refine_left(ainv: &CircleFunction, aplus: &CircleFunction) -> CircleFunction {
    let id = CircleFunction::identity(ainv.grid(), ainv.order());
    let e = ainv.compose(aplus).sub(&id);
    ainv.sub(&e.compose(ainv))
}

/// Newton step on `a⁺ ∘ (a⁻¹ + Δ) = id`: the update is
/// `Δ = (id − a⁺∘a⁻¹) / (Da⁺∘a⁻¹)`.
pub fn invert_refine_right(
    ainv: &CircleFunction,
    aplus: &CircleFunction,
) -> Result<CircleFunction> {
    let id = CircleFunction::identity(ainv.grid(), ainv.order());
    let num = id.sub(&aplus.compose(ainv));
    let den = aplus.derivative().compose(ainv);
    Ok(ainv.add(&num.try_div(&den, DERIV_FLOOR)?))
}

/// Integer `β = ceil(‖1/Da⁺(a⁻¹)‖_{C⁰})` that makes the mixed inverse
/// equation contracting, together with the samples of `Da⁺∘a⁻¹`.
fn expansion_ceiling(
    ainv: &CircleFunction,
    aplus: &CircleFunction,
) -> Result<(f64, CircleFunction)> {
    let den = aplus.derivative().compose(ainv);
    let min = den.values().iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= DERIV_FLOOR {
        return Err(Error::DivisionDegenerate {
            theta: 0.0,
            min_abs: min,
        });
    }
    // guard the ceiling against round-off pushing 1/min just above an integer
    Ok(((1.0 / min - 1e-9).ceil().max(1.0), den))
}

/// Refinement through the mixed equation
/// `(a⁻¹+Δ)∘a⁺ − β·a⁺∘(a⁻¹+Δ) + (β−1)·id = 0`,
/// whose linearization in `Δ` is the cohomological equation
/// `Δ = l·(Δ∘a⁺) + η` with `l = 1/(β·Da⁺∘a⁻¹)`.
pub fn invert_refine_coho(
    ainv: &CircleFunction,
    aplus: &CircleFunction,
) -> Result<CircleFunction> {
    let (beta, den) = expansion_ceiling(ainv, aplus)?;
    let id = CircleFunction::identity(ainv.grid(), ainv.order());
    let left = ainv.compose(aplus);
    let right = aplus.compose(ainv);
    let rhs = left
        .sub(&right)
        .sub(&right.sub(&id).scale(beta - 1.0));
    let l = den.map_values(0, |v| 1.0 / (beta * v));
    let eta = rhs.mul(&l);
    if eta.c0_norm() < 1e-13 {
        // already an inverse to round-off; the correction is negligible
        return Ok(ainv.clone());
    }
    let opts = CohoOptions {
        tolerance: (1e-12f64).max(eta.c0_norm() * 1e-6),
        ..CohoOptions::default()
    };
    let sol = coho::solve(&l, aplus, &eta, &opts)?;
    Ok(ainv.add(&sol.phi))
}

/// Two-sided inversion defect `max(‖a∘c − id‖_{C⁰}, ‖c∘a − id‖_{C⁰})`.
pub fn inversion_defect(a: &CircleFunction, candidate: &CircleFunction) -> f64 {
    let id = CircleFunction::identity(a.grid(), a.order());
    let right = a.compose(candidate).sub(&id).c0_norm();
    let left = candidate.compose(a).sub(&id).c0_norm();
    right.max(left)
}

/// Inverts `a`, seeding from `prev` when a previous inverse is available,
/// and returns the candidate with the smallest two-sided defect.
pub fn best_inverse(a: &CircleFunction, prev: Option<&CircleFunction>) -> Result<CircleFunction> {
    let mut candidates: Vec<CircleFunction> = Vec::new();
    if let Ok(g) = invert_graph(a) {
        candidates.push(g);
    }
    if let Some(p) = prev {
        let p = p.resample(a.grid());
        candidates.push(p.clone());
        candidates.push(invert_refine_left(&p, a));
        if let Ok(c) = invert_refine_right(&p, a) {
            candidates.push(c);
        }
        if let Ok(c) = invert_refine_coho(&p, a) {
            candidates.push(c);
        }
    }
    let mut best: Option<(f64, CircleFunction)> = None;
    for c in candidates {
        if !c.is_monotone_lift() {
            continue;
        }
        let d = inversion_defect(a, &c);
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, c));
        }
    }
    let (mut defect, mut winner) = best.ok_or_else(|| {
        Error::NotMonotone("every inverse candidate lost monotonicity".into())
    })?;
    // polish the winner with alternating left/right Newton steps while the
    // two-sided defect keeps dropping
    for _ in 0..POLISH_ROUNDS {
        let mut improved = false;
        let mut trials = vec![invert_refine_left(&winner, a)];
        if let Ok(c) = invert_refine_right(&winner, a) {
            trials.push(c);
        }
        for c in trials {
            if !c.is_monotone_lift() {
                continue;
            }
            let d = inversion_defect(a, &c);
            if d < defect {
                defect = d;
                winner = c;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    Ok(winner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::SplineOrder;

    const TAU: f64 = std::f64::consts::TAU;

    fn diffeo(grid: &Grid, eps: f64) -> CircleFunction {
        CircleFunction::from_fn(grid.clone(), 1, SplineOrder::Cubic, |t| {
            t + 0.3 + eps * (TAU * t).sin()
        })
        .unwrap()
    }

    #[test]
    fn rotation_inverts_exactly() {
        let g = Grid::uniform(32);
        let a = CircleFunction::rotation(&g, 0.3, SplineOrder::Cubic);
        let inv = invert_graph(&a).unwrap();
        for (t, v) in g.points().iter().zip(inv.values()) {
            assert!((v - (t - 0.3)).abs() < 1e-14);
        }
        assert_eq!(invert_graph(&CircleFunction::identity(&g, SplineOrder::Cubic))
            .unwrap()
            .max_abs_diff(&CircleFunction::identity(&g, SplineOrder::Cubic)), 0.0);
    }

    #[test]
    fn graph_inverse_defect_shrinks_at_spline_rate() {
        let mut defects = Vec::new();
        for n in [128usize, 256] {
            let g = Grid::uniform(n);
            let a = diffeo(&g, 0.05);
            let inv = invert_graph(&a).unwrap();
            defects.push(inversion_defect(&a, &inv));
        }
        assert!(defects[1] < 1e-7);
        assert!(
            defects[0] / defects[1] > 10.0,
            "expected ≳ N⁻⁴ convergence, got {defects:?}"
        );
    }

    #[test]
    fn non_monotone_input_is_rejected() {
        let g = Grid::uniform(16);
        let wild = CircleFunction::from_fn(g, 1, SplineOrder::Cubic, |t| {
            t + 0.4 * (TAU * t).sin()
        })
        .unwrap();
        assert!(!wild.is_monotone_lift());
        assert!(matches!(invert_graph(&wild), Err(Error::NotMonotone(_))));
    }

    #[test]
    fn left_refinement_is_quadratic() {
        let g = Grid::uniform(256);
        let a = CircleFunction::rotation(&g, 0.3, SplineOrder::Cubic);
        let id = CircleFunction::identity(&g, SplineOrder::Cubic);
        let perturbed = CircleFunction::from_fn(g.clone(), 1, SplineOrder::Cubic, |t| {
            t - 0.3 + 1e-3 * (TAU * t).sin()
        })
        .unwrap();
        let before = perturbed.compose(&a).sub(&id).c0_norm();
        assert!(before > 5e-4);
        let refined = invert_refine_left(&perturbed, &a);
        let after = refined.compose(&a).sub(&id).c0_norm();
        assert!(after < 2e-5, "left residual {before} -> {after}");
        // exact input is a fixed point
        let exact = CircleFunction::rotation(&g, -0.3, SplineOrder::Cubic);
        assert!(invert_refine_left(&exact, &a).max_abs_diff(&exact) < 1e-14);
    }

    #[test]
    fn right_refinement_is_quadratic() {
        let g = Grid::uniform(256);
        let a = CircleFunction::rotation(&g, 0.3, SplineOrder::Cubic);
        let id = CircleFunction::identity(&g, SplineOrder::Cubic);
        let perturbed = CircleFunction::from_fn(g.clone(), 1, SplineOrder::Cubic, |t| {
            t - 0.3 + 1e-3 * (TAU * t).sin()
        })
        .unwrap();
        let before = a.compose(&perturbed).sub(&id).c0_norm();
        let refined = invert_refine_right(&perturbed, &a).unwrap();
        let after = a.compose(&refined).sub(&id).c0_norm();
        assert!(after < 2e-5, "right residual {before} -> {after}");
        let exact = CircleFunction::rotation(&g, -0.3, SplineOrder::Cubic);
        assert!(invert_refine_right(&exact, &a)
            .unwrap()
            .max_abs_diff(&exact) < 1e-14);
    }

    #[test]
    fn expansion_ceiling_for_rotation_is_one() {
        let g = Grid::uniform(64);
        let a = CircleFunction::rotation(&g, 0.3, SplineOrder::Cubic);
        let inv = CircleFunction::rotation(&g, -0.3, SplineOrder::Cubic);
        let (beta, _) = expansion_ceiling(&inv, &a).unwrap();
        assert_eq!(beta, 1.0);
    }

    #[test]
    fn coho_refinement_improves_a_perturbed_inverse() {
        let g = Grid::uniform(256);
        // nonlinear map so that β ≥ 2 and the mixed equation contracts
        let a = diffeo(&g, 0.06);
        let exact = invert_graph(&a).unwrap();
        assert!(invert_refine_coho(&exact, &a)
            .unwrap()
            .max_abs_diff(&exact) < 1e-7);
        let noise = CircleFunction::from_fn(g.clone(), 0, SplineOrder::Cubic, |t| {
            1e-3 * (2.0 * TAU * t).cos()
        })
        .unwrap();
        let perturbed = exact.add(&noise);
        let before = inversion_defect(&a, &perturbed);
        let refined = invert_refine_coho(&perturbed, &a).unwrap();
        let after = inversion_defect(&a, &refined);
        assert!(after < before / 10.0, "coho refinement {before} -> {after}");
    }

    #[test]
    fn best_inverse_beats_every_single_method() {
        let g = Grid::uniform(256);
        let a = diffeo(&g, 0.05);
        let graph = invert_graph(&a).unwrap();
        let noise = CircleFunction::from_fn(g.clone(), 0, SplineOrder::Cubic, |t| {
            5e-4 * (TAU * t).sin()
        })
        .unwrap();
        let prev = graph.add(&noise);
        let best = best_inverse(&a, Some(&prev)).unwrap();
        let d = inversion_defect(&a, &best);
        assert!(d <= inversion_defect(&a, &graph) + 1e-15);
        assert!(d <= inversion_defect(&a, &prev));
        assert!(d < 1e-8);
    }
}
