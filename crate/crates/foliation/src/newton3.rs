//! Quasi-Newton iteration for the 3-D invariance equation
//! `f∘W(θ,s₁,s₂) = W(a(θ), λ₁(θ)s₁, λ₂(θ)s₂)`.
//!
//! The structure mirrors the 2-D solver in [`crate::newton`]: corrections
//! are written as `ΔW = DW·Γ` in the pushed-forward frame, the frame solve
//! `ẽ = −(DW∘R)⁻¹e` proceeds order by order through a per-knot 3×3
//! adjugate, and each order of `Γ` solves one scalar transport equation.
//! Three gauge coefficients are set to zero — `Γ₁⁽⁰'⁰⁾`, `Γ₂⁽¹'⁰⁾` and
//! `Γ₃⁽⁰'¹⁾` — absorbing the corresponding errors into the circle dynamics
//! and the two fiber multipliers: `Δa = −M₁⁽⁰'⁰⁾`, `Δλ₁ = −M₂⁽¹'⁰⁾`,
//! `Δλ₂ = −M₃⁽⁰'¹⁾`. The transport factors are `λ₁ˣλ₂ʸ/Da` (angular),
//! `λ₁ˣ⁻¹λ₂ʸ` and `λ₁ˣλ₂ʸ⁻¹` (fiber); whichever orientation of each
//! equation contracts is chosen automatically, so stable, unstable and
//! saddle circles are all handled. When neither orientation contracts the
//! two multipliers are resonant at that order and the step fails loudly.

use rayon::prelude::*;

use crate::circlefn::CircleFunction;
use crate::coho;
use crate::error::{Error, Result};
use crate::inverse;
use crate::maps::SpaceMap;
use crate::newton::NewtonOptions;
use crate::param::Parameterization3;
use crate::taylor2::TaylorField2;

/// Smallest |det| of the order-zero frame tolerated at any knot.
const FRAME_FLOOR: f64 = 1e-10;
/// Pointwise floor for divisions by `Da`, `λ₁` and `λ₂`.
const DIV_FLOOR: f64 = 1e-12;
/// Relative slack allowed when re-verifying a transport solve.
const VERIFY_SLACK: f64 = 1.01;

/// Diagnostics of one scalar transport solve inside a 3-D step.
#[derive(Debug, Clone)]
pub struct TransportStat3 {
    /// 1 for `Γ₁`, 2 for `Γ₂`, 3 for `Γ₃`.
    pub component: u8,
    pub order: (usize, usize),
    pub reversed: bool,
    pub doublings: usize,
    pub defect: f64,
}

/// Record of one 3-D quasi-Newton step; norms are `X^{r,δ}` for r = 0,1,2.
#[derive(Debug, Clone)]
pub struct StepStats3 {
    pub residual_before: [f64; 3],
    pub residual_after: [f64; 3],
    pub correction_w: f64,
    pub correction_a: f64,
    pub correction_lambda: f64,
    pub frame_det_min: f64,
    pub inverse_defect: f64,
    pub transport: Vec<TransportStat3>,
}

/// History of a full 3-D solve.
#[derive(Debug, Clone)]
pub struct SolveStats3 {
    pub steps: Vec<StepStats3>,
    pub converged: bool,
    pub sublinear_flag: bool,
    pub at_floor: bool,
    pub final_residual: f64,
}

/// `e = f∘W − W∘(a, λ₁s₁, λ₂s₂)`, the invariance-equation defect.
pub fn residual_field3<M: SpaceMap>(map: &M, p: &Parameterization3) -> [TaylorField2; 3] {
    let img = map.apply_field(&[p.w1.clone(), p.w2.clone(), p.w3.clone()]);
    let pull = |w: &TaylorField2| w.compose_right(&p.a, &p.lambda1, &p.lambda2);
    [
        img[0].sub(&pull(&p.w1)),
        img[1].sub(&pull(&p.w2)),
        img[2].sub(&pull(&p.w3)),
    ]
}

/// Largest-component `X^{r,δ}` norm of a residual triple.
pub fn residual_norm3(e: &[TaylorField2; 3], r: usize, delta: f64) -> f64 {
    e.iter()
        .map(|c| c.xr_delta_norm(r, delta))
        .fold(0.0, f64::max)
}

fn norms3(e: &[TaylorField2; 3], delta: f64) -> [f64; 3] {
    [
        residual_norm3(e, 0, delta),
        residual_norm3(e, 1, delta),
        residual_norm3(e, 2, delta),
    ]
}

/// `DW` composed with `(a, λ₁s₁, λ₂s₂)`: `[row][col]` with rows =
/// components and columns = `(∂θ, ∂s₁, ∂s₂)`.
pub fn frame_at_image3(p: &Parameterization3) -> [[TaylorField2; 3]; 3] {
    let push = |w: &TaylorField2| {
        [
            w.deriv_theta()
                .compose_right(&p.a, &p.lambda1, &p.lambda2),
            w.deriv_s1().compose_right(&p.a, &p.lambda1, &p.lambda2),
            w.deriv_s2().compose_right(&p.a, &p.lambda1, &p.lambda2),
        ]
    };
    [push(&p.w1), push(&p.w2), push(&p.w3)]
}

fn coeff_at(tf: &TaylorField2, x: usize, y: usize, i: usize) -> f64 {
    let (d1, d2) = tf.degrees();
    if x <= d1 && y <= d2 {
        tf.coeff(x, y).values()[i]
    } else {
        0.0
    }
}

fn etilde3_with_det(
    frame: &[[TaylorField2; 3]; 3],
    e: &[TaylorField2; 3],
) -> Result<([TaylorField2; 3], f64)> {
    let grid = e[0].grid().clone();
    let order = e[0].order();
    let b = e[0].b();
    let n = grid.len();
    let (d1, d2) = e[0].degrees();
    assert!(
        e.iter().all(|c| c.index() == 0),
        "the invariance defect must be periodic"
    );

    // Per-knot inverse of the order-(0,0) frame via the adjugate.
    let b0: Vec<Vec<&[f64]>> = (0..3)
        .map(|r| (0..3).map(|c| frame[r][c].coeff(0, 0).values()).collect())
        .collect();
    let mut inv = vec![[[0.0f64; 3]; 3]; n];
    let mut det_min = f64::INFINITY;
    let mut det_argmin = 0;
    for i in 0..n {
        let m = [
            [b0[0][0][i], b0[0][1][i], b0[0][2][i]],
            [b0[1][0][i], b0[1][1][i], b0[1][2][i]],
            [b0[2][0][i], b0[2][1][i], b0[2][2][i]],
        ];
        let cof = |r: usize, c: usize| {
            let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
            let (c1, c2) = ((c + 1) % 3, (c + 2) % 3);
            m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]
        };
        let det = m[0][0] * cof(0, 0) + m[0][1] * cof(0, 1) + m[0][2] * cof(0, 2);
        if det.abs() < det_min {
            det_min = det.abs();
            det_argmin = i;
        }
        if det.abs() >= FRAME_FLOOR {
            for (r, row) in inv[i].iter_mut().enumerate() {
                for (c, entry) in row.iter_mut().enumerate() {
                    // adj = cofactor transpose
                    *entry = cof(c, r) / det;
                }
            }
        }
    }
    if det_min < FRAME_FLOOR {
        return Err(Error::FrameDegenerate {
            theta: grid.points()[det_argmin],
            min_abs: det_min,
        });
    }

    let mut out = vec![vec![vec![[0.0f64; 3]; n]; d2 + 1]; d1 + 1];
    for x in 0..=d1 {
        for y in 0..=d2 {
            for i in 0..n {
                let mut rhs = [
                    -coeff_at(&e[0], x, y, i),
                    -coeff_at(&e[1], x, y, i),
                    -coeff_at(&e[2], x, y, i),
                ];
                for p in 0..=x {
                    for q in 0..=y {
                        if (p, q) == (0, 0) {
                            continue;
                        }
                        let prev = out[x - p][y - q][i];
                        for (r, rhs_r) in rhs.iter_mut().enumerate() {
                            *rhs_r -= coeff_at(&frame[r][0], p, q, i) * prev[0]
                                + coeff_at(&frame[r][1], p, q, i) * prev[1]
                                + coeff_at(&frame[r][2], p, q, i) * prev[2];
                        }
                    }
                }
                let a = &inv[i];
                for r in 0..3 {
                    out[x][y][i][r] = a[r][0] * rhs[0] + a[r][1] * rhs[1] + a[r][2] * rhs[2];
                }
            }
        }
    }
    let build = |component: usize| {
        let coeffs = out
            .iter()
            .map(|row| {
                row.iter()
                    .map(|vals| {
                        let v = vals.iter().map(|k| k[component]).collect();
                        CircleFunction::from_parts(grid.clone(), v, 0, order)
                    })
                    .collect()
            })
            .collect();
        TaylorField2::from_parts(coeffs, b)
    };
    Ok(([build(0), build(1), build(2)], det_min))
}

/// Solves `(DW∘R)·ẽ = −e` order by order through the per-knot adjugate of
/// the order-(0,0) frame.
pub fn etilde3(
    frame: &[[TaylorField2; 3]; 3],
    e: &[TaylorField2; 3],
) -> Result<[TaylorField2; 3]> {
    etilde3_with_det(frame, e).map(|(fields, _)| fields)
}

/// Solves one scalar transport equation `φ = l·(φ∘a) + η` and, when asked,
/// independently re-measures its defect in the orientation it was driven in.
fn solve_transport(
    l: &CircleFunction,
    a: &CircleFunction,
    a_inv: &CircleFunction,
    eta: &CircleFunction,
    opts: &NewtonOptions,
    component: u8,
    order: (usize, usize),
) -> Result<(CircleFunction, TransportStat3)> {
    let sol = coho::solve_auto(l, a, a_inv, eta, &opts.coho)?;
    let defect = if opts.verify_transport {
        let measured = if sol.reversed {
            let (l_rev, eta_rev) = coho::reversed_data(l, a_inv, eta)?;
            coho::residual(&sol.phi, &l_rev, a_inv, &eta_rev).c0_norm()
        } else {
            coho::residual(&sol.phi, l, a, eta).c0_norm()
        };
        let allowed = opts.coho.tolerance * VERIFY_SLACK;
        if measured > allowed {
            return Err(Error::CohoNoConvergence {
                achieved: measured,
                passes: sol.doublings,
                tolerance: allowed,
            });
        }
        measured
    } else {
        sol.residual
    };
    Ok((
        sol.phi,
        TransportStat3 {
            component,
            order,
            reversed: sol.reversed,
            doublings: sol.doublings,
            defect,
        },
    ))
}

/// Assembles a `TaylorField2` from per-order transport solutions, with one
/// gauge coefficient pinned to zero.
fn assemble_gamma(
    solved: Vec<((usize, usize), CircleFunction)>,
    deg: (usize, usize),
    grid: &crate::grid::Grid,
    order: crate::spline::SplineOrder,
    b: f64,
) -> TaylorField2 {
    let mut coeffs =
        vec![vec![CircleFunction::zero(grid, order); deg.1 + 1]; deg.0 + 1];
    for ((x, y), phi) in solved {
        coeffs[x][y] = phi;
    }
    TaylorField2::from_parts(coeffs, b)
}

/// One 3-D iteration: residual, frame solve, the three gauge choices, the
/// transport solves for every remaining order, and the frame update.
pub fn newton_step3<M: SpaceMap>(
    map: &M,
    p: &Parameterization3,
    opts: &NewtonOptions,
) -> Result<(Parameterization3, StepStats3)> {
    let deg = p.degrees();
    assert!(deg.0 >= 1 && deg.1 >= 1, "leaf expansions need degree at least 1");
    let b = p.b();
    let grid = p.grid().clone();
    let order = p.order();

    let e = residual_field3(map, p);
    let residual_before = norms3(&e, opts.delta);

    // Inexact-Newton control, as in the 2-D step.
    let mut opts = opts.clone();
    opts.coho.tolerance = (residual_before[0] * 1e-4)
        .max(25.0 * f64::EPSILON * residual_before[0].max(1.0));
    let opts = &opts;

    let frame = frame_at_image3(p);
    let (et, frame_det_min) = etilde3_with_det(&frame, &e)?;

    let da = p.a.derivative();
    let dl1 = p.lambda1.derivative();
    let dl2 = p.lambda2.derivative();
    let mut l1_pows = Vec::with_capacity(deg.0 + 1);
    l1_pows.push(CircleFunction::constant(&grid, 1.0, order));
    for x in 1..=deg.0 {
        l1_pows.push(l1_pows[x - 1].mul(&p.lambda1));
    }
    let mut l2_pows = Vec::with_capacity(deg.1 + 1);
    l2_pows.push(CircleFunction::constant(&grid, 1.0, order));
    for y in 1..=deg.1 {
        l2_pows.push(l2_pows[y - 1].mul(&p.lambda2));
    }
    let orders_without = |skip: (usize, usize)| -> Vec<(usize, usize)> {
        (0..=deg.0)
            .flat_map(|x| (0..=deg.1).map(move |y| (x, y)))
            .filter(|&o| o != skip)
            .collect()
    };

    // Angular component: gauge Γ₁⁽⁰'⁰⁾ = 0, Δa = −ẽ₁⁽⁰'⁰⁾; remaining
    // orders solve φ = (λ₁ˣλ₂ʸ/Da)·(φ∘a) + ẽ₁⁽ˣ'ʸ⁾/Da.
    let delta_a = et[0].coeff(0, 0).neg();
    let solved1 = orders_without((0, 0))
        .into_par_iter()
        .map(|(x, y)| {
            let l = l1_pows[x].mul(&l2_pows[y]).try_div(&da, DIV_FLOOR)?;
            let eta = et[0].coeff(x, y).try_div(&da, DIV_FLOOR)?;
            let (phi, stat) = solve_transport(&l, &p.a, &p.a_inv, &eta, opts, 1, (x, y))?;
            Ok(((x, y), phi, stat))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut transport = Vec::with_capacity(3 * (deg.0 + 1) * (deg.1 + 1));
    let mut parts = Vec::with_capacity(solved1.len());
    for (o, phi, stat) in solved1 {
        parts.push((o, phi));
        transport.push(stat);
    }
    let gamma1 = assemble_gamma(parts, deg, &grid, order, b);

    // First fiber component: M₂ = ẽ₂ − Dλ₁·s₁·Γ₁; gauge Γ₂⁽¹'⁰⁾ = 0 puts
    // the (1,0) error into λ₁; remaining orders solve
    // φ = λ₁ˣ⁻¹λ₂ʸ·(φ∘a) + M₂⁽ˣ'ʸ⁾/λ₁.
    let m2 = et[1].sub(&gamma1.mul_s1().mul_circle(&dl1)).truncated(deg);
    let delta_l1 = m2.coeff(1, 0).scale(-b);
    let solved2 = orders_without((1, 0))
        .into_par_iter()
        .map(|(x, y)| {
            let l = if x >= 1 {
                l1_pows[x - 1].mul(&l2_pows[y])
            } else {
                l2_pows[y].try_div(&p.lambda1, DIV_FLOOR)?
            };
            let eta = m2.coeff(x, y).try_div(&p.lambda1, DIV_FLOOR)?;
            let (phi, stat) = solve_transport(&l, &p.a, &p.a_inv, &eta, opts, 2, (x, y))?;
            Ok(((x, y), phi, stat))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut parts = Vec::with_capacity(solved2.len());
    for (o, phi, stat) in solved2 {
        parts.push((o, phi));
        transport.push(stat);
    }
    let gamma2 = assemble_gamma(parts, deg, &grid, order, b);

    // Second fiber component: M₃ = ẽ₃ − Dλ₂·s₂·Γ₁; gauge Γ₃⁽⁰'¹⁾ = 0 puts
    // the (0,1) error into λ₂; remaining orders solve
    // φ = λ₁ˣλ₂ʸ⁻¹·(φ∘a) + M₃⁽ˣ'ʸ⁾/λ₂.
    let m3 = et[2].sub(&gamma1.mul_s2().mul_circle(&dl2)).truncated(deg);
    let delta_l2 = m3.coeff(0, 1).scale(-b);
    let solved3 = orders_without((0, 1))
        .into_par_iter()
        .map(|(x, y)| {
            let l = if y >= 1 {
                l1_pows[x].mul(&l2_pows[y - 1])
            } else {
                l1_pows[x].try_div(&p.lambda2, DIV_FLOOR)?
            };
            let eta = m3.coeff(x, y).try_div(&p.lambda2, DIV_FLOOR)?;
            let (phi, stat) = solve_transport(&l, &p.a, &p.a_inv, &eta, opts, 3, (x, y))?;
            Ok(((x, y), phi, stat))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut parts = Vec::with_capacity(solved3.len());
    for (o, phi, stat) in solved3 {
        parts.push((o, phi));
        transport.push(stat);
    }
    let gamma3 = assemble_gamma(parts, deg, &grid, order, b);

    // ΔW = DW·Γ expressed back in ambient coordinates.
    let correct = |w: &TaylorField2| {
        w.deriv_theta()
            .mul_to(&gamma1, deg)
            .add(&w.deriv_s1().mul_to(&gamma2, deg))
            .add(&w.deriv_s2().mul_to(&gamma3, deg))
    };
    let dw1 = correct(&p.w1);
    let dw2 = correct(&p.w2);
    let dw3 = correct(&p.w3);

    let w1 = p.w1.add(&dw1);
    let w2 = p.w2.add(&dw2);
    let w3 = p.w3.add(&dw3);
    let a = p.a.add(&delta_a);
    if !a.is_monotone_lift() {
        return Err(Error::NotMonotone(
            "updated circle dynamics lost monotonicity".into(),
        ));
    }
    let lambda1 = p.lambda1.add(&delta_l1);
    let lambda2 = p.lambda2.add(&delta_l2);
    let a_inv = inverse::best_inverse(&a, Some(&p.a_inv))?;
    let next = Parameterization3::new(w1, w2, w3, a, a_inv, lambda1, lambda2)?;

    let e_after = residual_field3(map, &next);
    let stats = StepStats3 {
        residual_before,
        residual_after: norms3(&e_after, opts.delta),
        correction_w: dw1
            .xr_delta_norm(0, opts.delta)
            .max(dw2.xr_delta_norm(0, opts.delta))
            .max(dw3.xr_delta_norm(0, opts.delta)),
        correction_a: delta_a.c0_norm(),
        correction_lambda: delta_l1.c0_norm().max(delta_l2.c0_norm()),
        frame_det_min,
        inverse_defect: next.inverse_defect(),
        transport,
    };
    Ok((next, stats))
}

/// Runs 3-D quasi-Newton steps until the `X^{0,δ}` residual meets the
/// tolerance; guards and floor handling as in the 2-D loop.
pub fn solve_invariance3<M: SpaceMap>(
    map: &M,
    start: &Parameterization3,
    opts: &NewtonOptions,
) -> Result<(Parameterization3, SolveStats3)> {
    let mut p = start.clone();
    let mut steps: Vec<StepStats3> = Vec::new();
    let mut weak_run = 0usize;
    let mut sublinear_flag = false;
    let mut res = residual_norm3(&residual_field3(map, &p), 0, opts.delta);
    loop {
        if !res.is_finite() {
            return Err(Error::SolveFailed {
                reason: "residual is not finite".into(),
                residual: res,
                iterations: steps.len(),
            });
        }
        if res <= opts.tolerance {
            let final_residual = res;
            return Ok((
                p,
                SolveStats3 {
                    steps,
                    converged: true,
                    sublinear_flag,
                    at_floor: false,
                    final_residual,
                },
            ));
        }
        if p.total_norm(opts.delta) > opts.divergence_cap {
            return Err(Error::SolveFailed {
                reason: "solution norm exceeded the divergence guard".into(),
                residual: res,
                iterations: steps.len(),
            });
        }
        if steps.len() >= opts.max_iterations {
            return Err(Error::SolveFailed {
                reason: "iteration cap reached".into(),
                residual: res,
                iterations: steps.len(),
            });
        }
        let (next, stat) = newton_step3(map, &p, opts)?;
        let res_next = stat.residual_after[0];
        let floor_band = 200.0 * f64::EPSILON * next.total_norm(opts.delta).max(1.0);
        if res_next > opts.tolerance && res <= floor_band && res_next >= 0.5 * res {
            if res_next < res {
                steps.push(stat);
                p = next;
                res = res_next;
            }
            let final_residual = res;
            return Ok((
                p,
                SolveStats3 {
                    steps,
                    converged: true,
                    sublinear_flag,
                    at_floor: true,
                    final_residual,
                },
            ));
        }
        if res_next > 0.5 * res && res > 100.0 * opts.tolerance {
            weak_run += 1;
            if weak_run >= 3 {
                sublinear_flag = true;
            }
        } else {
            weak_run = 0;
        }
        steps.push(stat);
        p = next;
        res = res_next;
    }
}
