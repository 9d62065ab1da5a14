//! Continuation of invariant circles and foliations along a family
//! parameter: adaptive step length with exact halving on rejection, grid
//! doubling and spline-order lowering driven by measured regularity,
//! fiber-degree raising with validity-radius estimates, and drift
//! tracking at a prescribed rotation number.

use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::maps::{PlanarMap, SpaceMap};
use crate::newton::{self, residual_field, residual_norm, NewtonOptions};
use crate::newton3::{residual_field3, residual_norm3, solve_invariance3};
use crate::param::{Parameterization, Parameterization3};
use crate::spline::SplineOrder;
use crate::util;

/// Fiber radii are probed up to this cap when estimating the domain of
/// validity; families whose truncation defect vanishes identically (for
/// example any family acting affinely on the fibers) report the cap.
const DELTA_CAP: f64 = 1e6;
/// Hölder exponents below these values switch the interpolation to
/// quadratic and linear splines; the margin below the nominal
/// thresholds 2 and 1 keeps measurement noise on smooth solutions from
/// downgrading them.
const HOLDER_QUADRATIC: f64 = 1.7;
const HOLDER_LINEAR: f64 = 0.9;
/// Weighted-average window length for the rotation number in records.
const ROTATION_SAMPLES: usize = 10_000;
/// Rotation-number mismatch tolerated by prescribed-rotation tracking.
const ROT_TOL: f64 = 1e-10;
/// Solve budget of the drift root-finder per continuation step.
const ROT_MAX_ITER: usize = 60;

/// One row of a continuation run log.
///
/// Rejected attempts keep their diagnostics empty; the reason a run
/// ended is recorded in the `note` of its last row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuationRecord {
    /// Continuation-parameter value attempted at this step.
    pub eps: f64,
    /// Every named family parameter at `eps`.
    pub params: Vec<(String, f64)>,
    /// Grid size.
    pub n: usize,
    /// Fiber-expansion degree (the larger one in 3-D).
    pub l: usize,
    /// Polynomial degree of the interpolating splines.
    pub spline_degree: usize,
    /// `X^{r,δ}` residual norms of the accepted solution, r = 0, 1, 2.
    pub residual_x0: Option<f64>,
    pub residual_x1: Option<f64>,
    pub residual_x2: Option<f64>,
    /// Weighted-Birkhoff rotation number of the circle dynamics.
    pub rotation_number: Option<f64>,
    /// Minimum angle between the tangent and stable bundles.
    pub min_bundle_angle: Option<f64>,
    /// Whether the step was accepted.
    pub accepted: bool,
    /// Parameter increment attempted at this step (0 at the path start).
    pub step_size: f64,
    /// Why a step failed, what adaptation ran, or why the run ended.
    pub note: String,
}

/// Step control and adaptation settings of a continuation run.
#[derive(Debug, Clone)]
pub struct ContinuationOptions {
    /// First attempted parameter increment.
    pub step_init: f64,
    /// Increments below this end the run.
    pub step_min: f64,
    /// Increments never exceed this.
    pub step_max: f64,
    /// Growth factor applied to the increment after an accepted step.
    pub growth: f64,
    /// `X^{0,δ}` residual a solution must reach to be accepted.
    pub tolerance: f64,
    /// Inner solver settings; its tolerance is clamped to `tolerance`.
    pub newton: NewtonOptions,
    /// Grids never grow beyond this size.
    pub grid_max: usize,
    /// C¹ solution-norm growth relative to the last refinement that
    /// triggers grid doubling.
    pub norm_growth: f64,
    /// Largest knot-value second difference of the circle's second
    /// component tolerated before the grid doubles.
    pub irregularity_threshold: f64,
    /// Lower the spline order when the measured Hölder exponent drops.
    pub adaptive_spline: bool,
    /// Seed each step with the first-order predictor instead of the
    /// frozen previous solution.
    pub first_order_predictor: bool,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            step_init: 1e-3,
            step_min: 1e-8,
            step_max: 1e-2,
            growth: 1.3,
            tolerance: 1e-11,
            newton: NewtonOptions {
                tolerance: 1e-11,
                max_iterations: 12,
                ..NewtonOptions::default()
            },
            grid_max: 1 << 16,
            norm_growth: 2.0,
            irregularity_threshold: 1e-3,
            adaptive_spline: false,
            first_order_predictor: false,
        }
    }
}

/// Spline order mandated by a measured Hölder exponent, if lower than
/// the current one. Orders are only ever lowered: interpolating rough
/// profiles with high-order splines overshoots near developing corners.
pub fn spline_for_regularity(alpha: f64, current: SplineOrder) -> Option<SplineOrder> {
    let target = if alpha < HOLDER_LINEAR {
        SplineOrder::Linear
    } else if alpha < HOLDER_QUADRATIC {
        SplineOrder::Quadratic
    } else {
        return None;
    };
    (target.degree() < current.degree()).then_some(target)
}

/// Max cyclic second difference of the knot values' periodic part; it
/// scales like `h²·f″` on resolved data, so against a fixed threshold
/// it flags under-resolution of a profile with growing curvature.
fn second_difference_max(f: &crate::circlefn::CircleFunction) -> f64 {
    let pts = f.grid().points();
    let idx = f.index() as f64;
    let v: Vec<f64> = f.values().iter().zip(pts).map(|(v, t)| v - idx * t).collect();
    let n = v.len();
    (0..n)
        .map(|i| (v[(i + 1) % n] - 2.0 * v[i] + v[(i + n - 1) % n]).abs())
        .fold(0.0, f64::max)
}

fn record_for<M: PlanarMap>(
    map: &M,
    p: &Parameterization,
    step: f64,
    note: String,
    delta: f64,
) -> ContinuationRecord {
    let e = residual_field(map, p);
    ContinuationRecord {
        eps: map.param(),
        params: map.describe().iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        n: p.grid().len(),
        l: p.degree(),
        spline_degree: p.order().degree(),
        residual_x0: Some(residual_norm(&e, 0, delta)),
        residual_x1: Some(residual_norm(&e, 1, delta)),
        residual_x2: Some(residual_norm(&e, 2, delta)),
        rotation_number: Some(analysis::rotation_number_weighted(&p.a, ROTATION_SAMPLES, 2)),
        min_bundle_angle: Some(analysis::min_bundle_angle(p).min_angle),
        accepted: true,
        step_size: step,
        note,
    }
}

fn rejection_record<M: PlanarMap>(map: &M, p: &Parameterization, step: f64, why: String) -> ContinuationRecord {
    ContinuationRecord {
        eps: map.param(),
        params: map.describe().iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        n: p.grid().len(),
        l: p.degree(),
        spline_degree: p.order().degree(),
        residual_x0: None,
        residual_x1: None,
        residual_x2: None,
        rotation_number: None,
        min_bundle_angle: None,
        accepted: false,
        step_size: step,
        note: why,
    }
}

/// Post-acceptance adaptation: lowers the spline order when the
/// measured regularity of the circle's second component drops, then
/// doubles the grid when the C¹ norm grew past `norm_growth`× its value
/// at the last refinement or the second-difference indicator flags
/// under-resolution. Each change re-solves and reverts on failure.
fn adapt<M: PlanarMap>(
    map: &M,
    p: &mut Parameterization,
    norm_ref: &mut f64,
    opts: &ContinuationOptions,
    nopts: &NewtonOptions,
) -> Vec<String> {
    let mut notes = Vec::new();
    if opts.adaptive_spline {
        let alpha = analysis::holder_exponent(p.w2.coeff(0));
        if let Some(target) = spline_for_regularity(alpha, p.order()) {
            if let Ok(cand) = p.with_order(target) {
                if let Ok((pn, stats)) = newton::solve_invariance(map, &cand, nopts) {
                    if stats.final_residual <= opts.tolerance {
                        *p = pn;
                        notes.push(format!(
                            "spline degree lowered to {} (Hölder {alpha:.2})",
                            target.degree()
                        ));
                    }
                }
            }
        }
    }
    let n = p.grid().len();
    let c1 = p.solution_norm(1, nopts.delta);
    let irr = second_difference_max(p.w2.coeff(0));
    if 2 * n <= opts.grid_max && (c1 > opts.norm_growth * *norm_ref || irr > opts.irregularity_threshold) {
        let fine = Grid::uniform(2 * n);
        if let Ok(cand) = p.resample(&fine) {
            if let Ok((pn, stats)) = newton::solve_invariance(map, &cand, nopts) {
                if stats.final_residual <= opts.tolerance {
                    *p = pn;
                    *norm_ref = p.solution_norm(1, nopts.delta).max(1.0);
                    notes.push(format!("grid doubled to {}", 2 * n));
                }
            }
        }
    }
    notes
}

/// Walks the family parameter from `path.0` to `path.1`, re-solving at
/// every step and logging one record per attempt.
///
/// Accepted steps grow the increment by `growth` up to `step_max`;
/// rejected ones halve it exactly, and increments below `step_min` end
/// the run (the last record says so). `on_accept` sees every accepted
/// record together with its solution, in order. A zero-length path
/// yields the single record of the re-solved start.
pub fn continue_family<M: PlanarMap>(
    map: &M,
    start: &Parameterization,
    path: (f64, f64),
    opts: &ContinuationOptions,
    mut on_accept: impl FnMut(&ContinuationRecord, &Parameterization),
) -> Result<(Vec<ContinuationRecord>, Parameterization)> {
    let (eps0, eps1) = path;
    if !(eps0.is_finite() && eps1.is_finite()) {
        return Err(Error::invalid("path endpoints must be finite"));
    }
    if !(opts.step_init > 0.0 && opts.step_min > 0.0 && opts.growth >= 1.0) {
        return Err(Error::invalid("step controls must be positive and growth at least 1"));
    }
    let mut nopts = opts.newton.clone();
    nopts.tolerance = nopts.tolerance.min(opts.tolerance);

    // Re-solve at the start so the first record obeys the acceptance bound.
    let m0 = map.with_param(eps0);
    let (mut p, stats) = newton::solve_invariance(&m0, start, &nopts)?;
    if stats.final_residual > opts.tolerance {
        return Err(Error::SolveFailed {
            reason: "the start of the path does not meet the acceptance tolerance".into(),
            residual: stats.final_residual,
            iterations: stats.steps.len(),
        });
    }
    let mut records = vec![record_for(&m0, &p, 0.0, String::new(), nopts.delta)];
    on_accept(records.last().unwrap(), &p);
    if eps0 == eps1 {
        records.last_mut().unwrap().note = "completed: zero-length path".into();
        return Ok((records, p));
    }

    let dir = if eps1 > eps0 { 1.0 } else { -1.0 };
    let mut eps = eps0;
    let mut step = opts.step_init.min(opts.step_max);
    let mut norm_ref = p.solution_norm(1, nopts.delta).max(1.0);
    loop {
        if eps == eps1 {
            records.last_mut().unwrap().note = "completed".into();
            break;
        }
        if step < opts.step_min {
            records.last_mut().unwrap().note = format!(
                "step size underflow: increment fell below {} at parameter {eps}",
                opts.step_min
            );
            break;
        }
        let remaining = (eps1 - eps) * dir;
        let h = step.min(remaining);
        let trial = if h == remaining { eps1 } else { eps + h * dir };
        let mt = map.with_param(trial);
        let seed = if opts.first_order_predictor {
            predictor_first_order(&map.with_param(eps), &p, trial - eps, &nopts)
                .unwrap_or_else(|_| p.clone())
        } else {
            p.clone()
        };
        match newton::solve_invariance(&mt, &seed, &nopts) {
            Ok((pn, stats)) if stats.final_residual <= opts.tolerance => {
                eps = trial;
                p = pn;
                let notes = adapt(&mt, &mut p, &mut norm_ref, opts, &nopts);
                records.push(record_for(&mt, &p, h, notes.join("; "), nopts.delta));
                on_accept(records.last().unwrap(), &p);
                step = (step * opts.growth).min(opts.step_max);
                if p.total_norm(nopts.delta) > nopts.divergence_cap {
                    records.last_mut().unwrap().note =
                        "solution norm reached the divergence guard".into();
                    break;
                }
            }
            outcome => {
                let stalled = matches!(outcome, Err(Error::CohoNoConvergence { .. }));
                let why = match outcome {
                    Ok((_, stats)) => format!(
                        "rejected: residual {:.3e} above the acceptance tolerance",
                        stats.final_residual
                    ),
                    Err(err) => format!("rejected: {err}"),
                };
                records.push(rejection_record(&mt, &p, h, why));
                // A transport stall means the grid, not the step length, is
                // the bottleneck: refine once at the current parameter. The
                // step still halves, keeping the rejection rule uniform.
                if stalled && 2 * p.grid().len() <= opts.grid_max {
                    let fine = Grid::uniform(2 * p.grid().len());
                    if let Ok(cand) = p.resample(&fine) {
                        if let Ok((pn, st)) =
                            newton::solve_invariance(&map.with_param(eps), &cand, &nopts)
                        {
                            if st.final_residual <= opts.tolerance {
                                p = pn;
                                norm_ref = p.solution_norm(1, nopts.delta).max(1.0);
                                let note = &mut records.last_mut().unwrap().note;
                                note.push_str("; grid doubled after the transport stall");
                            }
                        }
                    }
                }
                step /= 2.0;
            }
        }
    }
    Ok((records, p))
}

/// First-order continuation predictor. The parameter derivative of the
/// solution triple solves the same linear system as a Newton step, with
/// the family's parameter velocity `∂f/∂ε ∘ W` in place of the defect;
/// `h` is the signed parameter increment to extrapolate over.
pub fn predictor_first_order<M: PlanarMap>(
    map: &M,
    p: &Parameterization,
    h: f64,
    opts: &NewtonOptions,
) -> Result<Parameterization> {
    if h == 0.0 {
        return Ok(p.clone());
    }
    let d = map.dparam_field(&p.w1, &p.w2);
    let lin = newton::solve_linearized(p, &d, opts)?;
    newton::apply_correction(p, &lin, h)
}

/// Raises the fiber degree one order at a time, re-solving after each
/// extension, and estimates for every degree the largest fiber radius
/// `δ` at which the `X^{r,δ}` defect of the once-extended expansion
/// stays below `tol`. The defect of the extension is dominated by its
/// first truncated order, so the radius grows with the degree whenever
/// the fiber coefficients decay. Returns the final solution and the
/// `(degree, radius)` schedule, radii capped at `1e6`.
pub fn increase_order<M: PlanarMap>(
    map: &M,
    start: &Parameterization,
    degree_end: usize,
    tol: f64,
    r: usize,
    delta_start: f64,
    opts: &NewtonOptions,
) -> Result<(Parameterization, Vec<(usize, f64)>)> {
    let mut p = start.clone();
    let mut schedule = Vec::new();
    for degree in start.degree()..=degree_end {
        if degree > p.degree() {
            let (pn, _) = newton::solve_invariance(map, &p.with_degree(degree), opts)?;
            p = pn;
        }
        let e = residual_field(map, &p.with_degree(degree + 1));
        let radius = util::largest_passing(
            |delta| residual_norm(&e, r, delta) <= tol,
            delta_start,
            DELTA_CAP,
            1e-3,
        )?;
        schedule.push((degree, radius));
    }
    Ok((p, schedule))
}

/// Tracks the drift that holds the rotation number of the circle
/// dynamics at `omega` while a second parameter walks through
/// `k_values`; `family(k, drift)` builds the map. Each value solves a
/// scalar root problem in the drift with a bracketing Brent iteration
/// seeded from the last accepted solution. A bracket that cannot be
/// established — for example when a phase-locked window has swallowed
/// the target — is a `RootFind` error.
pub fn continue_fixed_rotation<M: PlanarMap>(
    family: impl Fn(f64, f64) -> M,
    start: &Parameterization,
    omega: f64,
    k_values: &[f64],
    drift0: f64,
    opts: &ContinuationOptions,
) -> Result<(Vec<ContinuationRecord>, Parameterization)> {
    let mut nopts = opts.newton.clone();
    nopts.tolerance = nopts.tolerance.min(opts.tolerance);
    let mut p = start.clone();
    let mut drift = drift0;
    let mut prev_k = k_values.first().copied().unwrap_or(0.0);
    let mut records = Vec::new();
    for &k in k_values {
        let eval = |d: f64, seed: &Parameterization| -> Result<(Parameterization, f64)> {
            let m = family(k, d);
            let (pn, stats) = newton::solve_invariance(&m, seed, &nopts)?;
            if stats.final_residual > opts.tolerance {
                return Err(Error::SolveFailed {
                    reason: "drift tracking: step above the acceptance tolerance".into(),
                    residual: stats.final_residual,
                    iterations: stats.steps.len(),
                });
            }
            let rot = analysis::rotation_number_weighted(&pn.a, ROTATION_SAMPLES, 2);
            Ok((pn, rot))
        };

        let (pc, rot_c) = eval(drift, &p)?;
        if (rot_c - omega).abs() > ROT_TOL {
            // Expand a bracket around the current drift; the rotation
            // number increases with it away from locked windows.
            let mut width = 2.0 * (rot_c - omega).abs().max(1e-6);
            let (lo, hi) = loop {
                if width > 0.2 {
                    return Err(Error::RootFind(format!(
                        "rotation bracket lost near k = {k}: no drift within ±0.2 of \
                         {drift} crosses rotation number {omega}"
                    )));
                }
                let (_, rot_lo) = eval(drift - width, &pc)?;
                let (_, rot_hi) = eval(drift + width, &pc)?;
                if (rot_lo - omega).signum() != (rot_hi - omega).signum() {
                    break (drift - width, drift + width);
                }
                width *= 2.0;
            };
            let cache = std::cell::RefCell::new(pc.clone());
            let root = util::brent(
                |d| {
                    let seed = cache.borrow().clone();
                    let (pn, rot) = eval(d, &seed)?;
                    *cache.borrow_mut() = pn;
                    Ok(rot - omega)
                },
                lo,
                hi,
                1e-12,
                ROT_MAX_ITER,
            )?;
            let (pn, rot) = eval(root, &cache.borrow())?;
            if (rot - omega).abs() > ROT_TOL {
                return Err(Error::RootFind(format!(
                    "drift tracking stalled at k = {k}: rotation number misses the \
                     target by {:.3e}",
                    (rot - omega).abs()
                )));
            }
            drift = root;
            p = pn;
        } else {
            p = pc;
        }
        let m = family(k, drift);
        records.push(record_for(&m, &p, (k - prev_k).abs(), String::new(), nopts.delta));
        prev_k = k;
    }
    if let Some(last) = records.last_mut() {
        last.note = "completed".into();
    }
    Ok((records, p))
}

fn record_for3<M: SpaceMap>(
    map: &M,
    p: &Parameterization3,
    step: f64,
    note: String,
    delta: f64,
) -> ContinuationRecord {
    let e = residual_field3(map, p);
    let (lx, ly) = p.degrees();
    ContinuationRecord {
        eps: map.param(),
        params: map.describe().iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        n: p.grid().len(),
        l: lx.max(ly),
        spline_degree: p.order().degree(),
        residual_x0: Some(residual_norm3(&e, 0, delta)),
        residual_x1: Some(residual_norm3(&e, 1, delta)),
        residual_x2: Some(residual_norm3(&e, 2, delta)),
        rotation_number: Some(analysis::rotation_number_weighted(&p.a, ROTATION_SAMPLES, 2)),
        min_bundle_angle: Some(analysis::min_bundle_angle3(p).min_angle),
        accepted: true,
        step_size: step,
        note,
    }
}

/// Parameter walk for 3-D families: the same step control as
/// [`continue_family`] on a fixed grid, without predictors or
/// adaptation.
pub fn continue_family3<M: SpaceMap>(
    map: &M,
    start: &Parameterization3,
    path: (f64, f64),
    opts: &ContinuationOptions,
    mut on_accept: impl FnMut(&ContinuationRecord, &Parameterization3),
) -> Result<(Vec<ContinuationRecord>, Parameterization3)> {
    let (eps0, eps1) = path;
    if !(eps0.is_finite() && eps1.is_finite()) {
        return Err(Error::invalid("path endpoints must be finite"));
    }
    let mut nopts = opts.newton.clone();
    nopts.tolerance = nopts.tolerance.min(opts.tolerance);

    let m0 = map.with_param(eps0);
    let (mut p, stats) = solve_invariance3(&m0, start, &nopts)?;
    if stats.final_residual > opts.tolerance {
        return Err(Error::SolveFailed {
            reason: "the start of the path does not meet the acceptance tolerance".into(),
            residual: stats.final_residual,
            iterations: stats.steps.len(),
        });
    }
    let mut records = vec![record_for3(&m0, &p, 0.0, String::new(), nopts.delta)];
    on_accept(records.last().unwrap(), &p);
    if eps0 == eps1 {
        records.last_mut().unwrap().note = "completed: zero-length path".into();
        return Ok((records, p));
    }

    let dir = if eps1 > eps0 { 1.0 } else { -1.0 };
    let mut eps = eps0;
    let mut step = opts.step_init.min(opts.step_max);
    loop {
        if eps == eps1 {
            records.last_mut().unwrap().note = "completed".into();
            break;
        }
        if step < opts.step_min {
            records.last_mut().unwrap().note = format!(
                "step size underflow: increment fell below {} at parameter {eps}",
                opts.step_min
            );
            break;
        }
        let remaining = (eps1 - eps) * dir;
        let h = step.min(remaining);
        let trial = if h == remaining { eps1 } else { eps + h * dir };
        let mt = map.with_param(trial);
        match solve_invariance3(&mt, &p, &nopts) {
            Ok((pn, stats)) if stats.final_residual <= opts.tolerance => {
                eps = trial;
                p = pn;
                records.push(record_for3(&mt, &p, h, String::new(), nopts.delta));
                on_accept(records.last().unwrap(), &p);
                step = (step * opts.growth).min(opts.step_max);
            }
            outcome => {
                let why = match outcome {
                    Ok((_, stats)) => format!(
                        "rejected: residual {:.3e} above the acceptance tolerance",
                        stats.final_residual
                    ),
                    Err(err) => format!("rejected: {err}"),
                };
                let (lx, ly) = p.degrees();
                records.push(ContinuationRecord {
                    eps: mt.param(),
                    params: mt.describe().iter().map(|&(k, v)| (k.to_string(), v)).collect(),
                    n: p.grid().len(),
                    l: lx.max(ly),
                    spline_degree: p.order().degree(),
                    residual_x0: None,
                    residual_x1: None,
                    residual_x2: None,
                    rotation_number: None,
                    min_bundle_angle: None,
                    accepted: false,
                    step_size: h,
                    note: why,
                });
                step /= 2.0;
            }
        }
    }
    Ok((records, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::Dst;
    use crate::taylor::TaylorField;

    const GOLDEN: f64 = 0.618_033_988_749_894_9;

    fn solved(gamma: f64, eta: f64, k: f64, n: usize, l: usize, tol: f64) -> (Dst, Parameterization) {
        let map = Dst::new(gamma, eta, k).unwrap();
        let seed = map
            .with_param(0.0)
            .exact_unperturbed(&Grid::uniform(n), SplineOrder::Cubic, l, 1.0)
            .unwrap();
        let opts = NewtonOptions {
            tolerance: tol,
            ..NewtonOptions::default()
        };
        let (p, stats) = newton::solve_invariance(&map, &seed, &opts).unwrap();
        assert!(stats.converged);
        (map, p)
    }

    #[test]
    fn zero_length_paths_yield_one_record_and_keep_the_solution() {
        let (map, p) = solved(0.5, 0.3, 0.1, 128, 2, 1e-14);
        let mut seen = 0usize;
        let (records, out) =
            continue_family(&map, &p, (0.1, 0.1), &ContinuationOptions::default(), |_, _| {
                seen += 1
            })
            .unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(seen, 1);
        assert!(records[0].accepted);
        assert_eq!(records[0].step_size, 0.0);
        assert!(records[0].note.contains("completed"));
        // Already converged, so the re-solve returns the input untouched.
        assert_eq!(out.w2.coeff(0).values(), p.w2.coeff(0).values());
        assert_eq!(out.w1.coeff(2).values(), p.w1.coeff(2).values());
    }

    #[test]
    fn a_short_path_completes_with_monotone_parameters_and_capped_steps() {
        let (_, p0) = solved(0.5, 0.3, 0.0, 128, 2, 1e-14);
        let map = Dst::new(0.5, 0.3, 0.0).unwrap();
        let opts = ContinuationOptions {
            step_max: 0.02,
            ..ContinuationOptions::default()
        };
        let mut accepted_seen = 0usize;
        let (records, p) = continue_family(&map, &p0, (0.0, 0.12), &opts, |rec, _| {
            assert!(rec.accepted);
            accepted_seen += 1;
        })
        .unwrap();
        assert_eq!(records.last().unwrap().note, "completed");
        assert!(records.iter().all(|r| r.accepted));
        assert_eq!(accepted_seen, records.len());
        assert_eq!(records.last().unwrap().eps, 0.12);
        for pair in records.windows(2) {
            assert!(pair[1].eps > pair[0].eps);
            assert!(pair[1].step_size <= opts.step_max * (1.0 + 1e-12));
            if pair[0].step_size > 0.0 {
                assert!(pair[1].step_size <= pair[0].step_size * opts.growth * (1.0 + 1e-12));
            }
        }
        for rec in &records {
            assert!(rec.residual_x0.unwrap() <= opts.tolerance);
            let rot = rec.rotation_number.unwrap();
            assert!(rot > 0.0 && rot < 1.0);
            assert!(rec.min_bundle_angle.unwrap() > 0.1);
            assert_eq!(rec.params[2].0, "k");
        }
        let e = residual_field(&map.with_param(0.12), &p);
        assert!(residual_norm(&e, 0, 1e-3) <= opts.tolerance);
    }

    #[test]
    fn rejected_steps_halve_exactly_until_underflow() {
        let (map, p) = solved(0.5, 0.3, 0.1, 128, 2, 1e-14);
        let mut opts = ContinuationOptions::default();
        // A zero-iteration solver accepts only already-converged seeds, so
        // the start re-solve passes and every forward attempt fails.
        opts.newton.max_iterations = 0;
        let (records, out) = continue_family(&map, &p, (0.1, 0.2), &opts, |_, _| {}).unwrap();
        assert!(records[0].accepted);
        let rejected: Vec<_> = records.iter().skip(1).collect();
        assert!(rejected.len() > 10);
        assert!(rejected.iter().all(|r| !r.accepted));
        assert!(rejected.iter().all(|r| r.residual_x0.is_none()));
        for pair in rejected.windows(2) {
            assert_eq!(pair[1].step_size * 2.0, pair[0].step_size);
        }
        assert!(records.last().unwrap().note.contains("underflow"));
        assert_eq!(out.w2.coeff(0).values(), p.w2.coeff(0).values());
    }

    /// Forwards everything to the inner map but reports no parameter
    /// dependence, so the continuation tangent must vanish.
    #[derive(Clone)]
    struct Pinned(Dst);

    impl PlanarMap for Pinned {
        fn apply(&self, x: f64, y: f64) -> (f64, f64) {
            self.0.apply(x, y)
        }
        fn invert(&self, x: f64, y: f64) -> (f64, f64) {
            self.0.invert(x, y)
        }
        fn jacobian(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
            self.0.jacobian(x, y)
        }
        fn apply_field(&self, w1: &TaylorField, w2: &TaylorField) -> (TaylorField, TaylorField) {
            self.0.apply_field(w1, w2)
        }
        fn param(&self) -> f64 {
            self.0.param()
        }
        fn with_param(&self, value: f64) -> Self {
            Pinned(self.0.with_param(value))
        }
        fn dparam_field(&self, _w1: &TaylorField, w2: &TaylorField) -> (TaylorField, TaylorField) {
            (w2.scale(0.0), w2.scale(0.0))
        }
    }

    #[test]
    fn the_predictor_is_exact_at_zero_increment_and_for_pinned_families() {
        let (map, p) = solved(0.5, 0.3, 0.1, 128, 2, 1e-14);
        let opts = NewtonOptions::default();
        let same = predictor_first_order(&map, &p, 0.0, &opts).unwrap();
        assert_eq!(same.w2.coeff(1).values(), p.w2.coeff(1).values());

        let frozen = predictor_first_order(&Pinned(map), &p, 0.02, &opts).unwrap();
        for j in 0..=p.degree() {
            let (a, b) = (frozen.w1.coeff(j), p.w1.coeff(j));
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-13);
            }
        }
        for (x, y) in frozen.lambda.values().iter().zip(p.lambda.values()) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn the_first_order_predictor_improves_the_frozen_seed() {
        let (map, p) = solved(0.5, 0.3, 0.1, 256, 3, 1e-14);
        let h = 0.02;
        let ahead = map.with_param(map.param() + h);
        let frozen = residual_norm(&residual_field(&ahead, &p), 0, 1e-3);
        let moved = predictor_first_order(&map, &p, h, &NewtonOptions::default()).unwrap();
        let predicted = residual_norm(&residual_field(&ahead, &moved), 0, 1e-3);
        assert!(
            predicted < 0.5 * frozen,
            "predictor: {predicted:.3e}, frozen: {frozen:.3e}"
        );
    }

    #[test]
    fn raising_the_fiber_degree_extends_the_validity_radius() {
        let (map, p) = solved(0.5, 0.3, 0.2, 256, 2, 1e-12);
        let opts = NewtonOptions {
            tolerance: 1e-12,
            ..NewtonOptions::default()
        };
        let (out, schedule) = increase_order(&map, &p, 6, 1e-8, 0, 1e-6, &opts).unwrap();
        assert_eq!(out.degree(), 6);
        assert_eq!(schedule.len(), 5);
        assert_eq!(schedule[0].0, 2);
        assert_eq!(schedule.last().unwrap().0, 6);
        // The radius grows while the fiber coefficients decay, then
        // saturates; tolerate sub-percent jitter at the plateau.
        for pair in schedule.windows(2) {
            assert!(
                pair[1].1 >= 0.98 * pair[0].1,
                "radius shrank: {:?} -> {:?}",
                pair[0],
                pair[1]
            );
        }
        assert!(schedule.last().unwrap().1 > 4.0 * schedule[0].1);
    }

    #[test]
    fn affine_fiber_action_reports_the_radius_cap() {
        let (map, p) = solved(0.5, 0.3, 0.0, 128, 1, 1e-14);
        let (out, schedule) =
            increase_order(&map, &p, 3, 1e-8, 0, 1e-3, &NewtonOptions::default()).unwrap();
        assert!(schedule.iter().all(|&(_, radius)| radius == DELTA_CAP));
        // The extension of an affine family stays exactly zero.
        assert_eq!(out.w2.coeff(3).values().iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn fixed_rotation_tracking_holds_omega_and_recovers_the_drift_at_zero_kick() {
        let (_, p0) = solved(0.5, GOLDEN, 0.0, 128, 2, 1e-14);
        let family = |k: f64, drift: f64| Dst::new(0.5, drift, k).unwrap();
        let (records, p) = continue_fixed_rotation(
            family,
            &p0,
            GOLDEN,
            &[0.0, 0.03, 0.06],
            GOLDEN,
            &ContinuationOptions::default(),
        )
        .unwrap();
        assert_eq!(records.len(), 3);
        // Without a kick the drift IS the rotation number.
        assert_eq!(records[0].params[1], ("eta".to_string(), GOLDEN));
        for rec in &records {
            assert!((rec.rotation_number.unwrap() - GOLDEN).abs() <= 2.0 * ROT_TOL);
            assert!(rec.residual_x0.unwrap() <= 1e-11);
            assert!((rec.params[1].1 - GOLDEN).abs() < 0.05);
        }
        assert_eq!(records.last().unwrap().note, "completed");
        let e = residual_field(&family(0.06, records[2].params[1].1), &p);
        assert!(residual_norm(&e, 0, 1e-3) <= 1e-11);
    }

    #[test]
    fn under_resolved_grids_double_on_acceptance() {
        let (map, p) = solved(0.5, 0.3, 0.2, 64, 2, 1e-7);
        let opts = ContinuationOptions {
            tolerance: 1e-7,
            newton: NewtonOptions {
                tolerance: 1e-7,
                ..NewtonOptions::default()
            },
            grid_max: 256,
            irregularity_threshold: 1.6e-4,
            ..ContinuationOptions::default()
        };
        let (records, out) = continue_family(&map, &p, (0.2, 0.24), &opts, |_, _| {}).unwrap();
        assert!(records.iter().any(|r| r.note.contains("grid doubled")));
        assert_eq!(out.grid().len(), 128);
        assert_eq!(records.last().unwrap().note, "completed");
        let last = records.last().unwrap();
        assert!(last.residual_x0.unwrap() <= opts.tolerance);
        assert_eq!(last.n, out.grid().len());
    }

    #[test]
    fn doubling_the_grid_exposes_only_interpolation_error() {
        // The knot residual (~3e-10 at this tolerance) sits well below the
        // mid-knot interpolation defect of an N = 64 representation, so
        // resampling exposes the spline error alone.
        let (map, p) = solved(0.5, 0.3, 0.24, 64, 2, 1e-7);
        let fine = p.resample(&Grid::uniform(128)).unwrap();
        let res = residual_norm(&residual_field(&map, &fine), 0, 1e-3);
        // Cubic interpolation misses a resolved profile mid-knot by about
        // (5/384)·h⁴·f⁗, and h⁴f⁗ is the max cyclic fourth difference.
        let mut est = 0.0f64;
        for f in [&p.w1, &p.w2] {
            for j in 0..=p.degree() {
                est = est.max(fourth_difference_max(f.coeff(j)));
            }
        }
        est = est.max(fourth_difference_max(&p.a)).max(fourth_difference_max(&p.lambda));
        est *= 5.0 / 384.0;
        assert!(res <= 10.0 * est, "residual {res:.3e}, spline error {est:.3e}");
        assert!(res > est / 1e3, "doubling residual implausibly small");
    }

    fn fourth_difference_max(f: &crate::circlefn::CircleFunction) -> f64 {
        let pts = f.grid().points();
        let idx = f.index() as f64;
        let v: Vec<f64> = f.values().iter().zip(pts).map(|(v, t)| v - idx * t).collect();
        let n = v.len();
        (0..n)
            .map(|i| {
                (v[(i + 2) % n] - 4.0 * v[(i + 1) % n] + 6.0 * v[i] - 4.0 * v[(i + n - 1) % n]
                    + v[(i + n - 2) % n])
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn regularity_thresholds_only_ever_lower_the_order() {
        use SplineOrder::*;
        assert_eq!(spline_for_regularity(1.95, Cubic), None);
        assert_eq!(spline_for_regularity(1.5, Cubic), Some(Quadratic));
        assert_eq!(spline_for_regularity(0.5, Cubic), Some(Linear));
        assert_eq!(spline_for_regularity(1.5, Quadratic), None);
        assert_eq!(spline_for_regularity(0.5, Quadratic), Some(Linear));
        assert_eq!(spline_for_regularity(0.5, Linear), None);
        assert_eq!(spline_for_regularity(2.0, Cubic), None);
    }

    #[test]
    fn three_dimensional_paths_complete_with_records() {
        use crate::maps::Faf3;
        let map = Faf3::new(0.618033, 0.0, 0.4, 0.7).unwrap();
        let p0 = map
            .exact_unperturbed(&Grid::uniform(128), SplineOrder::Cubic, (2, 2), 1.0)
            .unwrap();
        let opts = ContinuationOptions {
            tolerance: 1e-10,
            newton: NewtonOptions {
                tolerance: 1e-10,
                ..NewtonOptions::default()
            },
            step_init: 5e-3,
            ..ContinuationOptions::default()
        };
        let mut count = 0usize;
        let (records, p) = continue_family3(&map, &p0, (0.0, 0.02), &opts, |_, _| count += 1).unwrap();
        assert_eq!(records.last().unwrap().note, "completed");
        assert!(records.iter().all(|r| r.accepted));
        assert_eq!(count, records.len());
        assert_eq!(records.last().unwrap().eps, 0.02);
        // The internal rotation number starts at the drift and detunes
        // with the perturbation strength.
        assert!((records[0].rotation_number.unwrap() - 0.618033).abs() < 1e-9);
        for rec in &records {
            assert!(rec.residual_x0.unwrap() <= opts.tolerance);
            assert!((rec.rotation_number.unwrap() - 0.618033).abs() < 0.01);
            assert!(rec.min_bundle_angle.unwrap() > 0.1);
            assert_eq!(rec.params[0].0, "alpha");
        }
        let e = residual_field3(&map.with_param(0.02), &p);
        assert!(residual_norm3(&e, 0, 1e-3) <= opts.tolerance);
    }
}
