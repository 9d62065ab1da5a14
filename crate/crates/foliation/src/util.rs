//! Scalar root finding and line search used by continuation and the
//! breakdown fit.

use crate::error::{Error, Result};

/// Brent's method on a bracketing interval: `f(a)` and `f(b)` must have
/// opposite signs. Converges to `|x − x*| ≤ tol` (plus machine slack) in at
/// most `max_iter` function evaluations.
pub fn brent(
    mut f: impl FnMut(f64) -> Result<f64>,
    a: f64,
    b: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let (mut xa, mut xb) = (a, b);
    let mut fa = f(xa)?;
    let mut fb = f(xb)?;
    if fa == 0.0 {
        return Ok(xa);
    }
    if fb == 0.0 {
        return Ok(xb);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::RootFind(format!(
            "no sign change on [{a}, {b}]: f = ({fa:.3e}, {fb:.3e})"
        )));
    }
    // Keep |f(xb)| ≤ |f(xa)|; xc is the previous xb.
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut xa, &mut xb);
        std::mem::swap(&mut fa, &mut fb);
    }
    let (mut xc, mut fc) = (xa, fa);
    let mut mflag = true;
    let mut xd = xc;
    for _ in 0..max_iter {
        if fb == 0.0 || (xb - xa).abs() <= tol.max(4.0 * f64::EPSILON * xb.abs()) {
            return Ok(xb);
        }
        let mut s = if fa != fc && fb != fc {
            // inverse quadratic interpolation
            xa * fb * fc / ((fa - fb) * (fa - fc))
                + xb * fa * fc / ((fb - fa) * (fb - fc))
                + xc * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            // secant
            xb - fb * (xb - xa) / (fb - fa)
        };
        let mid = (3.0 * xa + xb) / 4.0;
        let between = (s > mid && s < xb) || (s < mid && s > xb);
        let step_prev = if mflag { (xb - xc).abs() } else { (xc - xd).abs() };
        if !between || (s - xb).abs() >= step_prev / 2.0 || step_prev < tol {
            s = (xa + xb) / 2.0;
            mflag = true;
        } else {
            mflag = false;
        }
        let fs = f(s)?;
        xd = xc;
        xc = xb;
        fc = fb;
        if fa.signum() != fs.signum() {
            xb = s;
            fb = fs;
        } else {
            xa = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut xa, &mut xb);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Err(Error::RootFind(format!(
        "no convergence in {max_iter} iterations; bracket [{xa}, {xb}]"
    )))
}

/// Minimizes a unimodal function on `[a, b]` by golden-section search;
/// returns the abscissa of the minimum to within `tol`.
pub fn golden_min(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    (lo + hi) / 2.0
}

/// Largest `x ∈ [start, cap]` with `pred(x)` true, assuming `pred` is true
/// at `start` and monotone (true below some threshold, false above). Grows
/// by doubling, then bisects to relative width `rel_tol`. Returns `cap`
/// when the predicate holds all the way up.
pub fn largest_passing(
    mut pred: impl FnMut(f64) -> bool,
    start: f64,
    cap: f64,
    rel_tol: f64,
) -> Result<f64> {
    assert!(start > 0.0 && cap >= start && rel_tol > 0.0);
    if !pred(start) {
        return Err(Error::RootFind(format!(
            "predicate already fails at the starting point {start}"
        )));
    }
    let mut lo = start;
    let mut hi = start;
    loop {
        let next = (hi * 2.0).min(cap);
        if pred(next) {
            lo = next;
            hi = next;
            if next >= cap {
                return Ok(cap);
            }
        } else {
            hi = next;
            break;
        }
    }
    while (hi - lo) > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_simple_roots() {
        let r = brent(|x| Ok(x * x - 2.0), 0.0, 2.0, 1e-14, 100).unwrap();
        assert!((r - 2.0_f64.sqrt()).abs() < 1e-12);
        let r = brent(|x| Ok(x.cos() - x), 0.0, 1.0, 1e-14, 100).unwrap();
        assert!((r.cos() - r).abs() < 1e-13);
    }

    #[test]
    fn brent_rejects_unbracketed_input() {
        assert!(brent(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-12, 100).is_err());
    }

    #[test]
    fn brent_converges_within_budget_on_a_flat_tail() {
        // f(x) = (x − 0.3)³ has a triple root: slow for secant steps, the
        // bisection fallback must keep the budget bounded.
        let mut count = 0usize;
        let r = brent(
            |x| {
                count += 1;
                Ok((x - 0.3_f64).powi(3))
            },
            0.0,
            1.0,
            1e-12,
            200,
        )
        .unwrap();
        assert!((r - 0.3).abs() < 1e-10);
        assert!(count <= 120, "evaluations: {count}");
    }

    #[test]
    fn golden_min_locates_quadratic_minimum() {
        // Near the minimum the quadratic's variation sinks below the
        // rounding floor of the +3 offset, so ~√ε·√3 ≈ 2e-8 accuracy is
        // the honest limit regardless of the interval tolerance.
        let m = golden_min(|x| (x - 0.7) * (x - 0.7) + 3.0, 0.0, 2.0, 1e-10);
        assert!((m - 0.7).abs() < 1e-6);
    }

    #[test]
    fn largest_passing_matches_threshold() {
        let x = largest_passing(|x| x <= 37.5, 1.0, 1e6, 1e-12).unwrap();
        assert!((x - 37.5).abs() < 1e-9 * 37.5);
        // predicate true everywhere → cap reported
        let x = largest_passing(|_| true, 1.0, 1e6, 1e-12).unwrap();
        assert_eq!(x, 1e6);
    }
}
