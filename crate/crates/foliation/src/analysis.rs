//! Rotation-number computation, phase-lock detection, bundle-angle and
//! breakdown diagnostics, periodic-orbit eigenvalues, and isochron
//! globalization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circlefn::CircleFunction;
use crate::error::{Error, Result};
use crate::maps::PlanarMap;
use crate::param::{Parameterization, Parameterization3};
use crate::util;

/// Exponent in the bump weight of the weighted Birkhoff average.
pub const WEIGHT_POWER: i32 = 2;
/// Two orbit/image values belong to one cluster below this diameter.
pub const CLUSTER_DIAMETER: f64 = 1e-6;
/// Distinct clusters must be separated by at least this gap.
pub const CLUSTER_GAP: f64 = 1e-3;
/// Largest lock period reported by [`detect_rational_lock`].
pub const MAX_LOCK_PERIOD: usize = 64;

/// `exp(−1/(t(1−t))^p)` on `(0,1)`, zero outside: a C^∞ bump whose
/// vanishing derivatives at the endpoints drive superpolynomial convergence
/// of the weighted Birkhoff average for Diophantine rotations.
fn bump_weight(t: f64, p: i32) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        (-1.0 / (t * (1.0 - t)).powi(p)).exp()
    }
}

fn weighted_average(increments: impl Iterator<Item = f64>, m: usize, p: i32) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (n, inc) in increments.enumerate().take(m) {
        let w = bump_weight(n as f64 / m as f64, p);
        num += w * inc;
        den += w;
    }
    num / den
}

/// Rotation number of a circle map by the weighted Birkhoff average of its
/// lift increments, starting from `x₀ = 0`.
///
/// Increments are evaluated at fractional parts so no precision is lost to
/// a growing lift. For dynamics conjugate to a Diophantine rotation the
/// error decays faster than any power of `1/m`; under phase locking the
/// convergence degrades to `O(1/m)`, which [`detect_rational_lock`] turns
/// into a usable signal.
pub fn rotation_number_weighted(a: &CircleFunction, m: usize, p: i32) -> f64 {
    assert!(m >= 100, "the weighted average needs at least 100 samples");
    let mut x = 0.0f64;
    weighted_average(
        std::iter::repeat_with(move || {
            let inc = a.eval(x) - x;
            x = (x + inc).rem_euclid(1.0);
            inc
        }),
        m,
        p,
    )
}

/// Rotation number of the angular coordinate of a planar-map orbit, by the
/// same weighted average. The orbit starts at `start`, runs `transient`
/// steps to settle on the attractor, then accumulates `m` increments.
pub fn map_rotation_number<M: PlanarMap>(
    map: &M,
    start: (f64, f64),
    transient: usize,
    m: usize,
    p: i32,
) -> f64 {
    let (mut x, mut y) = start;
    x = x.rem_euclid(1.0);
    for _ in 0..transient {
        let (nx, ny) = map.apply(x, y);
        x = nx.rem_euclid(1.0);
        y = ny;
    }
    weighted_average(
        std::iter::repeat_with(move || {
            let (nx, ny) = map.apply(x, y);
            let inc = nx - x;
            x = nx.rem_euclid(1.0);
            y = ny;
            inc
        }),
        m,
        p,
    )
}

/// Rotation numbers for a batch of maps (e.g. a Devil's-staircase scan),
/// computed in parallel.
pub fn rotation_staircase<M: PlanarMap>(
    maps: &[M],
    start: (f64, f64),
    transient: usize,
    m: usize,
) -> Vec<f64> {
    maps.par_iter()
        .map(|f| map_rotation_number(f, start, transient, m, WEIGHT_POWER))
        .collect()
}

/// Groups values on the circle into clusters of diameter below `diam`,
/// requiring inter-cluster gaps above `gap`; returns cluster centers or
/// `None` when the separation fails or more than [`MAX_LOCK_PERIOD`]
/// clusters form.
fn circle_clusters(values: &[f64], diam: f64, gap: f64) -> Option<Vec<f64>> {
    let mut v: Vec<f64> = values.iter().map(|x| x.rem_euclid(1.0)).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        return None;
    }
    // Break the circle at the largest gap, then split at gaps > diam.
    let mut largest = (v[0] + 1.0 - v[n - 1], 0);
    for i in 1..n {
        let g = v[i] - v[i - 1];
        if g > largest.0 {
            largest = (g, i);
        }
    }
    if largest.0 <= gap {
        return None;
    }
    v.rotate_left(largest.1);
    let mut clusters: Vec<Vec<f64>> = vec![vec![v[0]]];
    for w in v.windows(2) {
        let g = (w[1] - w[0]).rem_euclid(1.0);
        if g > diam {
            if g <= gap {
                return None;
            }
            clusters.push(Vec::new());
        }
        clusters.last_mut().unwrap().push(w[1]);
    }
    if clusters.len() > MAX_LOCK_PERIOD {
        return None;
    }
    for c in &clusters {
        let lo = c[0];
        let hi = c[c.len() - 1];
        if (hi - lo).rem_euclid(1.0) > diam {
            return None;
        }
    }
    Some(
        clusters
            .iter()
            .map(|c| {
                let lo = c[0];
                let mean =
                    c.iter().map(|x| (x - lo).rem_euclid(1.0)).sum::<f64>() / c.len() as f64;
                (lo + mean).rem_euclid(1.0)
            })
            .collect(),
    )
}

/// Winding number and minimal period of the orbit of `x0` under `a`,
/// confirmed by return to the start within `tol`.
fn orbit_lock(a: &CircleFunction, x0: f64, tol: f64) -> Option<(i64, usize)> {
    let mut x = x0.rem_euclid(1.0);
    let mut winding = 0.0f64;
    for q in 1..=MAX_LOCK_PERIOD {
        let inc = a.eval(x) - x;
        winding += inc;
        x = (x + inc).rem_euclid(1.0);
        let d = (x - x0).rem_euclid(1.0);
        if d.min(1.0 - d) < tol {
            let p = winding.round();
            if (winding - p).abs() < 1e-4 {
                let g = gcd(p.abs() as u64, q as u64).max(1);
                return Some((p as i64 / g as i64, q / g as usize));
            }
        }
    }
    None
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Detects a rational rotation number `p/q` from finitely many limit
/// values of the dynamics; `None` means no lock was visible at this `m`.
///
/// Two mechanisms are checked. Generic locking collapses `a^{∘m}` of the
/// whole knot grid onto the attracting periodic orbit, making the image
/// numerically piecewise constant: its values cluster (diameter below
/// `tol`, gaps above `10³·tol`). A rigid rational rotation does not
/// collapse the grid, but the orbit of a single point visits exactly `q`
/// values, caught by the same clustering on an orbit tail. In both cases
/// the winding of one cluster's orbit over its period fixes `p`.
pub fn detect_rational_lock(a: &CircleFunction, m: usize, tol: f64) -> Option<(i64, usize)> {
    let gap = tol * 1e3;
    // Grid collapse: iterate every knot m times (fractional parts only).
    let mut image: Vec<f64> = a.grid().points().to_vec();
    for _ in 0..m {
        for x in image.iter_mut() {
            *x = a.eval(*x).rem_euclid(1.0);
        }
    }
    if let Some(centers) = circle_clusters(&image, tol, gap) {
        if let Some(lock) = orbit_lock(a, centers[0], gap) {
            return Some(lock);
        }
    }
    // Rigid rotation: cluster the tail of a single orbit.
    let mut x = 0.0f64;
    let tail_len = 512.min(m / 2).max(8);
    let mut tail = Vec::with_capacity(tail_len);
    for n in 0..m {
        x = a.eval(x).rem_euclid(1.0);
        if n + tail_len >= m {
            tail.push(x);
        }
    }
    let centers = circle_clusters(&tail, tol, gap)?;
    orbit_lock(a, centers[0], gap)
}

/// Pointwise angles between the circle tangent and the leaf direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleAngle {
    /// Smallest angle over the knots, in radians (`0 ≤ angle ≤ π/2`).
    pub min_angle: f64,
    /// Knot where the minimum is attained.
    pub theta_argmin: f64,
    /// `(θ, angle)` per knot, for plotting.
    pub profile: Vec<(f64, f64)>,
}

/// Angle profile between the tangent bundle `T(θ) = ∂_θ W(θ,0)` and the
/// stable bundle `S(θ) = ∂_s W(θ,0)`; its minimum quantifies how far the
/// foliation is from the bundle-collapse breakdown.
///
/// Directions are scale-free, so the result is invariant under fiber
/// rescaling (`rescale_s`) exactly at the knots.
pub fn min_bundle_angle(p: &Parameterization) -> BundleAngle {
    let t1 = p.w1.coeff(0).derivative();
    let t2 = p.w2.coeff(0).derivative();
    let s1 = p.w1.coeff(1);
    let s2 = p.w2.coeff(1);
    let mut min_angle = f64::INFINITY;
    let mut theta_argmin = 0.0;
    let mut profile = Vec::with_capacity(p.grid().len());
    for (i, &theta) in p.grid().points().iter().enumerate() {
        let t = (t1.values()[i], t2.values()[i]);
        let s = (s1.values()[i], s2.values()[i]);
        let dot = t.0 * s.0 + t.1 * s.1;
        let nt = (t.0 * t.0 + t.1 * t.1).sqrt();
        let ns = (s.0 * s.0 + s.1 * s.1).sqrt();
        let angle = (dot.abs() / (nt * ns)).clamp(0.0, 1.0).acos();
        profile.push((theta, angle));
        if angle < min_angle {
            min_angle = angle;
            theta_argmin = theta;
        }
    }
    BundleAngle { min_angle, theta_argmin, profile }
}

/// 3-D analog of [`min_bundle_angle`]: the smaller of the two angles
/// between the circle tangent `∂_θ W(θ,0,0)` and each stable direction
/// `∂_{s₁}W`, `∂_{s₂}W`.
pub fn min_bundle_angle3(p: &Parameterization3) -> BundleAngle {
    let t: Vec<_> = [&p.w1, &p.w2, &p.w3]
        .iter()
        .map(|w| w.coeff(0, 0).derivative())
        .collect();
    let mut min_angle = f64::INFINITY;
    let mut theta_argmin = 0.0;
    let mut profile = Vec::with_capacity(p.grid().len());
    for (i, &theta) in p.grid().points().iter().enumerate() {
        let tv = [t[0].values()[i], t[1].values()[i], t[2].values()[i]];
        let nt = tv.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut angle = f64::INFINITY;
        for (x, y) in [(1, 0), (0, 1)] {
            let sv = [
                p.w1.coeff(x, y).values()[i],
                p.w2.coeff(x, y).values()[i],
                p.w3.coeff(x, y).values()[i],
            ];
            let ns = sv.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = tv.iter().zip(&sv).map(|(a, b)| a * b).sum();
            angle = angle.min((dot.abs() / (nt * ns)).clamp(0.0, 1.0).acos());
        }
        profile.push((theta, angle));
        if angle < min_angle {
            min_angle = angle;
            theta_argmin = theta;
        }
    }
    BundleAngle { min_angle, theta_argmin, profile }
}

/// Power-law fit of the bundle-angle collapse near breakdown.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BreakdownFit {
    /// Scaling constant `α` in `angle = α(k_crit − k)^β`.
    pub alpha: f64,
    /// Scaling exponent `β > 0`.
    pub beta_exp: f64,
    /// Parameter value where the fitted angle vanishes.
    pub k_crit: f64,
    /// Root-mean-square misfit of `ln angle`.
    pub residual: f64,
}

fn loglog_fit(samples: &[(f64, f64)], k_crit: f64) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(k, angle) in samples {
        let x = (k_crit - k).ln();
        let y = angle.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mut sse = 0.0;
    for &(k, angle) in samples {
        let r = angle.ln() - (intercept + slope * (k_crit - k).ln());
        sse += r * r;
    }
    (slope, intercept, sse)
}

/// Fits `angle = α(k_crit − k)^β` to minimum-angle samples from the
/// breakdown tail: an outer search over `k_crit` wraps an inner log-log
/// linear regression, which is derivative-free and robust.
///
/// The fitted expression vanishes as `k ↑ k_crit`, so the fit is only
/// meaningful on samples with positive angles below the breakdown.
pub fn fit_breakdown(samples: &[(f64, f64)]) -> Result<BreakdownFit> {
    if samples.len() < 6 {
        return Err(Error::invalid(format!(
            "breakdown fit needs at least 6 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|&(k, angle)| !(k.is_finite() && angle > 0.0)) {
        return Err(Error::invalid("breakdown fit needs positive angles"));
    }
    let k_max = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let k_min = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let span = (k_max - k_min).max(1e-6);
    // Coarse scan of the gap g = k_crit − k_max on a log grid, then
    // golden-section refinement of the unimodal valley around the best cell.
    let (g_lo, g_hi) = (span * 1e-7, span * 10.0);
    let cells = 600;
    let ratio = (g_hi / g_lo).ln() / cells as f64;
    let sse_at = |g: f64| loglog_fit(samples, k_max + g).2;
    let mut best = (f64::INFINITY, g_lo);
    for i in 0..=cells {
        let g = g_lo * (ratio * i as f64).exp();
        let sse = sse_at(g);
        if sse < best.0 {
            best = (sse, g);
        }
    }
    let lo = (best.1 * (-ratio).exp()).max(g_lo);
    let hi = (best.1 * ratio.exp()).min(g_hi);
    let g = util::golden_min(|lg: f64| sse_at(lg.exp()), lo.ln(), hi.ln(), 1e-13).exp();
    let k_crit = k_max + g;
    let (beta_exp, ln_alpha, sse) = loglog_fit(samples, k_crit);
    if beta_exp.is_nan() || beta_exp <= 0.0 {
        return Err(Error::invalid(format!(
            "fitted exponent {beta_exp:.3} is not positive: samples do not follow a vanishing power law"
        )));
    }
    Ok(BreakdownFit {
        alpha: ln_alpha.exp(),
        beta_exp,
        k_crit,
        residual: (sse / samples.len() as f64).sqrt(),
    })
}

/// A periodic orbit with the spectrum of its cycle Jacobian.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicOrbitInfo {
    pub period: usize,
    /// The orbit, angular coordinate reduced mod 1.
    pub points: Vec<(f64, f64)>,
    /// Eigenvalues of the product Jacobian as `(re, im)`, by descending
    /// modulus; complex pairs arise as conjugates.
    pub eigenvalues: [(f64, f64); 2],
    /// Regularity exponent `log λ_weak / log λ_strong`, defined when both
    /// eigenvalues are real in `(0, 1)`: below 1 the attracting circle
    /// through the orbit is not C¹.
    pub r_star: Option<f64>,
}

fn wrap_half(x: f64) -> f64 {
    x - x.round()
}

/// Finds a `q`-periodic orbit by Newton iteration on `f^{∘q}(z) = z`
/// (angular difference taken mod 1) and reports the eigenvalues of the
/// cycle Jacobian.
pub fn periodic_orbit_eigen<M: PlanarMap>(
    map: &M,
    guess: (f64, f64),
    q: usize,
) -> Result<PeriodicOrbitInfo> {
    assert!(q >= 1);
    let orbit_and_jacobian = |z: (f64, f64)| {
        let mut pts = Vec::with_capacity(q);
        let mut j = [[1.0, 0.0], [0.0, 1.0]];
        let (mut x, mut y) = z;
        for _ in 0..q {
            pts.push((x.rem_euclid(1.0), y));
            let dj = map.jacobian(x, y);
            j = [
                [
                    dj[0][0] * j[0][0] + dj[0][1] * j[1][0],
                    dj[0][0] * j[0][1] + dj[0][1] * j[1][1],
                ],
                [
                    dj[1][0] * j[0][0] + dj[1][1] * j[1][0],
                    dj[1][0] * j[0][1] + dj[1][1] * j[1][1],
                ],
            ];
            let (nx, ny) = map.apply(x, y);
            x = nx;
            y = ny;
        }
        (pts, j, (x, y))
    };
    let mut z = guess;
    let mut converged = false;
    for _ in 0..80 {
        let (_, j, fz) = orbit_and_jacobian(z);
        let e = (wrap_half(fz.0 - z.0), fz.1 - z.1);
        if e.0.abs().max(e.1.abs()) < 1e-12 {
            converged = true;
            break;
        }
        let a = [[j[0][0] - 1.0, j[0][1]], [j[1][0], j[1][1] - 1.0]];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det.abs() < 1e-14 || !e.0.is_finite() || !e.1.is_finite() {
            return Err(Error::OrbitNotFound(format!(
                "singular or non-finite Newton system near ({:.6}, {:.6})",
                z.0, z.1
            )));
        }
        let dx = (e.0 * a[1][1] - e.1 * a[0][1]) / det;
        let dy = (e.1 * a[0][0] - e.0 * a[1][0]) / det;
        z = (z.0 - dx, z.1 - dy);
        if !z.0.is_finite() || !z.1.is_finite() || z.1.abs() > 1e6 {
            return Err(Error::OrbitNotFound(format!(
                "Newton diverged from guess ({:.6}, {:.6})",
                guess.0, guess.1
            )));
        }
    }
    if !converged {
        return Err(Error::OrbitNotFound(format!(
            "no q = {q} orbit within 80 Newton steps of ({:.6}, {:.6})",
            guess.0, guess.1
        )));
    }
    let (points, j, _) = orbit_and_jacobian(z);
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let disc = tr * tr - 4.0 * det;
    let eigenvalues: [(f64, f64); 2] = if disc >= 0.0 {
        let r = disc.sqrt();
        let (l1, l2) = ((tr + r) / 2.0, (tr - r) / 2.0);
        if l1.abs() >= l2.abs() {
            [(l1, 0.0), (l2, 0.0)]
        } else {
            [(l2, 0.0), (l1, 0.0)]
        }
    } else {
        let im = (-disc).sqrt() / 2.0;
        [(tr / 2.0, im), (tr / 2.0, -im)]
    };
    let r_star = if disc >= 0.0 {
        let weak = eigenvalues[0].0;
        let strong = eigenvalues[1].0;
        if weak > 0.0 && weak < 1.0 && strong > 0.0 && strong < 1.0 {
            Some(weak.ln() / strong.ln())
        } else {
            None
        }
    } else {
        None
    };
    Ok(PeriodicOrbitInfo { period: q, points, eigenvalues, r_star })
}

/// Seeding strategy for globalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridStrategy {
    /// Seed the local leaf at `θ₀` itself.
    Uniform,
    /// Pre-apply the circle dynamics `n_back` times before seeding, so
    /// that after backward propagation the leaf labels land back on the
    /// original grid; under phase locking this concentrates resolution
    /// near the attracting orbit where the leaves accumulate.
    PhaseLocked,
}

/// Extends local Taylor isochrons by backward iteration of the map.
///
/// For each `θ₀` the local leaf is sampled at `W(θ_seed, s)` for `s` in
/// `s_samples` and pulled back `n_back` times through the analytic map
/// inverse; since leaves map to leaves, the image is the leaf through
/// `a^{−n}(θ_seed)` on an `s`-range enlarged by the inverse contraction.
/// With [`GridStrategy::PhaseLocked`], `θ_seed = a^{∘n_back}(θ₀)`, so the
/// result is the extended leaf through `θ₀` itself.
pub fn globalize_isochrons<M: PlanarMap>(
    map: &M,
    p: &Parameterization,
    theta_list: &[f64],
    n_back: usize,
    s_samples: &[f64],
    strategy: GridStrategy,
) -> Vec<Vec<(f64, f64)>> {
    theta_list
        .par_iter()
        .map(|&theta0| {
            let mut seed = theta0.rem_euclid(1.0);
            if strategy == GridStrategy::PhaseLocked {
                for _ in 0..n_back {
                    seed = p.a.eval(seed).rem_euclid(1.0);
                }
            }
            s_samples
                .iter()
                .map(|&s| {
                    let (mut x, mut y) = p.eval(seed, s);
                    for _ in 0..n_back {
                        let (nx, ny) = map.invert(x, y);
                        x = nx;
                        y = ny;
                    }
                    (x, y)
                })
                .collect()
        })
        .collect()
}

/// How far forward images of one local leaf stray from the next leaf:
/// max over `s` of the distance from `f(W(θ₀,s))` to the curve
/// `W(a(θ₀), ·)`, allowing leaf reparameterization. For a converged
/// solution this is bounded by the invariance residual on the sampled
/// domain.
pub fn leaf_to_leaf_defect<M: PlanarMap>(
    map: &M,
    p: &Parameterization,
    theta0: f64,
    s_samples: &[f64],
) -> f64 {
    let theta1 = p.a.eval(theta0).rem_euclid(1.0);
    let lam = p.lambda.eval(theta0);
    let mut worst = 0.0f64;
    for &s in s_samples {
        let (fx, fy) = {
            let (x, y) = p.eval(theta0, s);
            map.apply(x, y)
        };
        // The angular coordinate lives on the circle: compare mod 1.
        let dist = |sp: f64| {
            let (x, y) = p.eval(theta1, sp);
            (wrap_half(fx - x).powi(2) + (fy - y).powi(2)).sqrt()
        };
        let center = lam * s;
        let w = 0.5 * s.abs() + 0.05;
        let sp = util::golden_min(dist, center - w, center + w, 1e-12);
        worst = worst.max(dist(sp));
    }
    worst
}

/// Hölder/regularity exponent of a periodic function from the dyadic-scale
/// decay of its second differences: `sup_θ |f(θ+h) − 2f(θ) + f(θ−h)| ~ h^α`
/// for `α ≤ 2`. Smooth functions saturate the estimate at 2; values below
/// signal lost regularity (below 1: not C¹).
pub fn holder_exponent(f: &CircleFunction) -> f64 {
    let n = f.len();
    let pts = f.grid().points();
    let idx = f.index() as f64;
    let vals: Vec<f64> = f
        .values()
        .iter()
        .zip(pts)
        .map(|(v, t)| v - idx * t)
        .collect();
    let mut scales = Vec::new();
    let mut stride = 1usize;
    let floor = 1e3 * f64::EPSILON * f.c0_norm().max(1.0);
    while stride <= n / 8 {
        let mut d = 0.0f64;
        for i in 0..n {
            let hi = vals[(i + stride) % n];
            let lo = vals[(i + n - stride) % n];
            d = d.max((hi - 2.0 * vals[i] + lo).abs());
        }
        if d > floor {
            scales.push(((stride as f64 / n as f64).ln(), d.ln()));
        }
        stride *= 2;
        if scales.len() >= 5 {
            break;
        }
    }
    if scales.len() < 2 {
        return 2.0;
    }
    let m = scales.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in &scales {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    slope.clamp(0.0, 2.0)
}
