//! Periodic B-spline interpolation on the circle.
//!
//! Splines of degree 1 (linear), 2 (quadratic) and 3 (cubic) interpolate data
//! given at sites in `[0, 1)`, understood 1-periodically. For odd degrees the
//! spline knots coincide with the data sites; for degree 2 the knots sit at
//! interval midpoints (knot-at-site quadratic interpolation is singular on
//! even-size periodic grids, midpoint knots make it uniformly well posed).
//! In every case the collocation matrix is cyclic tridiagonal and is solved
//! with the Sherman–Morrison splitting in `O(N)`.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Interpolation degree used for circle functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SplineOrder {
    Linear,
    Quadratic,
    Cubic,
}

impl SplineOrder {
    pub fn degree(self) -> usize {
        match self {
            SplineOrder::Linear => 1,
            SplineOrder::Quadratic => 2,
            SplineOrder::Cubic => 3,
        }
    }

    pub fn from_degree(d: usize) -> Result<SplineOrder> {
        match d {
            1 => Ok(SplineOrder::Linear),
            2 => Ok(SplineOrder::Quadratic),
            3 => Ok(SplineOrder::Cubic),
            _ => Err(Error::invalid(format!("unsupported spline order {d}"))),
        }
    }
}

/// A 1-periodic spline `S(x) = Σ_j c_j B_{j,d}(x)` over a cyclic knot vector.
#[derive(Debug)]
pub struct PeriodicSpline {
    degree: usize,
    /// Base knots, strictly increasing, spanning less than one period.
    knots: Vec<f64>,
    /// Periodic control coefficients, one per base knot.
    coeffs: Vec<f64>,
    deriv: OnceLock<Box<PeriodicSpline>>,
}

impl PeriodicSpline {
    /// Interpolates `values[i]` at `sites[i]` (sites strictly increasing in
    /// `[0,1)`, at least 4 of them).
    pub fn fit(sites: &[f64], values: &[f64], order: SplineOrder) -> Result<PeriodicSpline> {
        let n = sites.len();
        if n < 4 || values.len() != n {
            return Err(Error::invalid("spline fit needs >= 4 sites and matching values"));
        }
        let d = order.degree();
        match d {
            1 => {
                // B_{j,1} peaks at t_{j+1}, so c_{i-1} = y_i.
                let knots = sites.to_vec();
                let mut coeffs = vec![0.0; n];
                for i in 0..n {
                    coeffs[(i + n - 1) % n] = values[i];
                }
                Ok(PeriodicSpline::new(d, knots, coeffs))
            }
            2 | 3 => {
                let knots: Vec<f64> = if d == 3 {
                    sites.to_vec()
                } else {
                    (0..n)
                        .map(|i| {
                            let a = sites[i];
                            let b = if i + 1 < n { sites[i + 1] } else { sites[0] + 1.0 };
                            0.5 * (a + b)
                        })
                        .collect()
                };
                let proto = PeriodicSpline::new(d, knots, vec![0.0; n]);
                // Row i couples coefficients (i-3, i-2, i-1) mod n for both
                // layouts (the trailing basis value vanishes at an interpolation
                // site when sites are knots).
                let mut sub = vec![0.0; n];
                let mut diag = vec![0.0; n];
                let mut sup = vec![0.0; n];
                let mut basis = [0.0; 4];
                for i in 0..n {
                    let x = proto.wrap(sites[i]);
                    let span = proto.span(x);
                    let expected = if d == 3 { i } else { (i + n - 1) % n };
                    if span != expected {
                        return Err(Error::invalid(
                            "collocation site fell outside its expected knot interval",
                        ));
                    }
                    proto.basis_values(span, x, &mut basis);
                    // columns span-d+m; after dropping the zero tail these are
                    // exactly (i-3, i-2, i-1) mod n.
                    sub[i] = basis[0];
                    diag[i] = basis[1];
                    sup[i] = basis[2];
                }
                let shifted = solve_cyclic_tridiag(&sub, &diag, &sup, values)?;
                // unknown j of the tridiagonal system is coefficient (j-2) mod n
                let mut coeffs = vec![0.0; n];
                for (j, v) in shifted.iter().enumerate() {
                    coeffs[(j + n - 2) % n] = *v;
                }
                Ok(PeriodicSpline::new(d, proto.knots, coeffs))
            }
            _ => unreachable!(),
        }
    }

    fn new(degree: usize, knots: Vec<f64>, coeffs: Vec<f64>) -> PeriodicSpline {
        PeriodicSpline {
            degree,
            knots,
            coeffs,
            deriv: OnceLock::new(),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    fn len(&self) -> usize {
        self.knots.len()
    }

    /// Knot with periodic extension: `t_{j+n} = t_j + 1`.
    #[inline]
    fn knot_ext(&self, j: isize) -> f64 {
        let n = self.len() as isize;
        self.knots[j.rem_euclid(n) as usize] + j.div_euclid(n) as f64
    }

    #[inline]
    fn coeff_ext(&self, j: isize) -> f64 {
        let n = self.len() as isize;
        self.coeffs[j.rem_euclid(n) as usize]
    }

    /// Maps `x` into the fundamental knot period `[t_0, t_0 + 1)`.
    #[inline]
    fn wrap(&self, x: f64) -> f64 {
        let t0 = self.knots[0];
        let mut r = (x - t0).rem_euclid(1.0);
        if r >= 1.0 {
            r = 0.0;
        }
        t0 + r
    }

    /// Largest `k` with `t_k <= x`, for `x` in the fundamental period.
    #[inline]
    fn span(&self, x: f64) -> usize {
        let k = self.knots.partition_point(|t| *t <= x);
        debug_assert!(k >= 1);
        k - 1
    }

    /// Cox–de Boor: writes `B_{span-d+m, d}(x)` for `m = 0..=d` into `out`.
    fn basis_values(&self, span: usize, x: f64, out: &mut [f64; 4]) {
        let d = self.degree;
        let k = span as isize;
        let mut left = [0.0f64; 4];
        let mut right = [0.0f64; 4];
        out[0] = 1.0;
        for j in 1..=d {
            left[j] = x - self.knot_ext(k + 1 - j as isize);
            right[j] = self.knot_ext(k + j as isize) - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
    }

    /// Spline value at `x` (any real; evaluated 1-periodically).
    pub fn eval(&self, x: f64) -> f64 {
        let xw = self.wrap(x);
        let span = self.span(xw);
        if self.degree == 0 {
            return self.coeff_ext(span as isize);
        }
        let mut basis = [0.0; 4];
        self.basis_values(span, xw, &mut basis);
        let mut acc = 0.0;
        for (m, bm) in basis.iter().enumerate().take(self.degree + 1) {
            acc += bm * self.coeff_ext(span as isize - self.degree as isize + m as isize);
        }
        acc
    }

    /// The derivative spline (degree lowered by one), built once and cached.
    fn deriv_spline(&self) -> &PeriodicSpline {
        self.deriv.get_or_init(|| {
            let n = self.len();
            let d = self.degree as f64;
            let mut coeffs = vec![0.0; n];
            if self.degree > 0 {
                for j in 0..n as isize {
                    let dt = self.knot_ext(j + self.degree as isize) - self.knot_ext(j);
                    coeffs[j as usize] = d * (self.coeff_ext(j) - self.coeff_ext(j - 1)) / dt;
                }
            }
            Box::new(PeriodicSpline::new(
                self.degree.saturating_sub(1),
                self.knots.clone(),
                coeffs,
            ))
        })
    }

    /// `order`-th derivative at `x`; identically zero past the polynomial degree.
    pub fn eval_deriv(&self, x: f64, order: usize) -> f64 {
        if order == 0 {
            return self.eval(x);
        }
        if order > self.degree {
            return 0.0;
        }
        self.deriv_spline().eval_deriv(x, order - 1)
    }
}

/// Solves the cyclic tridiagonal system
/// `sub[i]·x[i-1] + diag[i]·x[i] + sup[i]·x[i+1] = rhs[i]` (indices mod n)
/// by the Sherman–Morrison rank-one splitting and two Thomas sweeps.
pub fn solve_cyclic_tridiag(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    if n < 3 {
        return Err(Error::invalid("cyclic tridiagonal system needs n >= 3"));
    }
    let corner_top = sub[0]; // multiplies x[n-1] in row 0
    let corner_bot = sup[n - 1]; // multiplies x[0] in row n-1
    let gamma = -diag[0];
    let mut dmod = diag.to_vec();
    dmod[0] = diag[0] - gamma;
    dmod[n - 1] = diag[n - 1] - corner_top * corner_bot / gamma;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = corner_bot;
    let y = thomas(sub, &dmod, sup, rhs)?;
    let z = thomas(sub, &dmod, sup, &u)?;
    let vy = y[0] + corner_top / gamma * y[n - 1];
    let vz = z[0] + corner_top / gamma * z[n - 1];
    let denom = 1.0 + vz;
    if denom.abs() < 1e-300 {
        return Err(Error::invalid("cyclic tridiagonal system is singular"));
    }
    let f = vy / denom;
    Ok(y.iter().zip(&z).map(|(yi, zi)| yi - f * zi).collect())
}

/// Plain Thomas sweep ignoring the cyclic corners of `sub`/`sup`.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv.abs() < 1e-300 {
        return Err(Error::invalid("tridiagonal pivot underflow"));
    }
    c[0] = sup[0] / piv;
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - sub[i] * c[i - 1];
        if piv.abs() < 1e-300 {
            return Err(Error::invalid("tridiagonal pivot underflow"));
        }
        if i + 1 < n {
            c[i] = sup[i] / piv;
        }
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}
