//! Truncated Taylor expansions in two fiber coordinates:
//! `u(θ,s₁,s₂) = Σ_{x≤L₁, y≤L₂} u⁽ˣ'ʸ⁾(θ)·(b·s₁)ˣ·(b·s₂)ʸ`
//! with circle-function coefficients on a dense index rectangle.
//!
//! The conventions mirror [`crate::taylor::TaylorField`]: one shared scale
//! `b`, only the (0,0) coefficient may carry winding index 1, and stored
//! coefficients are taken in the rescaled variables `b·sᵢ`.

use crate::circlefn::CircleFunction;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::spline::SplineOrder;

#[derive(Clone, Debug)]
pub struct TaylorField2 {
    /// `coeffs[x][y]` multiplies `(b·s₁)ˣ(b·s₂)ʸ`; rows share one length.
    coeffs: Vec<Vec<CircleFunction>>,
    b: f64,
}

impl TaylorField2 {
    pub fn new(coeffs: Vec<Vec<CircleFunction>>, b: f64) -> Result<Self> {
        if coeffs.is_empty() || coeffs[0].is_empty() {
            return Err(Error::invalid("a Taylor field needs at least order (0,0)"));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::invalid(format!("scale must be positive, got {b}")));
        }
        let width = coeffs[0].len();
        let grid = coeffs[0][0].grid().clone();
        for (x, row) in coeffs.iter().enumerate() {
            if row.len() != width {
                return Err(Error::invalid("coefficient rectangle must be dense"));
            }
            for (y, c) in row.iter().enumerate() {
                if !c.grid().same(&grid) {
                    return Err(Error::invalid("coefficients must share one grid"));
                }
                if (x, y) != (0, 0) && c.index() != 0 {
                    return Err(Error::invalid(format!(
                        "coefficient of order ({x},{y}) must be periodic (index 0)"
                    )));
                }
            }
        }
        Ok(TaylorField2 { coeffs, b })
    }

    pub(crate) fn from_parts(coeffs: Vec<Vec<CircleFunction>>, b: f64) -> Self {
        debug_assert!(!coeffs.is_empty() && !coeffs[0].is_empty());
        TaylorField2 { coeffs, b }
    }

    /// Zero field on the rectangle `x ≤ deg1, y ≤ deg2`.
    pub fn zero(grid: &Grid, order: SplineOrder, deg1: usize, deg2: usize, b: f64) -> Self {
        let coeffs = (0..=deg1)
            .map(|_| {
                (0..=deg2)
                    .map(|_| CircleFunction::zero(grid, order))
                    .collect()
            })
            .collect();
        TaylorField2 { coeffs, b }
    }

    /// Field with a single prescribed coefficient, zeros elsewhere.
    pub fn monomial(c: CircleFunction, at: (usize, usize), deg: (usize, usize), b: f64) -> Self {
        let grid = c.grid().clone();
        let order = c.order();
        let mut out = TaylorField2::zero(&grid, order, deg.0, deg.1, b);
        out.coeffs[at.0][at.1] = c;
        out
    }

    /// Truncation degrees `(L₁, L₂)` in `(s₁, s₂)`.
    pub fn degrees(&self) -> (usize, usize) {
        (self.coeffs.len() - 1, self.coeffs[0].len() - 1)
    }

    pub fn grid(&self) -> &Grid {
        self.coeffs[0][0].grid()
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn index(&self) -> i32 {
        self.coeffs[0][0].index()
    }

    pub fn order(&self) -> SplineOrder {
        self.coeffs[0][0].order()
    }

    pub fn coeff(&self, x: usize, y: usize) -> &CircleFunction {
        &self.coeffs[x][y]
    }

    /// Coefficient treated as zero outside the stored rectangle.
    pub fn coeff_or_zero(&self, x: usize, y: usize) -> CircleFunction {
        let (d1, d2) = self.degrees();
        if x <= d1 && y <= d2 {
            self.coeffs[x][y].clone()
        } else {
            CircleFunction::zero(self.grid(), self.order())
        }
    }

    /// Nested Horner evaluation of `Σ u⁽ˣ'ʸ⁾(θ)(b·s₁)ˣ(b·s₂)ʸ`.
    pub fn eval(&self, theta: f64, s1: f64, s2: f64) -> f64 {
        let x1 = self.b * s1;
        let x2 = self.b * s2;
        let mut acc = 0.0;
        for row in self.coeffs.iter().rev() {
            let mut inner = 0.0;
            for c in row.iter().rev() {
                inner = inner * x2 + c.eval(theta);
            }
            acc = acc * x1 + inner;
        }
        acc
    }

    /// Largest absolute knot value over all coefficients.
    pub fn max_abs(&self) -> f64 {
        self.coeffs
            .iter()
            .flatten()
            .map(|c| c.c0_norm())
            .fold(0.0, f64::max)
    }

    fn check_compatible(&self, other: &TaylorField2) {
        assert!(
            self.grid().same(other.grid()),
            "Taylor fields must share one grid"
        );
        assert!(
            self.b == other.b,
            "Taylor fields must share one fiber scale"
        );
    }

    fn zip(
        &self,
        other: &TaylorField2,
        op: impl Fn(&CircleFunction, &CircleFunction) -> CircleFunction,
    ) -> TaylorField2 {
        let (a1, a2) = self.degrees();
        let (b1, b2) = other.degrees();
        let (d1, d2) = (a1.max(b1), a2.max(b2));
        let zero = CircleFunction::zero(self.grid(), self.order());
        let coeffs = (0..=d1)
            .map(|x| {
                (0..=d2)
                    .map(|y| {
                        let u = self
                            .coeffs
                            .get(x)
                            .and_then(|row| row.get(y))
                            .unwrap_or(&zero);
                        let v = other
                            .coeffs
                            .get(x)
                            .and_then(|row| row.get(y))
                            .unwrap_or(&zero);
                        op(u, v)
                    })
                    .collect()
            })
            .collect();
        TaylorField2::from_parts(coeffs, self.b)
    }

    /// Coefficientwise sum, zero-padded to the enclosing rectangle.
    pub fn add(&self, other: &TaylorField2) -> TaylorField2 {
        self.check_compatible(other);
        self.zip(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &TaylorField2) -> TaylorField2 {
        self.check_compatible(other);
        self.zip(other, |a, b| a.sub(b))
    }

    pub fn scale(&self, k: f64) -> TaylorField2 {
        let coeffs = self
            .coeffs
            .iter()
            .map(|row| row.iter().map(|c| c.scale(k)).collect())
            .collect();
        TaylorField2::from_parts(coeffs, self.b)
    }

    pub fn neg(&self) -> TaylorField2 {
        self.scale(-1.0)
    }

    /// Add a constant to the (0,0) coefficient; higher orders unchanged.
    pub fn add_const(&self, c: f64) -> TaylorField2 {
        let mut coeffs = self.coeffs.clone();
        coeffs[0][0] = coeffs[0][0].add_const(c);
        TaylorField2::from_parts(coeffs, self.b)
    }

    /// Add a circle function to the (0,0) coefficient.
    pub fn add_circle(&self, g: &CircleFunction) -> TaylorField2 {
        let mut coeffs = self.coeffs.clone();
        coeffs[0][0] = coeffs[0][0].add(g);
        TaylorField2::from_parts(coeffs, self.b)
    }

    /// Truncated 2-D Cauchy product on the smaller common rectangle.
    pub fn mul(&self, other: &TaylorField2) -> TaylorField2 {
        let (a1, a2) = self.degrees();
        let (b1, b2) = other.degrees();
        self.mul_to(other, (a1.min(b1), a2.min(b2)))
    }

    /// Truncated 2-D Cauchy product with an explicit result rectangle;
    /// orders the operands lack are treated as zero.
    pub fn mul_to(&self, other: &TaylorField2, deg: (usize, usize)) -> TaylorField2 {
        self.check_compatible(other);
        assert!(
            self.index() == 0 && other.index() == 0,
            "products are defined for periodic fields only"
        );
        let grid = self.grid();
        let n = grid.len();
        let mut rows: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.0; n]; deg.1 + 1]; deg.0 + 1];
        for (i, urow) in self.coeffs.iter().enumerate() {
            if i > deg.0 {
                break;
            }
            for (j, u) in urow.iter().enumerate() {
                if j > deg.1 {
                    break;
                }
                for (p, vrow) in other.coeffs.iter().enumerate() {
                    if i + p > deg.0 {
                        break;
                    }
                    for (q, v) in vrow.iter().enumerate() {
                        if j + q > deg.1 {
                            break;
                        }
                        let out = &mut rows[i + p][j + q];
                        for (k, r) in out.iter_mut().enumerate() {
                            *r += u.values()[k] * v.values()[k];
                        }
                    }
                }
            }
        }
        let order = self.order();
        let coeffs = rows
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|vals| CircleFunction::from_parts(grid.clone(), vals, 0, order))
                    .collect()
            })
            .collect();
        TaylorField2::from_parts(coeffs, self.b)
    }

    /// Every coefficient multiplied by one circle function.
    pub fn mul_circle(&self, g: &CircleFunction) -> TaylorField2 {
        let coeffs = self
            .coeffs
            .iter()
            .map(|row| row.iter().map(|c| c.mul(g)).collect())
            .collect();
        TaylorField2::from_parts(coeffs, self.b)
    }

    /// Multiplication by `s₁`; the first degree grows by one and the stored
    /// coefficients shift with a `1/b` factor.
    pub fn mul_s1(&self) -> TaylorField2 {
        let (_, d2) = self.degrees();
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(vec![
            CircleFunction::zero(self.grid(), self.order());
            d2 + 1
        ]);
        for row in &self.coeffs {
            coeffs.push(row.iter().map(|c| c.scale(1.0 / self.b)).collect());
        }
        TaylorField2::from_parts(coeffs, self.b)
    }

    /// Multiplication by `s₂`; the second degree grows by one.
    pub fn mul_s2(&self) -> TaylorField2 {
        let zero = CircleFunction::zero(self.grid(), self.order());
        let coeffs = self
            .coeffs
            .iter()
            .map(|row| {
                let mut out = Vec::with_capacity(row.len() + 1);
                out.push(zero.clone());
                for c in row {
                    out.push(c.scale(1.0 / self.b));
                }
                out
            })
            .collect();
        TaylorField2::from_parts(coeffs, self.b)
    }

    /// `∂u/∂s₁`: rows shift down with a `b·x` factor.
    pub fn deriv_s1(&self) -> TaylorField2 {
        let (d1, d2) = self.degrees();
        if d1 == 0 {
            return TaylorField2::zero(self.grid(), self.order(), 0, d2, self.b);
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(x, row)| row.iter().map(|c| c.scale(self.b * x as f64)).collect())
            .collect();
        TaylorField2::from_parts(coeffs, self.b)
    }

    /// `∂u/∂s₂`: columns shift down with a `b·y` factor.
    pub fn deriv_s2(&self) -> TaylorField2 {
        let (d1, d2) = self.degrees();
        if d2 == 0 {
            return TaylorField2::zero(self.grid(), self.order(), d1, 0, self.b);
        }
        let coeffs = self
            .coeffs
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .skip(1)
                    .map(|(y, c)| c.scale(self.b * y as f64))
                    .collect()
            })
            .collect();
        TaylorField2::from_parts(coeffs, self.b)
    }

    /// `∂u/∂θ`, coefficientwise.
    pub fn deriv_theta(&self) -> TaylorField2 {
        let coeffs = self
            .coeffs
            .iter()
            .map(|row| row.iter().map(|c| c.derivative()).collect())
            .collect();
        TaylorField2::from_parts(coeffs, self.b)
    }

    /// Right composition `u(a(θ), λ₁(θ)s₁, λ₂(θ)s₂)`: coefficient `(x,y)`
    /// becomes `(u⁽ˣ'ʸ⁾ ∘ a)·λ₁ˣ·λ₂ʸ`.
    pub fn compose_right(
        &self,
        a: &CircleFunction,
        l1: &CircleFunction,
        l2: &CircleFunction,
    ) -> TaylorField2 {
        assert!(a.index() == 1, "right composition needs an index-1 map");
        assert!(
            l1.index() == 0 && l2.index() == 0,
            "fiber multipliers must be periodic"
        );
        let (d1, d2) = self.degrees();
        let one = CircleFunction::constant(self.grid(), 1.0, self.order());
        let mut pow1 = Vec::with_capacity(d1 + 1);
        pow1.push(one.clone());
        for x in 1..=d1 {
            pow1.push(pow1[x - 1].mul(l1));
        }
        let mut pow2 = Vec::with_capacity(d2 + 1);
        pow2.push(one);
        for y in 1..=d2 {
            pow2.push(pow2[y - 1].mul(l2));
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(x, row)| {
                row.iter()
                    .enumerate()
                    .map(|(y, c)| {
                        let comp = c.compose(a);
                        if (x, y) == (0, 0) {
                            comp
                        } else {
                            comp.mul(&pow1[x]).mul(&pow2[y])
                        }
                    })
                    .collect()
            })
            .collect();
        TaylorField2::from_parts(coeffs, self.b)
    }

    /// `(sin(ω·u), cos(ω·u))` by the Euler recurrences applied per fiber
    /// direction: `x·S⁽ˣ'ʸ⁾ = ω·Σ_{i≥1} i·u⁽ⁱ'ʲ⁾·C⁽ˣ⁻ⁱ'ʸ⁻ʲ⁾` for `x ≥ 1`
    /// and the `∂/∂s₂` analog on the `x = 0` row. For an index-1 angle
    /// component, `ω` must be a whole number of turns.
    pub fn sin_cos(&self, omega: f64) -> (TaylorField2, TaylorField2) {
        if self.index() == 1 {
            let turns = omega / std::f64::consts::TAU;
            assert!(
                (turns - turns.round()).abs() < 1e-9,
                "angle factor must be a whole number of turns for a winding component"
            );
        }
        let (d1, d2) = self.degrees();
        let zero = CircleFunction::zero(self.grid(), self.order());
        let mut s = vec![vec![zero.clone(); d2 + 1]; d1 + 1];
        let mut c = vec![vec![zero; d2 + 1]; d1 + 1];
        s[0][0] = self.coeffs[0][0].map_values(0, |v| (omega * v).sin());
        c[0][0] = self.coeffs[0][0].map_values(0, |v| (omega * v).cos());
        for y in 1..=d2 {
            let mut sy = CircleFunction::zero(self.grid(), self.order());
            let mut cy = sy.clone();
            for j in 1..=y {
                let w = self.coeffs[0][j].scale(j as f64);
                sy = sy.add(&w.mul(&c[0][y - j]));
                cy = cy.sub(&w.mul(&s[0][y - j]));
            }
            s[0][y] = sy.scale(omega / y as f64);
            c[0][y] = cy.scale(omega / y as f64);
        }
        for x in 1..=d1 {
            for y in 0..=d2 {
                let mut sx = CircleFunction::zero(self.grid(), self.order());
                let mut cx = sx.clone();
                for i in 1..=x {
                    for j in 0..=y {
                        let w = self.coeffs[i][j].scale(i as f64);
                        sx = sx.add(&w.mul(&c[x - i][y - j]));
                        cx = cx.sub(&w.mul(&s[x - i][y - j]));
                    }
                }
                s[x][y] = sx.scale(omega / x as f64);
                c[x][y] = cx.scale(omega / x as f64);
            }
        }
        (
            TaylorField2::from_parts(s, self.b),
            TaylorField2::from_parts(c, self.b),
        )
    }

    /// Weighted norm `Σ_{x,y} ‖u⁽ˣ'ʸ⁾‖_{C^r}·δ^{x+y}` on stored coefficients.
    pub fn xr_delta_norm(&self, r: usize, delta: f64) -> f64 {
        assert!(delta > 0.0);
        self.coeffs
            .iter()
            .enumerate()
            .map(|(x, row)| {
                row.iter()
                    .enumerate()
                    .map(|(y, c)| c.cr_norm(r) * delta.powi((x + y) as i32))
                    .sum::<f64>()
            })
            .sum()
    }

    /// Keeps the sub-rectangle `x ≤ deg.0, y ≤ deg.1`.
    pub fn truncated(&self, deg: (usize, usize)) -> TaylorField2 {
        let (d1, d2) = self.degrees();
        let coeffs = self.coeffs[..=deg.0.min(d1)]
            .iter()
            .map(|row| row[..=deg.1.min(d2)].to_vec())
            .collect();
        TaylorField2::from_parts(coeffs, self.b)
    }

    /// Zero-pads the rectangle up to `deg`.
    pub fn extended(&self, deg: (usize, usize)) -> TaylorField2 {
        let (d1, d2) = self.degrees();
        let (e1, e2) = (deg.0.max(d1), deg.1.max(d2));
        let zero = CircleFunction::zero(self.grid(), self.order());
        let coeffs = (0..=e1)
            .map(|x| {
                (0..=e2)
                    .map(|y| {
                        if x <= d1 && y <= d2 {
                            self.coeffs[x][y].clone()
                        } else {
                            zero.clone()
                        }
                    })
                    .collect()
            })
            .collect();
        TaylorField2::from_parts(coeffs, self.b)
    }

    pub fn resample(&self, grid: &Grid) -> TaylorField2 {
        let coeffs = self
            .coeffs
            .iter()
            .map(|row| row.iter().map(|c| c.resample(grid)).collect())
            .collect();
        TaylorField2::from_parts(coeffs, self.b)
    }

    /// One row per knot: `knot, b, index, spline_order, c0_0, …, cL1_L2`
    /// with the coefficient columns in x-major order. Values use the
    /// shortest digit strings that parse back to the same bits.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let (d1, d2) = self.degrees();
        let mut header = vec![
            "knot".to_string(),
            "b".to_string(),
            "index".to_string(),
            "spline_order".to_string(),
        ];
        for x in 0..=d1 {
            for y in 0..=d2 {
                header.push(format!("c{x}_{y}"));
            }
        }
        wtr.write_record(&header)?;
        for (i, t) in self.grid().points().iter().enumerate() {
            let mut row = vec![
                format!("{t}"),
                format!("{}", self.b),
                format!("{}", self.index()),
                format!("{}", self.order().degree()),
            ];
            for r in &self.coeffs {
                for c in r {
                    row.push(format!("{}", c.values()[i]));
                }
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<TaylorField2> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let fixed = ["knot", "b", "index", "spline_order"];
        if headers.len() < 5 || headers.iter().take(4).ne(fixed) {
            return Err(Error::Checkpoint(format!(
                "unexpected Taylor-field header: {headers:?}"
            )));
        }
        let (mut d1, mut d2) = (0usize, 0usize);
        for name in headers.iter().skip(4) {
            let (x, y) = name
                .strip_prefix('c')
                .and_then(|s| s.split_once('_'))
                .and_then(|(x, y)| Some((x.parse().ok()?, y.parse().ok()?)))
                .ok_or_else(|| {
                    Error::Checkpoint(format!("bad coefficient column name: {name}"))
                })?;
            d1 = d1.max(x);
            d2 = d2.max(y);
        }
        let ncoef = (d1 + 1) * (d2 + 1);
        if headers.len() != 4 + ncoef {
            return Err(Error::Checkpoint(
                "coefficient columns do not form a dense rectangle".into(),
            ));
        }
        let mut knots = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); ncoef];
        let mut b = None;
        let mut index = None;
        let mut degree = None;
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Checkpoint(format!("bad numeric field in row {rec:?}")))
            };
            knots.push(parse(0)?);
            b.get_or_insert(parse(1)?);
            index.get_or_insert(parse(2)? as i32);
            degree.get_or_insert(parse(3)? as usize);
            for (j, col) in cols.iter_mut().enumerate() {
                col.push(parse(4 + j)?);
            }
        }
        let grid = Grid::from_points(knots)?;
        let order = SplineOrder::from_degree(
            degree.ok_or_else(|| Error::Checkpoint("empty Taylor-field file".into()))?,
        )?;
        let index = index.unwrap();
        let mut cols = cols.into_iter();
        let mut coeffs = Vec::with_capacity(d1 + 1);
        for x in 0..=d1 {
            let mut row = Vec::with_capacity(d2 + 1);
            for y in 0..=d2 {
                let idx = if (x, y) == (0, 0) { index } else { 0 };
                row.push(CircleFunction::new(grid.clone(), cols.next().unwrap(), idx, order)?);
            }
            coeffs.push(row);
        }
        TaylorField2::new(coeffs, b.unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAU: f64 = std::f64::consts::TAU;

    fn trig(grid: &Grid, a: f64, b: f64) -> CircleFunction {
        CircleFunction::from_fn(grid.clone(), 0, SplineOrder::Cubic, |t| {
            a * (TAU * t).sin() + b * (TAU * t).cos()
        })
        .unwrap()
    }

    fn sample_field(grid: &Grid, b: f64) -> TaylorField2 {
        let coeffs = vec![
            vec![
                trig(grid, 0.5, -0.2).add_const(0.1),
                trig(grid, -0.3, 0.7),
                trig(grid, 0.2, 0.1),
            ],
            vec![
                trig(grid, 0.9, 0.05),
                trig(grid, -0.1, -0.4),
                trig(grid, 0.3, -0.6),
            ],
        ];
        TaylorField2::new(coeffs, b).unwrap()
    }

    #[test]
    fn horner_matches_naive_summation() {
        let g = Grid::uniform(32);
        let u = sample_field(&g, 0.5);
        for i in 0..10 {
            let th = 0.093 * i as f64;
            let s1 = -0.4 + 0.09 * i as f64;
            let s2 = 0.3 - 0.07 * i as f64;
            let mut naive = 0.0;
            for x in 0..=1 {
                for y in 0..=2 {
                    naive += u.coeff(x, y).eval(th)
                        * (u.b() * s1).powi(x as i32)
                        * (u.b() * s2).powi(y as i32);
                }
            }
            assert!((u.eval(th, s1, s2) - naive).abs() < 1e-14);
        }
        assert_eq!(u.eval(0.25, 0.0, 0.0), u.coeff(0, 0).eval(0.25));
    }

    #[test]
    fn product_matches_pointwise_values() {
        let g = Grid::uniform(32);
        let u = sample_field(&g, 1.0);
        let v = sample_field(&g, 1.0).truncated((1, 1));
        let w = u.mul_to(&v, (2, 3)); // exact: degrees (1,2) + (1,1)
        for i in 0..20 {
            let th = g.points()[i];
            let s1 = -0.5 + 0.05 * i as f64;
            let s2 = 0.4 - 0.04 * i as f64;
            let exact = u.eval(th, s1, s2) * v.eval(th, s1, s2);
            assert!((w.eval(th, s1, s2) - exact).abs() < 1e-12 * (1.0 + exact.abs()));
        }
    }

    #[test]
    fn product_commutes_and_associates_on_the_kept_rectangle() {
        let g = Grid::uniform(16);
        let u = sample_field(&g, 1.0);
        let v = sample_field(&g, 1.0);
        let w = sample_field(&g, 1.0);
        let uv = u.mul(&v);
        let vu = v.mul(&u);
        let lhs = u.mul(&v).mul(&w);
        let rhs = u.mul(&v.mul(&w));
        for x in 0..=1 {
            for y in 0..=2 {
                assert!(uv.coeff(x, y).max_abs_diff(vu.coeff(x, y)) < 1e-14);
                assert!(lhs.coeff(x, y).max_abs_diff(rhs.coeff(x, y)) < 1e-13);
            }
        }
    }

    #[test]
    fn fiber_monomials_multiply() {
        let g = Grid::uniform(16);
        let one = CircleFunction::constant(&g, 1.0, SplineOrder::Cubic);
        let s1 = TaylorField2::monomial(one.clone(), (1, 0), (2, 2), 1.0);
        let s2 = TaylorField2::monomial(one, (0, 1), (2, 2), 1.0);
        let p = s1.mul(&s2);
        for x in 0..=2 {
            for y in 0..=2 {
                let target = if (x, y) == (1, 1) { 1.0 } else { 0.0 };
                for v in p.coeff(x, y).values() {
                    assert_eq!(*v, target);
                }
            }
        }
    }

    #[test]
    fn sin_cos_matches_bivariate_closed_form() {
        let g = Grid::uniform(64);
        // u = θ + c₁·s₁ + c₂·s₂ → sin(2πu) has coefficients
        // (2πc₁)ˣ(2πc₂)ʸ/(x!y!)·sin(2πθ + (x+y)π/2).
        let (c1, c2) = (0.3, -0.2);
        let id = CircleFunction::identity(&g, SplineOrder::Cubic);
        let u = TaylorField2::monomial(id, (0, 0), (4, 4), 1.0)
            .add(&TaylorField2::monomial(
                CircleFunction::constant(&g, c1, SplineOrder::Cubic),
                (1, 0),
                (4, 4),
                1.0,
            ))
            .add(&TaylorField2::monomial(
                CircleFunction::constant(&g, c2, SplineOrder::Cubic),
                (0, 1),
                (4, 4),
                1.0,
            ));
        let (s, c) = u.sin_cos(TAU);
        let fact = |k: usize| (1..=k).map(|m| m as f64).product::<f64>();
        for x in 0..=4usize {
            for y in 0..=4usize {
                let amp = (TAU * c1).powi(x as i32) * (TAU * c2).powi(y as i32)
                    / (fact(x) * fact(y));
                for (i, t) in g.points().iter().enumerate().step_by(9) {
                    let phase = TAU * t + (x + y) as f64 * std::f64::consts::FRAC_PI_2;
                    assert!(
                        (s.coeff(x, y).values()[i] - amp * phase.sin()).abs()
                            < 1e-12 * (1.0 + amp.abs()),
                        "sin coefficient ({x},{y})"
                    );
                    assert!(
                        (c.coeff(x, y).values()[i] - amp * phase.cos()).abs()
                            < 1e-12 * (1.0 + amp.abs()),
                        "cos coefficient ({x},{y})"
                    );
                }
            }
        }
    }

    #[test]
    fn sin_cos_pythagorean_identity() {
        let g = Grid::uniform(32);
        let u = sample_field(&g, 1.0).extended((4, 4));
        let (s, c) = u.sin_cos(1.0);
        let one = s.mul(&s).add(&c.mul(&c));
        for x in 0..=4 {
            for y in 0..=4 {
                let target = if (x, y) == (0, 0) { 1.0 } else { 0.0 };
                for v in one.coeff(x, y).values() {
                    assert!((v - target).abs() < 1e-12, "order ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn sin_cos_derivative_identities() {
        let g = Grid::uniform(32);
        let u = sample_field(&g, 0.7).extended((3, 3));
        let omega = TAU;
        let (s, c) = u.sin_cos(omega);
        for (du, ds, dc) in [
            (u.deriv_s1(), s.deriv_s1(), c.deriv_s1()),
            (u.deriv_s2(), s.deriv_s2(), c.deriv_s2()),
        ] {
            let rhs_s = c.mul_to(&du, (2, 2)).scale(omega);
            let rhs_c = s.mul_to(&du, (2, 2)).scale(-omega);
            for x in 0..=2 {
                for y in 0..=2 {
                    let m = (u.max_abs() * omega).powi((x + y) as i32 + 1);
                    assert!(ds.coeff(x, y).max_abs_diff(rhs_s.coeff(x, y)) < 1e-11 * m);
                    assert!(dc.coeff(x, y).max_abs_diff(rhs_c.coeff(x, y)) < 1e-11 * m);
                }
            }
        }
    }

    #[test]
    fn right_composition_matches_pointwise_eval() {
        let g = Grid::uniform(64);
        let u = sample_field(&g, 0.8);
        let a = CircleFunction::from_fn(g.clone(), 1, SplineOrder::Cubic, |t| {
            t + 0.3 + 0.02 * (TAU * t).sin()
        })
        .unwrap();
        let l1 = trig(&g, 0.1, 0.0).add_const(0.6);
        let l2 = trig(&g, 0.0, 0.05).add_const(-0.4);
        let v = u.compose_right(&a, &l1, &l2);
        for (i, t) in g.points().iter().enumerate().step_by(7) {
            for (s1, s2) in [(-0.3, 0.2), (0.0, 0.0), (0.25, -0.15)] {
                let exact = u.eval(a.values()[i], l1.values()[i] * s1, l2.values()[i] * s2);
                assert!((v.eval(*t, s1, s2) - exact).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn fiber_shifts_and_derivatives_interact_correctly() {
        let g = Grid::uniform(16);
        let u = sample_field(&g, 0.3);
        // ∂s₁(s₁·u) = u + s₁·∂s₁u, and the s₂ analog
        let lhs1 = u.mul_s1().deriv_s1();
        let rhs1 = u.add(&u.deriv_s1().mul_s1());
        let lhs2 = u.mul_s2().deriv_s2();
        let rhs2 = u.add(&u.deriv_s2().mul_s2());
        for x in 0..=1 {
            for y in 0..=2 {
                assert!(lhs1.coeff(x, y).max_abs_diff(rhs1.coeff(x, y)) < 1e-14);
                assert!(lhs2.coeff(x, y).max_abs_diff(rhs2.coeff(x, y)) < 1e-14);
            }
        }
        // mixed partials commute
        let m1 = u.deriv_s1().deriv_s2();
        let m2 = u.deriv_s2().deriv_s1();
        for x in 0..=0 {
            for y in 0..=1 {
                assert!(m1.coeff(x, y).max_abs_diff(m2.coeff(x, y)) < 1e-15);
            }
        }
    }

    #[test]
    fn weighted_norm_triangle_inequality_and_monomials() {
        let g = Grid::uniform(32);
        let one = CircleFunction::constant(&g, 1.0, SplineOrder::Cubic);
        let m = TaylorField2::monomial(one, (1, 1), (2, 2), 1.0);
        assert!((m.xr_delta_norm(0, 0.01) - 1e-4).abs() < 1e-18);
        let u = sample_field(&g, 1.0);
        let v = sample_field(&g, 1.0);
        let lhs = u.add(&v).xr_delta_norm(1, 0.01);
        assert!(lhs <= u.xr_delta_norm(1, 0.01) + v.xr_delta_norm(1, 0.01) + 1e-14);
    }

    #[test]
    fn rectangle_editing_round_trips() {
        let g = Grid::uniform(16);
        let u = sample_field(&g, 1.0);
        let e = u.extended((3, 4));
        assert_eq!(e.degrees(), (3, 4));
        for i in 0..5 {
            let th = 0.19 * i as f64;
            assert!((e.eval(th, 0.3, -0.2) - u.eval(th, 0.3, -0.2)).abs() < 1e-15);
        }
        let t = e.truncated((1, 2));
        for x in 0..=1 {
            for y in 0..=2 {
                assert!(t.coeff(x, y).max_abs_diff(u.coeff(x, y)) == 0.0);
            }
        }
    }

    #[test]
    fn csv_round_trip_is_bit_identical() {
        let g = Grid::uniform(24);
        let mut u = sample_field(&g, 0.7);
        // exercise a winding coefficient: replace (0,0) with an index-1 angle
        let angle = CircleFunction::from_fn(g.clone(), 1, SplineOrder::Cubic, |t| {
            0.03 * (TAU * t).sin()
        })
        .unwrap();
        u = TaylorField2::new(
            vec![
                vec![angle, u.coeff(0, 1).clone(), u.coeff(0, 2).clone()],
                vec![
                    u.coeff(1, 0).clone(),
                    u.coeff(1, 1).clone(),
                    u.coeff(1, 2).clone(),
                ],
            ],
            u.b(),
        )
        .unwrap();

        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let v = TaylorField2::read_csv(buf.as_slice()).unwrap();
        assert_eq!(v.degrees(), u.degrees());
        assert_eq!(v.b(), u.b());
        assert_eq!(v.index(), 1);
        assert_eq!(v.order(), u.order());
        for x in 0..=1 {
            for y in 0..=2 {
                assert!(v.coeff(x, y).max_abs_diff(u.coeff(x, y)) == 0.0);
            }
        }
        let mut buf2 = Vec::new();
        v.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn csv_reader_rejects_damaged_headers() {
        let g = Grid::uniform(16);
        let u = sample_field(&g, 1.0);
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let wrong_fixed = text.replacen("knot", "node", 1);
        assert!(TaylorField2::read_csv(wrong_fixed.as_bytes()).is_err());
        let ragged = text.replacen("c1_2", "c3_0", 1);
        assert!(TaylorField2::read_csv(ragged.as_bytes()).is_err());
    }
}
