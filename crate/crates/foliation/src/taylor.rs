//! Truncated Taylor expansions in the fiber coordinate:
//! `u(θ,s) = Σ_{j≤L} u⁽ʲ⁾(θ)·(b·s)ʲ` with circle-function coefficients.
//!
//! The positive scale `b` keeps stored coefficients O(1) when the expansion
//! variable is renormalized; evaluation is invariant under `rescale_s`.
//! Only the order-0 coefficient may carry winding index 1 (an angle
//! component); all higher coefficients are periodic.

use crate::circlefn::CircleFunction;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::spline::SplineOrder;

#[derive(Clone, Debug)]
pub struct TaylorField {
    coeffs: Vec<CircleFunction>,
    b: f64,
}

impl TaylorField {
    pub fn new(coeffs: Vec<CircleFunction>, b: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("a Taylor field needs at least order 0"));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::invalid(format!("scale must be positive, got {b}")));
        }
        let grid = coeffs[0].grid().clone();
        for (j, c) in coeffs.iter().enumerate() {
            if !c.grid().same(&grid) {
                return Err(Error::invalid("coefficients must share one grid"));
            }
            if j > 0 && c.index() != 0 {
                return Err(Error::invalid(format!(
                    "coefficient of order {j} must be periodic (index 0)"
                )));
            }
        }
        Ok(TaylorField { coeffs, b })
    }

    pub(crate) fn from_parts(coeffs: Vec<CircleFunction>, b: f64) -> Self {
        debug_assert!(!coeffs.is_empty());
        TaylorField { coeffs, b }
    }

    /// Zero field of the given truncation degree.
    pub fn zero(grid: &Grid, order: SplineOrder, degree: usize, b: f64) -> Self {
        let coeffs = (0..=degree)
            .map(|_| CircleFunction::zero(grid, order))
            .collect();
        TaylorField { coeffs, b }
    }

    /// Field with a single prescribed coefficient, zeros elsewhere.
    pub fn monomial(c: CircleFunction, at: usize, degree: usize, b: f64) -> Self {
        let grid = c.grid().clone();
        let order = c.order();
        let mut coeffs: Vec<CircleFunction> = (0..=degree)
            .map(|_| CircleFunction::zero(&grid, order))
            .collect();
        coeffs[at] = c;
        TaylorField { coeffs, b }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn grid(&self) -> &Grid {
        self.coeffs[0].grid()
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn index(&self) -> i32 {
        self.coeffs[0].index()
    }

    pub fn order(&self) -> SplineOrder {
        self.coeffs[0].order()
    }

    pub fn coeff(&self, j: usize) -> &CircleFunction {
        &self.coeffs[j]
    }

    pub fn coeffs(&self) -> &[CircleFunction] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<CircleFunction> {
        self.coeffs
    }

    /// Horner evaluation of `Σ u⁽ʲ⁾(θ)(b·s)ʲ`.
    pub fn eval(&self, theta: f64, s: f64) -> f64 {
        let x = self.b * s;
        let mut acc = 0.0;
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c.eval(theta);
        }
        acc
    }

    /// Largest absolute knot value over all coefficients.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.c0_norm()).fold(0.0, f64::max)
    }

    fn check_compatible(&self, other: &TaylorField) {
        assert!(
            self.grid().same(other.grid()),
            "Taylor fields must share one grid"
        );
        assert!(
            self.b == other.b,
            "Taylor fields must share one fiber scale"
        );
    }

    /// Coefficientwise sum, zero-padded to the larger degree.
    pub fn add(&self, other: &TaylorField) -> TaylorField {
        self.check_compatible(other);
        self.zip(other, |a, b| a.add(b))
    }

    pub fn sub(&self, other: &TaylorField) -> TaylorField {
        self.check_compatible(other);
        self.zip(other, |a, b| a.sub(b))
    }

    fn zip(
        &self,
        other: &TaylorField,
        op: impl Fn(&CircleFunction, &CircleFunction) -> CircleFunction,
    ) -> TaylorField {
        let degree = self.degree().max(other.degree());
        let zero = CircleFunction::zero(self.grid(), self.order());
        let coeffs = (0..=degree)
            .map(|j| {
                let a = self.coeffs.get(j).unwrap_or(&zero);
                let b = other.coeffs.get(j).unwrap_or(&zero);
                op(a, b)
            })
            .collect();
        TaylorField::from_parts(coeffs, self.b)
    }

    /// Scalar multiple; defined for fully periodic fields.
    pub fn scale(&self, k: f64) -> TaylorField {
        let coeffs = self.coeffs.iter().map(|c| c.scale(k)).collect();
        TaylorField::from_parts(coeffs, self.b)
    }

    pub fn neg(&self) -> TaylorField {
        self.scale(-1.0)
    }

    /// Add a constant to the order-zero coefficient; higher orders unchanged.
    pub fn add_const(&self, c: f64) -> TaylorField {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] = coeffs[0].add_const(c);
        TaylorField::from_parts(coeffs, self.b)
    }

    /// Add a circle function to the order-zero coefficient.
    pub fn add_circle(&self, g: &CircleFunction) -> TaylorField {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] = coeffs[0].add(g);
        TaylorField::from_parts(coeffs, self.b)
    }

    /// Truncated Cauchy product up to the smaller operand degree.
    pub fn mul(&self, other: &TaylorField) -> TaylorField {
        self.mul_to(other, self.degree().min(other.degree()))
    }

    /// Truncated Cauchy product with an explicit result degree; orders the
    /// operands lack are treated as zero.
    pub fn mul_to(&self, other: &TaylorField, degree: usize) -> TaylorField {
        self.check_compatible(other);
        assert!(
            self.index() == 0 && other.index() == 0,
            "products are defined for periodic fields only"
        );
        let grid = self.grid();
        let n = grid.len();
        let mut rows: Vec<Vec<f64>> = vec![vec![0.0; n]; degree + 1];
        for (i, u) in self.coeffs.iter().enumerate() {
            if i > degree {
                break;
            }
            for (j, v) in other.coeffs.iter().enumerate() {
                if i + j > degree {
                    break;
                }
                let row = &mut rows[i + j];
                for (k, r) in row.iter_mut().enumerate() {
                    *r += u.values()[k] * v.values()[k];
                }
            }
        }
        let order = self.order();
        let coeffs = rows
            .into_iter()
            .map(|vals| CircleFunction::from_parts(grid.clone(), vals, 0, order))
            .collect();
        TaylorField::from_parts(coeffs, self.b)
    }

    /// Every coefficient multiplied by one circle function.
    pub fn mul_circle(&self, g: &CircleFunction) -> TaylorField {
        let coeffs = self.coeffs.iter().map(|c| c.mul(g)).collect();
        TaylorField::from_parts(coeffs, self.b)
    }

    /// Multiplication by the fiber coordinate `s`; degree grows by one and
    /// the stored coefficients shift with a `1/b` factor.
    pub fn mul_s(&self) -> TaylorField {
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(CircleFunction::zero(self.grid(), self.order()));
        for c in &self.coeffs {
            coeffs.push(c.scale(1.0 / self.b));
        }
        TaylorField::from_parts(coeffs, self.b)
    }

    /// `∂u/∂s`: stored coefficients shift down with a `b·(j+1)` factor.
    pub fn deriv_s(&self) -> TaylorField {
        if self.degree() == 0 {
            return TaylorField::zero(self.grid(), self.order(), 0, self.b);
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, c)| c.scale(self.b * j as f64))
            .collect();
        TaylorField::from_parts(coeffs, self.b)
    }

    /// `∂u/∂θ`, coefficientwise.
    pub fn deriv_theta(&self) -> TaylorField {
        let coeffs = self.coeffs.iter().map(|c| c.derivative()).collect();
        TaylorField::from_parts(coeffs, self.b)
    }

    /// Right composition `u(a(θ), λ(θ)·s)`: coefficient `j` becomes
    /// `(u⁽ʲ⁾ ∘ a)·λʲ`.
    pub fn compose_right(&self, a: &CircleFunction, lambda: &CircleFunction) -> TaylorField {
        assert!(a.index() == 1, "right composition needs an index-1 map");
        assert!(lambda.index() == 0, "fiber multiplier must be periodic");
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        coeffs.push(self.coeffs[0].compose(a));
        let mut pow = lambda.clone();
        for (j, c) in self.coeffs.iter().enumerate().skip(1) {
            coeffs.push(c.compose(a).mul(&pow));
            if j < self.degree() {
                pow = pow.mul(lambda);
            }
        }
        TaylorField::from_parts(coeffs, self.b)
    }

    /// `(sin(ω·u), cos(ω·u))` by the first-order Euler recurrences
    /// `j·Sⱼ = ω·Σ_{m≥1} m·uₘ·C_{j−m}` and `j·Cⱼ = −ω·Σ_{m≥1} m·uₘ·S_{j−m}`.
    /// For an index-1 angle component, `ω` must be an integer multiple of 2π
    /// so the order-0 terms stay periodic.
    pub fn sin_cos(&self, omega: f64) -> (TaylorField, TaylorField) {
        if self.index() == 1 {
            let turns = omega / std::f64::consts::TAU;
            assert!(
                (turns - turns.round()).abs() < 1e-9,
                "angle factor must be a whole number of turns for a winding component"
            );
        }
        let degree = self.degree();
        let mut s = Vec::with_capacity(degree + 1);
        let mut c = Vec::with_capacity(degree + 1);
        s.push(self.coeffs[0].map_values(0, |v| (omega * v).sin()));
        c.push(self.coeffs[0].map_values(0, |v| (omega * v).cos()));
        for j in 1..=degree {
            let mut sj = CircleFunction::zero(self.grid(), self.order());
            let mut cj = sj.clone();
            for m in 1..=j {
                let w = self.coeffs[m].scale(m as f64);
                sj = sj.add(&w.mul(&c[j - m]));
                cj = cj.sub(&w.mul(&s[j - m]));
            }
            s.push(sj.scale(omega / j as f64));
            c.push(cj.scale(omega / j as f64));
        }
        (
            TaylorField::from_parts(s, self.b),
            TaylorField::from_parts(c, self.b),
        )
    }

    /// Weighted norm `Σ_j ‖u⁽ʲ⁾‖_{C^r}·δʲ` on the stored coefficients.
    pub fn xr_delta_norm(&self, r: usize, delta: f64) -> f64 {
        assert!(delta > 0.0);
        self.coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c.cr_norm(r) * delta.powi(j as i32))
            .sum()
    }

    /// Changes the fiber scale without changing the represented function:
    /// coefficients pick up `(b_old/b_new)ʲ`.
    pub fn rescale_s(&self, b_new: f64) -> Result<TaylorField> {
        if !(b_new.is_finite() && b_new > 0.0) {
            return Err(Error::invalid(format!("scale must be positive, got {b_new}")));
        }
        let ratio = self.b / b_new;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| {
                if j == 0 {
                    c.clone()
                } else {
                    c.scale(ratio.powi(j as i32))
                }
            })
            .collect();
        Ok(TaylorField::from_parts(coeffs, b_new))
    }

    /// Drops coefficients above `degree` (or keeps all if already shorter).
    pub fn truncated(&self, degree: usize) -> TaylorField {
        let coeffs = self.coeffs[..=degree.min(self.degree())].to_vec();
        TaylorField::from_parts(coeffs, self.b)
    }

    /// Zero-pads up to `degree`.
    pub fn extended(&self, degree: usize) -> TaylorField {
        if degree <= self.degree() {
            return self.clone();
        }
        let mut coeffs = self.coeffs.clone();
        while coeffs.len() <= degree {
            coeffs.push(CircleFunction::zero(self.grid(), self.order()));
        }
        TaylorField::from_parts(coeffs, self.b)
    }

    pub fn resample(&self, grid: &Grid) -> TaylorField {
        let coeffs = self.coeffs.iter().map(|c| c.resample(grid)).collect();
        TaylorField::from_parts(coeffs, self.b)
    }

    pub fn with_order(&self, order: SplineOrder) -> TaylorField {
        let coeffs = self.coeffs.iter().map(|c| c.with_order(order)).collect();
        TaylorField::from_parts(coeffs, self.b)
    }

    /// Rows `knot,b,index,spline_order,c0..cL`; the truncation degree is
    /// recovered from the column count.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec![
            "knot".to_string(),
            "b".to_string(),
            "index".to_string(),
            "spline_order".to_string(),
        ];
        for j in 0..=self.degree() {
            header.push(format!("c{j}"));
        }
        wtr.write_record(&header)?;
        for (i, t) in self.grid().points().iter().enumerate() {
            let mut row = vec![
                format!("{t}"),
                format!("{}", self.b),
                format!("{}", self.index()),
                format!("{}", self.order().degree()),
            ];
            for c in &self.coeffs {
                row.push(format!("{}", c.values()[i]));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<TaylorField> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let fixed = ["knot", "b", "index", "spline_order"];
        if headers.len() < 5 || headers.iter().take(4).ne(fixed) {
            return Err(Error::Checkpoint(format!(
                "unexpected Taylor-field header: {headers:?}"
            )));
        }
        let ncoef = headers.len() - 4;
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
        let mut coeffs = Vec::with_capacity(ncoef);
        for (j, col) in cols.into_iter().enumerate() {
            let idx = if j == 0 { index } else { 0 };
            coeffs.push(CircleFunction::new(grid.clone(), col, idx, order)?);
        }
        TaylorField::new(coeffs, b.unwrap())
    }
}
