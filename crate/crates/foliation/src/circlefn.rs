//! Functions on the circle represented by periodic splines.
//!
//! A `CircleFunction` is either 1-periodic (`index = 0`) or the lift of a
//! degree-one circle map (`index = 1`, meaning `f(θ+1) = f(θ)+1`). Internally
//! only the periodic part `f̂(θ) = f(θ) − index·θ` is splined; the index part
//! is added back on evaluation, so lifts evaluate correctly on all of `ℝ`.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::spline::{PeriodicSpline, SplineOrder};

#[derive(Clone)]
pub struct CircleFunction {
    grid: Grid,
    values: Arc<Vec<f64>>,
    index: i32,
    order: SplineOrder,
    spline: Arc<OnceLock<PeriodicSpline>>,
}

impl std::fmt::Debug for CircleFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CircleFunction")
            .field("n", &self.grid.len())
            .field("index", &self.index)
            .field("order", &self.order)
            .finish()
    }
}

impl CircleFunction {
    /// Builds a function from knot values; `values[i] = f(grid[i])` including
    /// the index part.
    pub fn new(grid: Grid, values: Vec<f64>, index: i32, order: SplineOrder) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        if !(0..=1).contains(&index) {
            return Err(Error::invalid(format!("index must be 0 or 1, got {index}")));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("knot values must be finite"));
        }
        Ok(Self::from_parts(grid, values, index, order))
    }

    /// Internal constructor without the finiteness scan.
    pub(crate) fn from_parts(
        grid: Grid,
        values: Vec<f64>,
        index: i32,
        order: SplineOrder,
    ) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        debug_assert!((0..=1).contains(&index));
        CircleFunction {
            grid,
            values: Arc::new(values),
            index,
            order,
            spline: Arc::new(OnceLock::new()),
        }
    }

    pub fn from_fn(
        grid: Grid,
        index: i32,
        order: SplineOrder,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        CircleFunction::new(grid, values, index, order)
    }

    /// The lift of the identity, `θ ↦ θ`.
    pub fn identity(grid: &Grid, order: SplineOrder) -> Self {
        let values = grid.points().to_vec();
        Self::from_parts(grid.clone(), values, 1, order)
    }

    /// The rigid rotation lift `θ ↦ θ + ω`.
    pub fn rotation(grid: &Grid, omega: f64, order: SplineOrder) -> Self {
        let values = grid.points().iter().map(|&t| t + omega).collect();
        Self::from_parts(grid.clone(), values, 1, order)
    }

    pub fn constant(grid: &Grid, c: f64, order: SplineOrder) -> Self {
        Self::from_parts(grid.clone(), vec![c; grid.len()], 0, order)
    }

    pub fn zero(grid: &Grid, order: SplineOrder) -> Self {
        Self::constant(grid, 0.0, order)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn index(&self) -> i32 {
        self.index
    }

    pub fn order(&self) -> SplineOrder {
        self.order
    }

    fn spline(&self) -> &PeriodicSpline {
        self.spline.get_or_init(|| {
            let periodic: Vec<f64> = if self.index == 0 {
                self.values.as_ref().clone()
            } else {
                self.values
                    .iter()
                    .zip(self.grid.points())
                    .map(|(v, t)| v - self.index as f64 * t)
                    .collect()
            };
            PeriodicSpline::fit(self.grid.points(), &periodic, self.order)
                .expect("collocation is well posed on a validated grid")
        })
    }

    /// Value at any real `θ`; lifts satisfy `f(θ+1) = f(θ) + index`.
    pub fn eval(&self, theta: f64) -> f64 {
        self.spline().eval(theta) + self.index as f64 * theta
    }

    /// `r`-th derivative at `θ` (`r ≤ 2`).
    pub fn eval_deriv(&self, theta: f64, r: usize) -> f64 {
        let mut d = self.spline().eval_deriv(theta, r);
        if r == 1 {
            d += self.index as f64;
        }
        d
    }

    /// Derivative resampled on the same knots (always periodic).
    pub fn derivative(&self) -> CircleFunction {
        let values = self
            .grid
            .points()
            .iter()
            .map(|&t| self.eval_deriv(t, 1))
            .collect();
        Self::from_parts(self.grid.clone(), values, 0, self.order)
    }

    /// Composition `self ∘ g`, sampled on `g`'s grid and re-interpolated.
    /// The winding indices multiply.
    pub fn compose(&self, g: &CircleFunction) -> CircleFunction {
        let values = g.values.iter().map(|&x| self.eval(x)).collect();
        Self::from_parts(g.grid.clone(), values, self.index * g.index, self.order)
    }

    /// Re-interpolation onto another grid.
    pub fn resample(&self, grid: &Grid) -> CircleFunction {
        if self.grid.same(grid) {
            return self.clone();
        }
        let values = grid.points().iter().map(|&t| self.eval(t)).collect();
        Self::from_parts(grid.clone(), values, self.index, self.order)
    }

    /// Same values re-tagged with a different interpolation order.
    pub fn with_order(&self, order: SplineOrder) -> CircleFunction {
        Self::from_parts(
            self.grid.clone(),
            self.values.as_ref().clone(),
            self.index,
            order,
        )
    }

    /// `C^r` norm: sum over `i ≤ r` of the max of `|D^i f|` over the knots.
    pub fn cr_norm(&self, r: usize) -> f64 {
        assert!(r <= 2, "C^r norms implemented for r <= 2");
        let mut total = self.c0_norm();
        for i in 1..=r {
            let m = self
                .grid
                .points()
                .iter()
                .map(|&t| self.eval_deriv(t, i).abs())
                .fold(0.0f64, f64::max);
            total += m;
        }
        total
    }

    /// Max of `|f|` over the knots (the `r = 0` norm; no spline build needed).
    pub fn c0_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &CircleFunction) -> f64 {
        assert!(self.grid.same(&other.grid), "grid mismatch in comparison");
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
    }

    /// True when the lift is strictly increasing across the period.
    pub fn is_monotone_lift(&self) -> bool {
        if self.index != 1 {
            return false;
        }
        let v = &self.values;
        let inc = v.windows(2).all(|w| w[0] < w[1]);
        inc && v[v.len() - 1] < v[0] + 1.0
    }

    fn zip_values(
        &self,
        other: &CircleFunction,
        index: i32,
        f: impl Fn(f64, f64) -> f64,
    ) -> CircleFunction {
        assert!(self.grid.same(&other.grid), "grid mismatch in arithmetic");
        let values = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| f(*a, *b))
            .collect();
        Self::from_parts(self.grid.clone(), values, index, self.order)
    }

    pub fn add(&self, other: &CircleFunction) -> CircleFunction {
        let index = self.index + other.index;
        assert!(index <= 1, "cannot add two winding lifts");
        self.zip_values(other, index, |a, b| a + b)
    }

    pub fn sub(&self, other: &CircleFunction) -> CircleFunction {
        let index = self.index - other.index;
        assert!(index >= 0, "subtraction would yield negative winding");
        self.zip_values(other, index, |a, b| a - b)
    }

    /// Pointwise product; both factors must be periodic.
    pub fn mul(&self, other: &CircleFunction) -> CircleFunction {
        assert!(
            self.index == 0 && other.index == 0,
            "products are defined for periodic functions only"
        );
        self.zip_values(other, 0, |a, b| a * b)
    }

    /// Pointwise quotient with a degeneracy guard on the denominator.
    pub fn try_div(&self, den: &CircleFunction, floor: f64) -> Result<CircleFunction> {
        assert!(
            self.index == 0 && den.index == 0,
            "quotients are defined for periodic functions only"
        );
        if let Some((i, v)) = den
            .values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        {
            if v.abs() < floor {
                return Err(Error::DivisionDegenerate {
                    theta: den.grid.points()[i],
                    min_abs: v.abs(),
                });
            }
        }
        Ok(self.zip_values(den, 0, |a, b| a / b))
    }

    pub fn scale(&self, c: f64) -> CircleFunction {
        assert!(self.index == 0, "scaling is defined for periodic functions only");
        let values = self.values.iter().map(|v| v * c).collect();
        Self::from_parts(self.grid.clone(), values, 0, self.order)
    }

    pub fn neg(&self) -> CircleFunction {
        self.scale(-1.0)
    }

    pub fn add_const(&self, c: f64) -> CircleFunction {
        let values = self.values.iter().map(|v| v + c).collect();
        Self::from_parts(self.grid.clone(), values, self.index, self.order)
    }

    /// Pointwise transform of the knot values; the caller declares the
    /// winding index of the result (e.g. `sin(2π·)` of a lift is periodic).
    pub fn map_values(&self, index: i32, f: impl Fn(f64) -> f64) -> CircleFunction {
        debug_assert!((0..=1).contains(&index));
        let values = self.values.iter().map(|v| f(*v)).collect();
        Self::from_parts(self.grid.clone(), values, index, self.order)
    }

    /// Writes `knot,value,index,spline_order` rows (RFC-4180, header first).
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["knot", "value", "index", "spline_order"])?;
        for (t, v) in self.grid.points().iter().zip(self.values.iter()) {
            wtr.write_record([
                format!("{t}"),
                format!("{v}"),
                format!("{}", self.index),
                format!("{}", self.order.degree()),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<CircleFunction> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().ne(["knot", "value", "index", "spline_order"]) {
            return Err(Error::Checkpoint(format!(
                "unexpected circle-function header: {headers:?}"
            )));
        }
        let mut knots = Vec::new();
        let mut values = Vec::new();
        let mut index: Option<i32> = None;
        let mut order: Option<usize> = None;
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Checkpoint(format!("bad numeric field in row {rec:?}")))
            };
            knots.push(parse(0)?);
            values.push(parse(1)?);
            let idx = parse(2)? as i32;
            let ord = parse(3)? as usize;
            if *index.get_or_insert(idx) != idx || *order.get_or_insert(ord) != ord {
                return Err(Error::Checkpoint("inconsistent metadata columns".into()));
            }
        }
        let grid = Grid::from_points(knots)?;
        CircleFunction::new(
            grid,
            values,
            index.ok_or_else(|| Error::Checkpoint("empty circle-function file".into()))?,
            SplineOrder::from_degree(order.unwrap())?,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAU: f64 = std::f64::consts::TAU;

    fn sine(grid: &Grid) -> CircleFunction {
        CircleFunction::from_fn(grid.clone(), 0, SplineOrder::Cubic, |t| (TAU * t).sin()).unwrap()
    }

    #[test]
    fn identity_and_lift_evaluation() {
        let g = Grid::uniform(32);
        let id = CircleFunction::identity(&g, SplineOrder::Cubic);
        assert_eq!(id.eval(0.25), 0.25);
        assert!((id.eval(1.3) - 1.3).abs() < 1e-13);
        assert!((id.eval(-0.7) + 0.7).abs() < 1e-13);

        let a = CircleFunction::from_fn(g, 1, SplineOrder::Cubic, |t| {
            t + 0.3 + 0.02 * (TAU * t).sin()
        })
        .unwrap();
        for th in [0.0, 0.11, 0.77] {
            assert!((a.eval(th + 1.0) - a.eval(th) - 1.0).abs() < 1e-12);
        }
        assert!(a.is_monotone_lift());
    }

    #[test]
    fn eval_matches_sharp_cubic_bound_between_knots() {
        let n = 512;
        let g = Grid::uniform(n);
        let f = sine(&g);
        let bound = 5.0 / 384.0 * TAU.powi(4) / (n as f64).powi(4);
        let mut worst = 0.0f64;
        for i in 0..2048 {
            let x = (i as f64 + 0.5) / 2048.0;
            worst = worst.max((f.eval(x) - (TAU * x).sin()).abs());
        }
        assert!(worst < bound * 1.05);
    }

    #[test]
    fn derivative_of_rotation_is_one() {
        let g = Grid::uniform(16);
        let rot = CircleFunction::rotation(&g, 0.37, SplineOrder::Cubic);
        let d = rot.derivative();
        assert_eq!(d.index(), 0);
        for v in d.values() {
            assert!((v - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn derivative_error_bound_for_sine() {
        let n = 256;
        let g = Grid::uniform(n);
        let f = sine(&g);
        let d = f.derivative();
        let bound = (1.0 / 24.0) * TAU.powi(4) / (n as f64).powi(3);
        for (t, v) in g.points().iter().zip(d.values()) {
            assert!((v - TAU * (TAU * t).cos()).abs() <= bound * 1.05);
        }
    }

    #[test]
    fn compose_with_identity_is_resampling() {
        let g = Grid::uniform(64);
        let f = sine(&g);
        let id = CircleFunction::identity(&g, SplineOrder::Cubic);
        // f ∘ id = f exactly at the knots
        assert!(f.compose(&id).max_abs_diff(&f) < 1e-15);
        // id ∘ g = g
        let a = CircleFunction::rotation(&g, 0.2, SplineOrder::Cubic);
        assert!(id.compose(&a).max_abs_diff(&a) < 1e-13);
    }

    #[test]
    fn compose_against_analytic_oracle() {
        let n = 256;
        let g = Grid::uniform(n);
        let f = sine(&g);
        let a = CircleFunction::from_fn(g.clone(), 1, SplineOrder::Cubic, |t| {
            t + 0.25 + 0.05 * (TAU * t).sin()
        })
        .unwrap();
        let h = f.compose(&a);
        assert_eq!(h.index(), 0);
        let bound = 5.0 / 384.0 * TAU.powi(4) / (n as f64).powi(4) * (1.0 + 0.05 * TAU);
        for (t, v) in g.points().iter().zip(h.values()) {
            let exact = (TAU * (t + 0.25 + 0.05 * (TAU * t).sin())).sin();
            assert!((v - exact).abs() < bound * 2.0);
        }
    }

    #[test]
    fn composition_indices_multiply() {
        let g = Grid::uniform(16);
        let id = CircleFunction::identity(&g, SplineOrder::Cubic);
        let per = sine(&g);
        assert_eq!(id.compose(&id).index(), 1);
        assert_eq!(per.compose(&id).index(), 0);
        assert_eq!(id.compose(&per).index(), 0);
    }

    #[test]
    fn composition_associativity_within_interpolation_error() {
        let n = 512;
        let g = Grid::uniform(n);
        let a = CircleFunction::from_fn(g.clone(), 1, SplineOrder::Cubic, |t| {
            t + 0.31 + 0.03 * (TAU * t).sin()
        })
        .unwrap();
        let b = CircleFunction::from_fn(g.clone(), 1, SplineOrder::Cubic, |t| {
            t + 0.12 - 0.02 * (TAU * t).cos()
        })
        .unwrap();
        let f = sine(&g);
        let lhs = f.compose(&a).compose(&b);
        let rhs = f.compose(&a.compose(&b));
        // both sides agree with the exact composition up to interpolation
        // error, so with each other up to twice that
        let bound = 2.0 * 5.0 / 384.0 * TAU.powi(4) / (n as f64).powi(4) * 3.0;
        assert!(lhs.max_abs_diff(&rhs) < bound);
    }

    #[test]
    fn chain_rule_consistency() {
        let n = 512;
        let g = Grid::uniform(n);
        let f = sine(&g);
        let a = CircleFunction::from_fn(g.clone(), 1, SplineOrder::Cubic, |t| {
            t + 0.2 + 0.04 * (TAU * t).sin()
        })
        .unwrap();
        let lhs = f.compose(&a).derivative();
        let rhs = f.derivative().compose(&a).mul(&a.derivative());
        let bound = 2.0 * (1.0 / 24.0) * TAU.powi(4) / (n as f64).powi(3) * 3.0;
        assert!(lhs.max_abs_diff(&rhs) < bound);
    }

    #[test]
    fn cr_norm_sums_derivative_sups() {
        let g = Grid::uniform(256);
        let c = CircleFunction::constant(&g, -2.5, SplineOrder::Cubic);
        assert_eq!(c.cr_norm(0), 2.5);
        // spline derivatives of a constant vanish only up to amplified
        // round-off from the two divided differences
        assert!((c.cr_norm(2) - 2.5).abs() < 1e-8);

        let f = sine(&g);
        assert!((f.cr_norm(0) - 1.0).abs() < 1e-3);
        assert!((f.cr_norm(1) - (1.0 + TAU)).abs() < 1e-2);
        assert!((f.cr_norm(2) - (1.0 + TAU + TAU * TAU)).abs() < 0.05);
        assert!(f.cr_norm(0) <= f.cr_norm(1) && f.cr_norm(1) <= f.cr_norm(2));
    }

    #[test]
    fn resample_preserves_values_and_index() {
        let g = Grid::uniform(64);
        let a = CircleFunction::from_fn(g.clone(), 1, SplineOrder::Cubic, |t| {
            t + 0.4 + 0.01 * (TAU * t).cos()
        })
        .unwrap();
        let fine = Grid::uniform(128);
        let r = a.resample(&fine);
        assert_eq!(r.index(), 1);
        for (i, t) in g.points().iter().enumerate() {
            // original knots are every other fine knot
            assert!((r.values()[2 * i] - a.values()[i]).abs() < 1e-14, "at {t}");
        }
    }

    #[test]
    fn arithmetic_checks_indices() {
        let g = Grid::uniform(16);
        let id = CircleFunction::identity(&g, SplineOrder::Cubic);
        let f = sine(&g);
        assert_eq!(id.add(&f).index(), 1);
        assert_eq!(id.sub(&id).index(), 0);
        assert_eq!(f.mul(&f).index(), 0);
        let q = f.try_div(&CircleFunction::constant(&g, 2.0, SplineOrder::Cubic), 1e-12);
        assert!((q.unwrap().values()[1] - f.values()[1] / 2.0).abs() < 1e-15);
        let z = CircleFunction::zero(&g, SplineOrder::Cubic);
        assert!(matches!(
            f.try_div(&z, 1e-12),
            Err(Error::DivisionDegenerate { .. })
        ));
    }

    #[test]
    fn csv_round_trip_is_bit_identical() {
        let g = Grid::uniform(32);
        let a = CircleFunction::from_fn(g, 1, SplineOrder::Quadratic, |t| {
            t + 0.123456789012345 + 0.01 * (TAU * t).sin()
        })
        .unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let b = CircleFunction::read_csv(&buf[..]).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.grid().points(), b.grid().points());
        assert_eq!(a.index(), b.index());
        assert_eq!(a.order(), b.order());
        let mut buf2 = Vec::new();
        b.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }
}
