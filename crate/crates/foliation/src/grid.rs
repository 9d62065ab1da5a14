//! Knot grids on the unit circle.
//!
//! A grid is a strictly increasing list of sites in `[0, 1)` understood
//! periodically with period 1. Grids are shared (`Arc`) between the many
//! circle functions living on them, so equality first checks pointer identity.

use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Grid {
    pts: Arc<Vec<f64>>,
}

impl Grid {
    /// Uniform grid `θ_i = i/n`.
    pub fn uniform(n: usize) -> Grid {
        assert!(n >= 4, "grid needs at least 4 sites, got {n}");
        let pts = (0..n).map(|i| i as f64 / n as f64).collect();
        Grid {
            pts: Arc::new(pts),
        }
    }

    /// Grid from explicit sites; they must be strictly increasing in `[0, 1)`.
    pub fn from_points(pts: Vec<f64>) -> Result<Grid> {
        if pts.len() < 4 {
            return Err(Error::invalid(format!(
                "grid needs at least 4 sites, got {}",
                pts.len()
            )));
        }
        if !pts.iter().all(|p| p.is_finite() && (0.0..1.0).contains(p)) {
            return Err(Error::invalid("grid sites must lie in [0, 1)"));
        }
        if !pts.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("grid sites must be strictly increasing"));
        }
        Ok(Grid {
            pts: Arc::new(pts),
        })
    }

    /// Uniform grid with twice the resolution of this one if uniform;
    /// otherwise inserts interval midpoints.
    pub fn doubled(&self) -> Grid {
        let n = self.len();
        let pts = &self.pts;
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..n {
            let a = pts[i];
            let b = if i + 1 < n { pts[i + 1] } else { pts[0] + 1.0 };
            out.push(a);
            let mid = 0.5 * (a + b);
            out.push(if mid >= 1.0 { mid - 1.0 } else { mid });
        }
        Grid::from_points(out).expect("midpoint refinement preserves grid invariants")
    }

    /// Inserts midpoints only in the intervals whose second difference of
    /// `values` exceeds the `quantile` level of all second differences.
    /// Returns `None` when nothing exceeds the threshold.
    pub fn refined_where_irregular(&self, values: &[f64], quantile: f64) -> Option<Grid> {
        assert_eq!(values.len(), self.len());
        let n = self.len();
        let d2: Vec<f64> = (0..n)
            .map(|i| {
                let prev = values[(i + n - 1) % n];
                let next = values[(i + 1) % n];
                (next - 2.0 * values[i] + prev).abs()
            })
            .collect();
        let mut sorted = d2.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let idx = ((n as f64 - 1.0) * quantile.clamp(0.0, 1.0)).round() as usize;
        let level = sorted[idx];
        if level == 0.0 {
            return None;
        }
        let mut out = Vec::with_capacity(2 * n);
        let mut inserted = false;
        for i in 0..n {
            let a = self.pts[i];
            let b = if i + 1 < n {
                self.pts[i + 1]
            } else {
                self.pts[0] + 1.0
            };
            out.push(a);
            if d2[i] >= level || d2[(i + 1) % n] >= level {
                let mid = 0.5 * (a + b);
                out.push(if mid >= 1.0 { mid - 1.0 } else { mid });
                inserted = true;
            }
        }
        if inserted {
            // a midpoint in the wrap-around interval may land below the
            // first site after reduction mod 1
            out.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Some(Grid::from_points(out).expect("refinement preserves grid invariants"))
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[f64] {
        &self.pts
    }

    /// True when the sites are equally spaced (within round-off).
    pub fn is_uniform(&self) -> bool {
        let n = self.len();
        let h = 1.0 / n as f64;
        self.pts
            .iter()
            .enumerate()
            .all(|(i, &p)| (p - i as f64 * h).abs() < 1e-12)
    }

    pub fn same(&self, other: &Grid) -> bool {
        Arc::ptr_eq(&self.pts, &other.pts) || self.pts == other.pts
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.same(other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_sites() {
        let g = Grid::uniform(8);
        assert_eq!(g.len(), 8);
        assert_eq!(g.points()[3], 3.0 / 8.0);
        assert!(g.is_uniform());
    }

    #[test]
    fn doubling_interleaves_midpoints() {
        let g = Grid::uniform(8).doubled();
        assert_eq!(g.len(), 16);
        assert!(g.is_uniform());
        assert!((g.points()[1] - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_unsorted_sites() {
        assert!(Grid::from_points(vec![0.0, 0.5, 0.25, 0.75]).is_err());
        assert!(Grid::from_points(vec![0.0, 0.25, 0.5, 1.0]).is_err());
    }

    #[test]
    fn adaptive_refinement_targets_irregular_interval() {
        let g = Grid::uniform(16);
        // A kink at site 8 makes its second difference dominate.
        let vals: Vec<f64> = g.points().iter().map(|&t| (t - 0.5).abs()).collect();
        let refined = g.refined_where_irregular(&vals, 0.9).unwrap();
        assert!(refined.len() > 16);
        assert!(refined.len() < 32);
        // the refined grid keeps every original site
        for p in g.points() {
            assert!(refined.points().iter().any(|q| (q - p).abs() < 1e-15));
        }
    }
}
