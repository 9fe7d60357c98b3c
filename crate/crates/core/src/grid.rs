//! Uniformly sampled scalar functions and the dither-domain lattice.

use crate::error::{invalid, Result};

/// Samples of a scalar function at uniformly spaced abscissae, both endpoints
/// included. Values between samples are linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    x_min: f64,
    x_max: f64,
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(x_min: f64, x_max: f64, values: Vec<f64>) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(invalid(format!("grid bounds must satisfy x_min < x_max, got [{x_min}, {x_max}]")));
        }
        if values.len() < 3 {
            return Err(invalid(format!("grid needs at least 3 points, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("grid values must be finite"));
        }
        Ok(Self { x_min, x_max, values })
    }

    pub fn from_fn(x_min: f64, x_max: f64, n_points: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n_points < 3 {
            return Err(invalid(format!("grid needs at least 3 points, got {n_points}")));
        }
        let h = (x_max - x_min) / (n_points - 1) as f64;
        let values = (0..n_points).map(|i| f(x_min + i as f64 * h)).collect();
        Self::new(x_min, x_max, values)
    }

    /// Same abscissae, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(invalid("value count does not match the grid"));
        }
        Self::new(self.x_min, self.x_max, values)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.values.len() - 1) as f64
    }

    pub fn abscissa(&self, i: usize) -> f64 {
        if i + 1 == self.values.len() {
            self.x_max
        } else {
            self.x_min + i as f64 * self.spacing()
        }
    }

    pub fn abscissae(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| self.abscissa(i))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Segment index and local offset of `x`, clamped into the grid.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let h = self.spacing();
        let last = self.values.len() - 2;
        let t = ((x - self.x_min) / h).floor();
        let k = if t <= 0.0 { 0 } else { (t as usize).min(last) };
        let u = (x - self.abscissa(k)).clamp(0.0, h);
        (k, u)
    }

    /// Linear interpolation, holding the end values outside the domain.
    pub fn eval_clamped(&self, x: f64) -> f64 {
        if x <= self.x_min {
            return self.values[0];
        }
        if x >= self.x_max {
            return self.values[self.values.len() - 1];
        }
        let (k, u) = self.locate(x);
        let t = u / self.spacing();
        self.values[k] + (self.values[k + 1] - self.values[k]) * t
    }

    /// Linear interpolation, zero outside the domain (densities).
    pub fn eval_or_zero(&self, x: f64) -> f64 {
        if x < self.x_min || x > self.x_max {
            0.0
        } else {
            self.eval_clamped(x)
        }
    }

    /// Trapezoidal quadrature weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        if i == 0 || i + 1 == self.values.len() {
            0.5 * h
        } else {
            h
        }
    }

    pub fn trapezoid(&self) -> f64 {
        self.trapezoid_of(|_, v| v)
    }

    /// Trapezoidal integral of `f(x_i, v_i)` over the grid.
    pub fn trapezoid_of(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| self.weight(i) * f(self.abscissa(i), v))
            .sum()
    }
}

/// Uniform lattice `y_j = j * step` anchored at zero on which every
/// dither-domain quantity (output density, expander) is sampled.
///
/// `step = delta / (2 * half_window)`, so `y_j ± delta/2` are again lattice
/// nodes and `±T*delta` is always a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YLattice {
    pub delta: f64,
    pub half_window: usize,
}

impl YLattice {
    /// Lattice with four times the x-grid density at unit step size. The
    /// window count depends only on the x-grid, so rescaling `delta` rescales
    /// the lattice with it.
    pub fn for_source_grid(grid: &ScalarGrid, delta: f64) -> Self {
        let width = grid.x_max() - grid.x_min();
        let m = (2.0 * (grid.len() - 1) as f64 / width).ceil().max(4.0) as usize;
        Self { delta, half_window: m }
    }

    pub fn step(&self) -> f64 {
        self.delta / (2 * self.half_window) as f64
    }

    pub fn node(&self, j: i64) -> f64 {
        j as f64 * self.step()
    }

    pub fn floor_index(&self, y: f64) -> i64 {
        (y / self.step()).floor() as i64
    }

    pub fn ceil_index(&self, y: f64) -> i64 {
        (y / self.step()).ceil() as i64
    }

    /// Lattice offset corresponding to `delta`.
    pub fn window(&self) -> i64 {
        2 * self.half_window as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_short_or_inverted_grids() {
        assert!(ScalarGrid::new(0.0, 1.0, vec![1.0, 2.0]).is_err());
        assert!(ScalarGrid::new(1.0, 0.0, vec![1.0; 5]).is_err());
        assert!(ScalarGrid::new(0.0, 1.0, vec![1.0; 3]).is_ok());
    }

    #[test]
    fn interpolation_and_trapezoid_are_exact_for_linear_functions() {
        let g = ScalarGrid::from_fn(-1.0, 2.0, 31, |x| 2.0 * x + 1.0).unwrap();
        assert!((g.eval_clamped(0.123) - 1.246).abs() < 1e-12);
        assert_eq!(g.eval_clamped(5.0), 5.0);
        assert_eq!(g.eval_or_zero(5.0), 0.0);
        // ∫_{-1}^{2} (2x+1) dx = 3 + 3 = 6
        assert!((g.trapezoid() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn lattice_window_lands_on_nodes() {
        let g = ScalarGrid::from_fn(-3.0, 3.0, 2001, |_| 0.0).unwrap();
        let lat = YLattice::for_source_grid(&g, 1.0);
        assert_eq!(lat.half_window, 667);
        let half = lat.node(lat.half_window as i64);
        assert!((half - 0.5).abs() < 1e-15);
        // x density is 333.3 per unit; y density must be at least 4x that
        assert!(1.0 / lat.step() >= 4.0 * 2000.0 / 6.0);
    }
}
