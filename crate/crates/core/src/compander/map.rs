use crate::error::{invalid, QuantError, Result};
use crate::grid::{ScalarGrid, YLattice};

/// Strictly increasing piecewise-linear map sampled on the source grid (the
/// compressor). Outside its domain the inverse saturates to the domain ends.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneMap {
    grid: ScalarGrid,
}

impl MonotoneMap {
    pub fn new(grid: ScalarGrid) -> Result<Self> {
        if let Some(k) = grid.values().windows(2).position(|w| w[1] <= w[0]) {
            return Err(invalid(format!("map is not strictly increasing at node {k}")));
        }
        Ok(Self { grid })
    }

    pub fn identity(domain: &ScalarGrid) -> Self {
        Self::linear(domain, 1.0)
    }

    pub fn linear(domain: &ScalarGrid, slope: f64) -> Self {
        let vals = domain.abscissae().map(|x| slope * x).collect();
        Self { grid: domain.with_values(vals).expect("same length") }
    }

    pub fn grid(&self) -> &ScalarGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        self.grid.values()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.values()[0]
    }

    pub fn last(&self) -> f64 {
        self.values()[self.len() - 1]
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.grid.eval_clamped(x)
    }

    pub fn inverse(&self, t: f64) -> f64 {
        let v = self.values();
        let n = v.len();
        if t <= v[0] {
            return self.grid.x_min();
        }
        if t >= v[n - 1] {
            return self.grid.x_max();
        }
        let k = v.partition_point(|&g| g <= t) - 1;
        self.inverse_in_segment(k, t)
    }

    pub(crate) fn inverse_in_segment(&self, k: usize, t: f64) -> f64 {
        let v = self.values();
        let h = self.grid.spacing();
        let frac = ((t - v[k]) / (v[k + 1] - v[k])).clamp(0.0, 1.0);
        self.grid.abscissa(k) + h * frac
    }

    /// `g⁻¹` at consecutive lattice nodes `lo..=hi`, by a single sweep.
    pub(crate) fn inverse_on_lattice(&self, lat: &YLattice, lo: i64, hi: i64) -> Vec<f64> {
        let v = self.values();
        let n = v.len();
        let mut out = Vec::with_capacity((hi - lo + 1).max(0) as usize);
        let mut k = 0usize;
        for i in lo..=hi {
            let t = lat.node(i);
            if t <= v[0] {
                out.push(self.grid.x_min());
            } else if t >= v[n - 1] {
                out.push(self.grid.x_max());
            } else {
                while v[k + 1] <= t {
                    k += 1;
                }
                out.push(self.inverse_in_segment(k, t));
            }
        }
        out
    }

    /// Smallest increment the monotone projection enforces.
    pub fn monotone_floor(domain: &ScalarGrid) -> f64 {
        1e-6 * (domain.x_max() - domain.x_min()) / domain.len() as f64
    }

    /// Euclidean projection of `values` onto maps whose increments are at
    /// least `floor`: isotonic regression of `v_k - k*floor`, shifted back.
    pub fn project(domain: &ScalarGrid, values: &[f64], floor: f64) -> Result<Self> {
        let shifted: Vec<f64> = values.iter().enumerate().map(|(k, v)| v - k as f64 * floor).collect();
        let iso = isotonic_fit(&shifted);
        let vals: Vec<f64> = iso.iter().enumerate().map(|(k, v)| v + k as f64 * floor).collect();
        let all_at_floor = vals.windows(2).all(|w| w[1] - w[0] <= floor * (1.0 + 1e-9));
        if all_at_floor || vals.windows(2).any(|w| w[1] <= w[0]) {
            return Err(QuantError::DegenerateMapping(
                "monotone projection collapsed every increment to the floor".into(),
            ));
        }
        Ok(Self { grid: domain.with_values(vals)? })
    }
}

/// Pool-adjacent-violators fit of a nondecreasing sequence (unit weights).
pub(crate) fn isotonic_fit(y: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut sums: Vec<f64> = Vec::with_capacity(y.len());
    let mut counts: Vec<usize> = Vec::with_capacity(y.len());
    for &v in y {
        sums.push(v);
        counts.push(1);
        while sums.len() > 1 {
            let n = sums.len();
            if sums[n - 2] / counts[n - 2] as f64 > sums[n - 1] / counts[n - 1] as f64 {
                let s = sums.pop().unwrap();
                let c = counts.pop().unwrap();
                sums[n - 2] += s;
                counts[n - 2] += c;
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(y.len());
    for (s, c) in sums.iter().zip(&counts) {
        out.extend(std::iter::repeat_n(s / *c as f64, *c));
    }
    out
}

/// Piecewise-linear map sampled on the dither lattice (the expander). Held
/// constant beyond its first and last node.
#[derive(Debug, Clone, PartialEq)]
pub struct Expander {
    lattice: YLattice,
    first_index: i64,
    values: Vec<f64>,
    // exact running integrals of w and w² from the first node
    int1: Vec<f64>,
    int2: Vec<f64>,
}

impl Expander {
    pub fn new(lattice: YLattice, first_index: i64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(invalid("expander needs at least two lattice nodes"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("expander values must be finite"));
        }
        let h = lattice.step();
        let mut int1 = Vec::with_capacity(values.len());
        let mut int2 = Vec::with_capacity(values.len());
        let (mut a1, mut a2) = (0.0, 0.0);
        int1.push(0.0);
        int2.push(0.0);
        for w in values.windows(2) {
            let (a, b) = (w[0], w[1]);
            a1 += 0.5 * h * (a + b);
            a2 += h * (a * a + a * b + b * b) / 3.0;
            int1.push(a1);
            int2.push(a2);
        }
        Ok(Self { lattice, first_index, values, int1, int2 })
    }

    pub fn lattice(&self) -> &YLattice {
        &self.lattice
    }

    pub fn first_index(&self) -> i64 {
        self.first_index
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn abscissae(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |j| self.lattice.node(self.first_index + j as i64))
    }

    pub fn scaled(&self, s: f64) -> Self {
        let vals = self.values.iter().map(|v| s * v).collect();
        Self::new(self.lattice, self.first_index, vals).expect("scaling keeps values finite")
    }

    fn y_first(&self) -> f64 {
        self.lattice.node(self.first_index)
    }

    fn y_last(&self) -> f64 {
        self.lattice.node(self.first_index + self.values.len() as i64 - 1)
    }

    pub fn eval(&self, y: f64) -> f64 {
        let n = self.values.len();
        let h = self.lattice.step();
        let u = (y - self.y_first()) / h;
        if u <= 0.0 {
            return self.values[0];
        }
        let k = u.floor() as usize;
        if k >= n - 1 {
            return self.values[n - 1];
        }
        let t = u - k as f64;
        self.values[k] + (self.values[k + 1] - self.values[k]) * t
    }

    /// `(∫ w, ∫ w²)` from the first node to `y`.
    fn running(&self, y: f64) -> (f64, f64) {
        let n = self.values.len();
        let h = self.lattice.step();
        let y0 = self.y_first();
        if y <= y0 {
            let w0 = self.values[0];
            let d = y - y0;
            return (d * w0, d * w0 * w0);
        }
        let u = (y - y0) / h;
        let k = u.floor() as usize;
        if k >= n - 1 {
            let wl = self.values[n - 1];
            let d = y - self.y_last();
            return (self.int1[n - 1] + d * wl, self.int2[n - 1] + d * wl * wl);
        }
        let s = (u - k as f64) * h;
        let a = self.values[k];
        let slope = (self.values[k + 1] - a) / h;
        let i1 = a * s + 0.5 * slope * s * s;
        let i2 = a * a * s + a * slope * s * s + slope * slope * s * s * s / 3.0;
        (self.int1[k] + i1, self.int2[k] + i2)
    }

    /// `(∫_lo^hi w, ∫_lo^hi w²)`.
    pub fn window(&self, lo: f64, hi: f64) -> (f64, f64) {
        let (a1, a2) = self.running(lo);
        let (b1, b2) = self.running(hi);
        (b1 - a1, b2 - a2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn domain() -> ScalarGrid {
        ScalarGrid::from_fn(-3.0, 3.0, 61, |_| 0.0).unwrap()
    }

    #[test]
    fn inverse_matches_bracketing() {
        let g = MonotoneMap::new(domain().with_values(domain().abscissae().map(|x| x + 0.1 * x.powi(3)).collect()).unwrap()).unwrap();
        for &x in &[-2.95, -1.0, 0.0, 0.37, 2.5] {
            assert!((g.inverse(g.eval(x)) - x).abs() < 1e-12);
        }
        assert_eq!(g.inverse(-1e9), -3.0);
        assert_eq!(g.inverse(1e9), 3.0);
        let lat = YLattice { delta: 1.0, half_window: 5 };
        let swept = g.inverse_on_lattice(&lat, -60, 60);
        for (i, x) in (-60..=60).zip(&swept) {
            assert!((g.inverse(lat.node(i)) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_monotone() {
        let d = domain();
        let mut v: Vec<f64> = d.abscissae().collect();
        v[10] = v[9];
        assert!(MonotoneMap::new(d.with_values(v).unwrap()).is_err());
    }

    #[test]
    fn projection_collapses_constant_input() {
        let d = domain();
        let flat = vec![1.0; d.len()];
        assert!(MonotoneMap::project(&d, &flat, 1e-6).is_err());
    }

    #[test]
    fn expander_windows_are_exact_for_linear_maps() {
        let lat = YLattice { delta: 1.0, half_window: 8 };
        let vals: Vec<f64> = (-40..=40).map(|j| 2.0 * lat.node(j) + 0.5).collect();
        let w = Expander::new(lat, -40, vals).unwrap();
        let (lo, hi) = (-0.83, 1.27);
        let (i1, i2) = w.window(lo, hi);
        let f1 = |y: f64| y * y + 0.5 * y;
        let f2 = |y: f64| (2.0 * y + 0.5).powi(3) / 6.0;
        assert!((i1 - (f1(hi) - f1(lo))).abs() < 1e-12);
        assert!((i2 - (f2(hi) - f2(lo))).abs() < 1e-12);
        // constant extension past the ends
        let (e1, _) = w.window(2.5, 3.5);
        assert!((e1 - w.eval(10.0)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn projection_is_monotone_and_idempotent(v in proptest::collection::vec(-5.0f64..5.0, 61)) {
            let d = domain();
            let floor = 1e-4;
            if let Ok(p) = MonotoneMap::project(&d, &v, floor) {
                for w in p.values().windows(2) {
                    prop_assert!(w[1] - w[0] >= floor * (1.0 - 1e-9));
                }
                let again = MonotoneMap::project(&d, p.values(), floor).unwrap();
                for (a, b) in again.values().iter().zip(p.values()) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }
}
