//! Quadrature of the companded dithered quantizer's distortion and rate.
//!
//! The x-integral is the trapezoidal rule on the source grid. The average
//! over the dither is exact: with `w` piecewise linear on the lattice,
//! `(1/Δ)∫ (x - w(c + n))² dn` is a closed-form window integral. The output
//! density is sampled on the lattice, where `y ± Δ/2` are again nodes.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::error::{invalid, Result};
use crate::grid::{ScalarGrid, YLattice};
use crate::source::{plogp, SourceModel};

use super::map::{Expander, MonotoneMap};

/// Fixed rate with `2T + 1` levels, or entropy-coded variable rate with
/// Lagrange multiplier `lambda` on the rate in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateMode {
    Fixed { levels: u32 },
    Variable { lambda: f64 },
}

impl RateMode {
    /// `TΔ` in fixed-rate mode.
    pub fn reach(&self, delta: f64) -> Option<f64> {
        match self {
            RateMode::Fixed { levels } => Some(*levels as f64 * delta),
            RateMode::Variable { .. } => None,
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            RateMode::Fixed { .. } => 0.0,
            RateMode::Variable { lambda } => *lambda,
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, RateMode::Fixed { .. })
    }
}

/// Everything the design loop needs about one `(g, w)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub distortion: f64,
    pub granular: f64,
    pub overload: f64,
    pub rate: f64,
    /// `E[X X̂]`.
    pub cross: f64,
    /// `E[X̂]`.
    pub recon_mean: f64,
    pub cost: f64,
}

/// Lattice samples of `G(t) = F_X(g⁻¹(t))` and of the output density.
#[derive(Debug, Clone)]
pub(crate) struct RateState {
    i_lo: i64,
    cdf: Vec<f64>,
    density: Vec<f64>,
    pub entropy: f64,
}

impl RateState {
    fn density_at(&self, j: i64, m: i64) -> f64 {
        self.density[(j - self.i_lo - m) as usize]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CostModel<'a> {
    pub source: &'a SourceModel,
    pub delta: f64,
    pub mode: RateMode,
    pub lattice: YLattice,
    /// Weight on the orthogonality penalty `σ² - E[X X̂]`.
    pub penalty: f64,
}

impl<'a> CostModel<'a> {
    pub fn new(source: &'a SourceModel, delta: f64, mode: RateMode) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid(format!("step size must be positive, got {delta}")));
        }
        if let RateMode::Variable { lambda } = mode {
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(invalid(format!("lambda must be nonnegative, got {lambda}")));
            }
        }
        let lattice = YLattice::for_source_grid(source.pdf(), delta);
        Ok(Self { source, delta, mode, lattice, penalty: 0.0 })
    }

    pub fn with_penalty(mut self, penalty: f64) -> Self {
        self.penalty = penalty;
        self
    }

    fn check_domain(&self, g: &MonotoneMap) -> Result<()> {
        let pdf = self.source.pdf();
        if g.len() != pdf.len() || g.grid().x_min() != pdf.x_min() || g.grid().x_max() != pdf.x_max() {
            return Err(invalid("compressor must be sampled on the source grid"));
        }
        Ok(())
    }

    fn clamp(&self, c: f64) -> f64 {
        match self.mode.reach(self.delta) {
            Some(r) => c.clamp(-r, r),
            None => c,
        }
    }

    /// Conditional-mean expander, scaled by `1 + penalty/2` when the
    /// orthogonality penalty is active.
    pub fn expander(&self, g: &MonotoneMap) -> Result<Expander> {
        self.check_domain(g)?;
        let lat = self.lattice;
        let m = lat.half_window as i64;
        let half = 0.5 * self.delta;
        let reach = self.mode.reach(self.delta);
        let (ylo, yhi) = match reach {
            Some(r) => (g.first().max(-r) - half, g.last().min(r) + half),
            None => (g.first() - half, g.last() + half),
        };
        let j_lo = lat.floor_index(ylo) - 1;
        let j_hi = lat.ceil_index(yhi) + 1;
        let mut xs = g.inverse_on_lattice(&lat, j_lo - m, j_hi + m);
        let (x_neg, x_pos) = match reach {
            Some(r) => (g.inverse(-r), g.inverse(r)),
            None => (self.source.x_min(), self.source.x_max()),
        };
        if reach.is_some() {
            for x in xs.iter_mut() {
                *x = x.clamp(x_neg, x_pos);
            }
        }
        let moments: Vec<(f64, f64)> = xs
            .iter()
            .map(|&x| {
                let (p, m1, _) = self.source.partial_moments(x);
                (p, m1)
            })
            .collect();
        // saturated tails land on ±TΔ + n
        let (tail_lo, tail_hi, r_idx) = match reach {
            Some(r) => {
                let (p_lo, m_lo, _) = self.source.partial_moments(x_neg);
                let (p_x, m_x, _) = self.source.partial_moments(x_pos);
                let (p_all, m_all, _) = self.source.partial_moments(self.source.x_max());
                let r_idx = (r / lat.step()).round() as i64;
                ((p_lo, m_lo), (p_all - p_x, m_all - m_x), r_idx)
            }
            None => ((0.0, 0.0), (0.0, 0.0), 0),
        };
        let scale = 1.0 + 0.5 * self.penalty;
        let mut vals = Vec::with_capacity((j_hi - j_lo + 1) as usize);
        for j in j_lo..=j_hi {
            let a = (j - m - (j_lo - m)) as usize;
            let b = a + 2 * m as usize;
            let mut den = moments[b].0 - moments[a].0;
            let mut num = moments[b].1 - moments[a].1;
            if reach.is_some() {
                if j > r_idx - m && j <= r_idx + m {
                    den += tail_hi.0;
                    num += tail_hi.1;
                }
                if j > -r_idx - m && j <= -r_idx + m {
                    den += tail_lo.0;
                    num += tail_lo.1;
                }
            }
            let w = if den > 1e-13 { num / den } else { 0.5 * (xs[a] + xs[b]) };
            vals.push(scale * w);
        }
        Expander::new(lat, j_lo, vals)
    }

    /// `(1/Δ)(∫ w, ∫ w²)` over the dither window around `c`.
    fn window(&self, w: &Expander, c: f64) -> (f64, f64) {
        let half = 0.5 * self.delta;
        let (i1, i2) = w.window(c - half, c + half);
        (i1 / self.delta, i2 / self.delta)
    }

    /// Per-node `(f φ, f x E_n[w], f E_n[w])` with `φ` the dither-averaged
    /// squared error at node k.
    fn node_terms(&self, g: &MonotoneMap, w: &Expander) -> Vec<(f64, f64, f64)> {
        let pdf = self.source.pdf();
        pdf.values()
            .iter()
            .zip(g.values())
            .enumerate()
            .map(|(k, (&f, &gk))| {
                let x = pdf.abscissa(k);
                let (m1, m2) = self.window(w, self.clamp(gk));
                let phi = (x * x - 2.0 * x * m1 + m2).max(0.0);
                (f * phi, f * x * m1, f * m1)
            })
            .collect()
    }

    /// Granular and overload parts of the distortion. Both integrate the
    /// same piecewise-linear interpolant of the node error, split where
    /// `g` crosses `±TΔ`, so they sum to the trapezoidal total.
    pub fn distortion_split(&self, g: &MonotoneMap, w: &Expander) -> Result<(f64, f64)> {
        self.check_domain(g)?;
        let terms = self.node_terms(g, w);
        Ok(self.split_terms(g, &terms))
    }

    fn split_terms(&self, g: &MonotoneMap, terms: &[(f64, f64, f64)]) -> (f64, f64) {
        let h = self.source.pdf().spacing();
        let gv = g.values();
        let mut granular = 0.0;
        let mut total = 0.0;
        for k in 0..gv.len() - 1 {
            let (e0, e1) = (terms[k].0, terms[k + 1].0);
            let seg = 0.5 * h * (e0 + e1);
            total += seg;
            let Some(r) = self.mode.reach(self.delta) else {
                granular += seg;
                continue;
            };
            let (g0, g1) = (gv[k], gv[k + 1]);
            // fraction of the segment where |g| <= r
            let slope = g1 - g0;
            let to_frac = |v: f64| ((v - g0) / slope).clamp(0.0, 1.0);
            let (a, b) = (to_frac(-r), to_frac(r));
            if b > a {
                let ea = e0 + (e1 - e0) * a;
                let eb = e0 + (e1 - e0) * b;
                granular += 0.5 * h * (b - a) * (ea + eb);
            }
        }
        (granular, (total - granular).max(0.0))
    }

    pub(crate) fn rate_state(&self, g: &MonotoneMap) -> RateState {
        let lat = self.lattice;
        let m = lat.half_window as i64;
        let half = 0.5 * self.delta;
        let i_lo = lat.floor_index(g.first() - half) - m - 2;
        let i_hi = lat.ceil_index(g.last() + half) + m + 2;
        let cdf: Vec<f64> = g
            .inverse_on_lattice(&lat, i_lo, i_hi)
            .into_iter()
            .map(|x| self.source.cdf(x))
            .collect();
        let w = 2 * m as usize;
        let density: Vec<f64> = (0..cdf.len() - w).map(|a| (cdf[a + w] - cdf[a]) / self.delta).collect();
        let entropy = -lat.step() * density.iter().map(|&f| plogp(f)).sum::<f64>();
        RateState { i_lo, cdf, density, entropy }
    }

    /// Output density `f_Y` on the lattice.
    pub fn output_density(&self, g: &MonotoneMap) -> Result<ScalarGrid> {
        self.check_domain(g)?;
        let st = self.rate_state(g);
        let m = self.lattice.half_window as i64;
        let lo = st.i_lo + m;
        let hi = lo + st.density.len() as i64 - 1;
        ScalarGrid::new(self.lattice.node(lo), self.lattice.node(hi), st.density)
    }

    /// Rate in bits: `log2(2T+1)` for fixed rate, `h(Y) - log2 Δ` otherwise.
    pub fn rate(&self, g: &MonotoneMap) -> Result<f64> {
        self.check_domain(g)?;
        Ok(match self.mode {
            RateMode::Fixed { levels } => ((2 * levels as u64 + 1) as f64).log2(),
            RateMode::Variable { .. } => self.rate_state(g).entropy - self.delta.log2(),
        })
    }

    /// Distortion by tensor-product quadrature: trapezoid in `x`, `nodes`-point
    /// Gauss-Legendre over the dither interval, applied to the actual
    /// reconstruction `w(Q(g(x) + n) - n)`.
    pub fn tensor_distortion(&self, g: &MonotoneMap, w: &Expander, nodes: usize) -> Result<f64> {
        self.check_domain(g)?;
        let nodes = NonZeroUsize::new(nodes).ok_or_else(|| invalid("quadrature needs at least one node"))?;
        let rule = GaussLegendre::new(nodes);
        let pdf = self.source.pdf();
        let half = 0.5 * self.delta;
        let levels = match self.mode {
            RateMode::Fixed { levels } => Some(levels as i64),
            RateMode::Variable { .. } => None,
        };
        let mut total = 0.0;
        for (k, (&f, &gk)) in pdf.values().iter().zip(g.values()).enumerate() {
            if f == 0.0 {
                continue;
            }
            let x = pdf.abscissa(k);
            let err = rule.integrate(-half, half, |n| {
                let mut i = ((gk + n) / self.delta - 0.5).ceil() as i64;
                if let Some(t) = levels {
                    i = i.clamp(-t, t);
                }
                let e = x - w.eval(i as f64 * self.delta - n);
                e * e
            }) / self.delta;
            total += pdf.weight(k) * f * err;
        }
        Ok(total)
    }

    pub fn evaluate(&self, g: &MonotoneMap, w: &Expander) -> Result<Evaluation> {
        self.check_domain(g)?;
        let pdf = self.source.pdf();
        let terms = self.node_terms(g, w);
        let (granular, overload) = self.split_terms(g, &terms);
        let mut cross = 0.0;
        let mut recon_mean = 0.0;
        for (k, t) in terms.iter().enumerate() {
            let wk = pdf.weight(k);
            cross += wk * t.1;
            recon_mean += wk * t.2;
        }
        let distortion = granular + overload;
        let rate = self.rate(g)?;
        let mut cost = distortion + self.mode.lambda() * rate;
        if self.penalty != 0.0 {
            cost += self.penalty * (self.source.second_moment() - cross);
        }
        Ok(Evaluation { distortion, granular, overload, rate, cross, recon_mean, cost })
    }

    /// `∂h(Y)/∂g_k` in bits for every node, exact for the lattice
    /// quadrature: moving `g_k` shifts the inverse map, and so `G = F∘g⁻¹`,
    /// only at lattice nodes between `g_{k-1}` and `g_{k+1}`.
    fn entropy_gradient(&self, g: &MonotoneMap, st: &RateState) -> Vec<f64> {
        let v = g.values();
        let n = v.len();
        let lat = self.lattice;
        let m = lat.half_window as i64;
        let grid = g.grid();
        let h = grid.spacing();
        let i_max = st.i_lo + st.cdf.len() as i64 - 1;
        // ∂h/∂G_i
        let dlog = |f: f64| f.max(f64::MIN_POSITIVE).log2() + std::f64::consts::LOG2_E;
        let coef = -lat.step() / self.delta;
        let dh_dg = |i: i64| coef * (dlog(st.density_at(i - m, m)) - dlog(st.density_at(i + m, m)));
        let mut out = vec![0.0; n];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            if k > 0 {
                let (a, b) = (v[k - 1], v[k]);
                let i0 = lat.ceil_index(a).max(st.i_lo + m);
                let i1 = lat.floor_index(b).min(i_max - m);
                for i in i0..=i1 {
                    let y = lat.node(i);
                    if y >= b {
                        continue;
                    }
                    let u = (y - a) / (b - a);
                    let x = grid.abscissa(k - 1) + h * u;
                    acc += dh_dg(i) * self.source.density(x) * (-h * u / (b - a));
                }
            }
            if k + 1 < n {
                let (a, b) = (v[k], v[k + 1]);
                let i0 = lat.ceil_index(a).max(st.i_lo + m);
                let i1 = lat.floor_index(b).min(i_max - m);
                for i in i0..=i1 {
                    let y = lat.node(i);
                    if y >= b {
                        continue;
                    }
                    let u = (y - a) / (b - a);
                    let x = grid.abscissa(k) + h * u;
                    acc += dh_dg(i) * self.source.density(x) * (-h * (1.0 - u) / (b - a));
                }
            }
            *slot = acc;
        }
        out
    }

    /// Saturated nodes have zero gradient, so nothing would ever bring them
    /// back into range. For each one, the derivative at `±TΔ` is substituted
    /// when moving inward would lower its error.
    pub(crate) fn overload_pull(&self, g: &MonotoneMap, w: &Expander, grad: &mut [f64]) {
        let Some(r) = self.mode.reach(self.delta) else {
            return;
        };
        let pdf = self.source.pdf();
        let half = 0.5 * self.delta;
        for (k, &gk) in g.values().iter().enumerate() {
            if gk.abs() <= r {
                continue;
            }
            let c = gk.signum() * r;
            let x = pdf.abscissa(k);
            let lo = w.eval(c - half);
            let hi = w.eval(c + half);
            let d = pdf.weight(k) * pdf.values()[k] * ((hi * hi - lo * lo) - 2.0 * x * (hi - lo)) / self.delta;
            // inward means d > 0 above +r and d < 0 below -r
            if d * gk > 0.0 {
                grad[k] = d;
            }
        }
    }

    /// Packs nodes beyond `±TΔ` just outside it, `floor` apart. The cost is
    /// unchanged because saturated nodes all see the clamped value.
    pub(crate) fn pack_overload(&self, values: &mut [f64], floor: f64) {
        let Some(r) = self.mode.reach(self.delta) else {
            return;
        };
        let n = values.len();
        if let Some(first) = values.iter().position(|&v| v > r) {
            for (j, v) in values[first..].iter_mut().enumerate() {
                *v = v.min(r + floor * (j + 1) as f64);
            }
        }
        if let Some(last) = values.iter().rposition(|&v| v < -r) {
            for (j, v) in values[..=last].iter_mut().rev().enumerate() {
                *v = v.max(-r - floor * (j + 1) as f64);
            }
        }
        debug_assert!(n == values.len());
    }

    /// Derivative of the total cost with respect to every node value of `g`,
    /// the expander held fixed.
    pub fn gradient(&self, g: &MonotoneMap, w: &Expander) -> Result<Vec<f64>> {
        self.check_domain(g)?;
        let pdf = self.source.pdf();
        let v = g.values();
        let lambda = self.mode.lambda();
        let reach = self.mode.reach(self.delta);
        let half = 0.5 * self.delta;
        let mut grad: Vec<f64> = v
            .iter()
            .enumerate()
            .map(|(k, &gk)| {
                if reach.is_some_and(|r| gk.abs() > r) {
                    return 0.0;
                }
                let x = pdf.abscissa(k);
                let f = pdf.values()[k];
                let lo = w.eval(gk - half);
                let hi = w.eval(gk + half);
                let d1 = (hi - lo) / self.delta;
                let d2 = (hi * hi - lo * lo) / self.delta;
                let mut d = pdf.weight(k) * f * (d2 - 2.0 * x * d1);
                if self.penalty != 0.0 {
                    d -= self.penalty * pdf.weight(k) * f * x * d1;
                }
                d
            })
            .collect();
        if let (RateMode::Variable { .. }, true) = (self.mode, lambda != 0.0) {
            let st = self.rate_state(g);
            for (gk, dh) in grad.iter_mut().zip(self.entropy_gradient(g, &st)) {
                *gk += lambda * dh;
            }
        }
        Ok(grad)
    }
}
