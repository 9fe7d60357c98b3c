//! Uniform quantization with subtractive dither, the baseline every other
//! quantizer in this crate is compared against.

use rand::Rng;

use crate::error::{invalid, Result};
use crate::grid::{ScalarGrid, YLattice};
use crate::source::{differential_entropy, SourceModel};

/// Step size and range of a midtread uniform quantizer. `t_max = None` means
/// an unbounded index set (variable rate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformQuantizerSpec {
    pub delta: f64,
    pub t_max: Option<u32>,
}

impl UniformQuantizerSpec {
    pub fn new(delta: f64, t_max: Option<u32>) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid(format!("step size must be positive, got {delta}")));
        }
        Ok(Self { delta, t_max })
    }

    pub fn unbounded(delta: f64) -> Result<Self> {
        Self::new(delta, None)
    }

    /// Index of the cell `(iΔ - Δ/2, iΔ + Δ/2]` holding `x`, saturated to `±T`.
    pub fn index(&self, x: f64) -> i64 {
        let i = (x / self.delta - 0.5).ceil() as i64;
        match self.t_max {
            Some(t) => i.clamp(-(t as i64), t as i64),
            None => i,
        }
    }

    /// True when the source support lies inside `[-TΔ, TΔ]`, so the
    /// dithered input never saturates.
    pub fn covers(&self, source: &SourceModel) -> bool {
        match self.t_max {
            None => true,
            Some(t) => {
                let reach = t as f64 * self.delta;
                source.x_min() >= -reach && source.x_max() <= reach
            }
        }
    }
}

/// A dither value in `(-Δ/2, Δ/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DitherRealization(f64);

impl DitherRealization {
    pub fn new(z: f64, delta: f64) -> Result<Self> {
        if !(z > -0.5 * delta && z <= 0.5 * delta) {
            return Err(invalid(format!("dither {z} outside (-{0}, {0}]", 0.5 * delta)));
        }
        Ok(Self(z))
    }

    pub fn zero() -> Self {
        Self(0.0)
    }

    /// Draws `Δ(1/2 - u)` for `u` uniform on `[0, 1)`.
    pub fn draw(rng: &mut impl Rng, delta: f64) -> Self {
        Self(delta * (0.5 - rng.random::<f64>()))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

pub fn uniform_quantize(x: f64, spec: &UniformQuantizerSpec) -> f64 {
    spec.index(x) as f64 * spec.delta
}

/// `log2(2T + 1)`.
pub fn fixed_rate_of(spec: &UniformQuantizerSpec) -> Result<f64> {
    match spec.t_max {
        Some(t) => Ok(((2 * t as u64 + 1) as f64).log2()),
        None => Err(invalid("fixed rate needs a finite range parameter")),
    }
}

/// `Q(x + z) - z`.
pub fn dithered_reconstruct(x: f64, z: DitherRealization, spec: &UniformQuantizerSpec) -> f64 {
    uniform_quantize(x + z.value(), spec) - z.value()
}

/// Density of `X + N` with `N` uniform on `(-Δ/2, Δ/2)`, sampled on the
/// dither lattice. Each value is an exact window integral of the
/// piecewise-linear source density.
pub fn smoothed_density(source: &SourceModel, delta: f64) -> Result<ScalarGrid> {
    if !(delta > 0.0) {
        return Err(invalid(format!("step size must be positive, got {delta}")));
    }
    let lat = YLattice::for_source_grid(source.pdf(), delta);
    let half = lat.half_window as i64;
    let lo = lat.floor_index(source.x_min()) - half - 1;
    let hi = lat.ceil_index(source.x_max()) + half + 1;
    // cdf on [lo - half, hi + half]
    let cdf: Vec<f64> = (lo - half..=hi + half).map(|i| source.cdf(lat.node(i))).collect();
    let w = 2 * half as usize;
    let vals: Vec<f64> = (0..=(hi - lo) as usize).map(|j| (cdf[j + w] - cdf[j]) / delta).collect();
    ScalarGrid::new(lat.node(lo), lat.node(hi), vals)
}

/// Rate of the entropy-coded dithered quantizer, `h(X + N) - log2 Δ` bits.
pub fn conventional_variable_rate(source: &SourceModel, delta: f64) -> Result<f64> {
    let dens = smoothed_density(source, delta)?;
    Ok(differential_entropy(&dens)? - delta.log2())
}

/// Mean squared error of the dithered quantizer. Without overload this is
/// `Δ²/12`; with overload the saturated tails add `E[(|X| - TΔ)²; |X| > TΔ]`.
pub fn conventional_distortion(spec: &UniformQuantizerSpec, source: &SourceModel) -> f64 {
    let granular = spec.delta * spec.delta / 12.0;
    let Some(t) = spec.t_max else {
        return granular;
    };
    if spec.covers(source) {
        return granular;
    }
    let reach = t as f64 * spec.delta;
    // for x > TΔ the reconstruction is TΔ - z, error x - TΔ + z
    let (p_hi, m_hi, s_hi) = source.interval_moments(reach, source.x_max());
    let (p_lo, m_lo, s_lo) = source.interval_moments(source.x_min(), -reach);
    let upper = s_hi - 2.0 * reach * m_hi + reach * reach * p_hi;
    let lower = s_lo + 2.0 * reach * m_lo + reach * reach * p_lo;
    granular + upper.max(0.0) + lower.max(0.0)
}

/// `E[X X̂]` of the dithered quantizer. The dither averages the
/// reconstruction to `x` inside `[-TΔ, TΔ]` and to `±TΔ` beyond it.
pub fn conventional_cross_moment(spec: &UniformQuantizerSpec, source: &SourceModel) -> f64 {
    let power = source.second_moment();
    let Some(t) = spec.t_max else {
        return power;
    };
    if spec.covers(source) {
        return power;
    }
    let reach = t as f64 * spec.delta;
    let (_, m_hi, s_hi) = source.interval_moments(reach, source.x_max());
    let (_, m_lo, s_lo) = source.interval_moments(source.x_min(), -reach);
    power - (s_hi - reach * m_hi) - (s_lo + reach * m_lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::DEFAULT_POINTS;

    #[test]
    fn quantizer_cells_are_half_open() {
        let inf = UniformQuantizerSpec::unbounded(1.0).unwrap();
        assert_eq!(uniform_quantize(0.3, &inf), 0.0);
        assert_eq!(uniform_quantize(0.5, &inf), 0.0);
        assert_eq!(uniform_quantize(0.5 + 1e-12, &inf), 1.0);
        assert_eq!(uniform_quantize(-0.5, &inf), -1.0);
        let t3 = UniformQuantizerSpec::new(1.0, Some(3)).unwrap();
        assert_eq!(uniform_quantize(7.2, &t3), 3.0);
        assert_eq!(uniform_quantize(-7.2, &t3), -3.0);
        assert!(UniformQuantizerSpec::new(0.0, None).is_err());
    }

    #[test]
    fn fixed_rates() {
        let r = |t| fixed_rate_of(&UniformQuantizerSpec::new(1.0, Some(t)).unwrap()).unwrap();
        assert!((r(1) - 3f64.log2()).abs() < 1e-15);
        assert!((r(3) - 7f64.log2()).abs() < 1e-15);
        assert_eq!(r(0), 0.0);
        assert!(fixed_rate_of(&UniformQuantizerSpec::unbounded(1.0).unwrap()).is_err());
    }

    #[test]
    fn dithered_reconstruction() {
        let inf = UniformQuantizerSpec::unbounded(1.0).unwrap();
        let z = DitherRealization::new(0.4, 1.0).unwrap();
        assert!((dithered_reconstruct(0.3, z, &inf) - 0.6).abs() < 1e-15);
        for i in -50..=50 {
            let x = i as f64 * 0.0731;
            assert_eq!(dithered_reconstruct(x, DitherRealization::zero(), &inf), uniform_quantize(x, &inf));
        }
        assert!(DitherRealization::new(-0.5, 1.0).is_err());
        assert!(DitherRealization::new(0.5, 1.0).is_ok());
    }

    #[test]
    fn no_overload_distortion_is_delta_squared_over_twelve() {
        let s = SourceModel::truncated_gaussian(1.0, 3.0, DEFAULT_POINTS).unwrap();
        let spec = UniformQuantizerSpec::new(1.0, Some(3)).unwrap();
        assert_eq!(conventional_distortion(&spec, &s), 1.0 / 12.0);
        let spec = UniformQuantizerSpec::unbounded(0.5).unwrap();
        assert!((conventional_distortion(&spec, &s) - 0.25 / 12.0).abs() < 1e-15);
        let spec = UniformQuantizerSpec::new(1.0, Some(1)).unwrap();
        assert!(conventional_distortion(&spec, &s) > 1.0 / 12.0);
    }

    #[test]
    fn variable_rate_decreases_with_step() {
        let s = SourceModel::truncated_gaussian(1.0, 3.0, 601).unwrap();
        let mut last = f64::INFINITY;
        for d in [0.25, 0.5, 1.0, 2.0] {
            let r = conventional_variable_rate(&s, d).unwrap();
            assert!(r > 0.0 && r < last);
            last = r;
        }
    }
}
