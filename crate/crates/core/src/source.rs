//! Bounded-support scalar sources sampled on a uniform grid.
//!
//! The density is piecewise linear between grid nodes. CDF and partial
//! moments are the exact integrals of that interpolant, so every identity
//! between them (mass, mean, conditional means) holds to rounding.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, QuantError, Result};
use crate::grid::ScalarGrid;

/// Mass and mean tolerance on a valid source.
pub const DENSITY_TOL: f64 = 1e-9;

/// Default grid resolution over `[-3, 3]`.
pub const DEFAULT_POINTS: usize = 2001;

#[derive(Debug, Clone)]
pub struct SourceModel {
    pdf: ScalarGrid,
    cdf: ScalarGrid,
    // prefix integrals of x f(x) and x^2 f(x) at the nodes
    first: Vec<f64>,
    second: Vec<f64>,
    mean: f64,
    variance: f64,
}

impl SourceModel {
    /// Validates a sampled density and precomputes its integrals.
    pub fn from_density(pdf: ScalarGrid) -> Result<Self> {
        if let Some(v) = pdf.values().iter().find(|&&v| v < 0.0) {
            return Err(invalid(format!("density has a negative value {v}")));
        }
        let n = pdf.len();
        let h = pdf.spacing();
        let f = pdf.values();
        let mut cdf = vec![0.0; n];
        let mut first = vec![0.0; n];
        let mut second = vec![0.0; n];
        for k in 0..n - 1 {
            let (m0, m1, m2) = segment_moments(pdf.abscissa(k), f[k], f[k + 1], h, h);
            cdf[k + 1] = cdf[k] + m0;
            first[k + 1] = first[k] + m1;
            second[k + 1] = second[k] + m2;
        }
        let mass = cdf[n - 1];
        if (mass - 1.0).abs() > DENSITY_TOL {
            return Err(invalid(format!("density mass {mass} is not 1 within {DENSITY_TOL}")));
        }
        let mean = first[n - 1];
        if mean.abs() > DENSITY_TOL {
            return Err(invalid(format!("density mean {mean} is not 0 within {DENSITY_TOL}")));
        }
        let variance = second[n - 1] - mean * mean;
        // pin the top of the CDF so inverse sampling never overruns
        let scale = 1.0 / mass;
        let cdf_vals: Vec<f64> = cdf.iter().map(|c| (c * scale).min(1.0)).collect();
        let cdf = pdf.with_values(cdf_vals)?;
        Ok(Self { pdf, cdf, first, second, mean, variance })
    }

    /// Gaussian truncated to `[-half_width, half_width]` and renormalized;
    /// the variance is that of the truncated density.
    pub fn truncated_gaussian(variance: f64, half_width: f64, n_points: usize) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(invalid(format!("variance must be positive, got {variance}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(invalid(format!("half width must be positive, got {half_width}")));
        }
        if n_points < 3 {
            return Err(invalid(format!("need at least 3 grid points, got {n_points}")));
        }
        if half_width / variance.sqrt() < 2.0 {
            return Err(invalid("truncation must be at least two standard deviations"));
        }
        let raw = ScalarGrid::from_fn(-half_width, half_width, n_points, |x| {
            (-0.5 * x * x / variance).exp()
        })?;
        let mut vals = raw.values().to_vec();
        // symmetric sums so the mean is zero to rounding
        for i in 0..n_points / 2 {
            let j = n_points - 1 - i;
            let avg = 0.5 * (vals[i] + vals[j]);
            vals[i] = avg;
            vals[j] = avg;
        }
        let raw = raw.with_values(vals)?;
        let mass = raw.trapezoid();
        let pdf = raw.with_values(raw.values().iter().map(|v| v / mass).collect())?;
        Self::from_density(pdf)
    }

    /// Loads a two-column `abscissa,density` CSV on a uniform grid. A
    /// non-numeric first row is treated as a header.
    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut xs = Vec::new();
        let mut fs = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(QuantError::Format(format!("row {}: expected 2 columns", line + 1)));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(x), Ok(f)) => {
                    xs.push(x);
                    fs.push(f);
                }
                _ if line == 0 => continue,
                _ => return Err(QuantError::Format(format!("row {}: not numeric", line + 1))),
            }
        }
        if xs.len() < 3 {
            return Err(QuantError::Format("density needs at least 3 rows".into()));
        }
        let h = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        for (i, w) in xs.windows(2).enumerate() {
            if ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0) {
                return Err(QuantError::Format(format!("abscissae are not uniform at row {}", i + 2)));
            }
        }
        Self::from_density(ScalarGrid::new(xs[0], xs[xs.len() - 1], fs)?)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn pdf(&self) -> &ScalarGrid {
        &self.pdf
    }

    pub fn cdf_grid(&self) -> &ScalarGrid {
        &self.cdf
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `E[X^2]`.
    pub fn second_moment(&self) -> f64 {
        self.second[self.second.len() - 1]
    }

    pub fn x_min(&self) -> f64 {
        self.pdf.x_min()
    }

    pub fn x_max(&self) -> f64 {
        self.pdf.x_max()
    }

    pub fn density(&self, x: f64) -> f64 {
        self.pdf.eval_or_zero(x)
    }

    /// `(P(X <= x), E[X; X <= x], E[X^2; X <= x])`, exact for the interpolant.
    pub fn partial_moments(&self, x: f64) -> (f64, f64, f64) {
        let n = self.pdf.len();
        if x <= self.pdf.x_min() {
            return (0.0, 0.0, 0.0);
        }
        if x >= self.pdf.x_max() {
            return (self.cdf.values()[n - 1], self.first[n - 1], self.second[n - 1]);
        }
        let (k, u) = self.pdf.locate(x);
        let f = self.pdf.values();
        let (m0, m1, m2) = segment_moments(self.pdf.abscissa(k), f[k], f[k + 1], self.pdf.spacing(), u);
        (self.cdf.values()[k] + m0, self.first[k] + m1, self.second[k] + m2)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.partial_moments(x).0
    }

    /// `E[X; X <= x]`.
    pub fn partial_first(&self, x: f64) -> f64 {
        self.partial_moments(x).1
    }

    /// Probability and first moment of `(a, b]`.
    pub fn interval(&self, a: f64, b: f64) -> (f64, f64) {
        let (p0, m0, _) = self.partial_moments(a);
        let (p1, m1, _) = self.partial_moments(b);
        (p1 - p0, m1 - m0)
    }

    /// Probability, first and second moment of `(a, b]`.
    pub fn interval_moments(&self, a: f64, b: f64) -> (f64, f64, f64) {
        let (p0, m0, s0) = self.partial_moments(a);
        let (p1, m1, s1) = self.partial_moments(b);
        (p1 - p0, m1 - m0, s1 - s0)
    }

    /// Inverse of the piecewise-quadratic CDF.
    pub fn inverse_cdf(&self, p: f64) -> f64 {
        let c = self.cdf.values();
        let n = c.len();
        if p <= 0.0 {
            return self.pdf.x_min();
        }
        if p >= c[n - 1] {
            return self.pdf.x_max();
        }
        // first node with cdf > p
        let idx = c.partition_point(|&v| v <= p).clamp(1, n - 1);
        let k = idx - 1;
        let h = self.pdf.spacing();
        let f0 = self.pdf.values()[k];
        let f1 = self.pdf.values()[k + 1];
        let r = p - c[k];
        let a = 0.5 * (f1 - f0) / h;
        let disc = (f0 * f0 + 4.0 * a * r).max(0.0);
        let denom = f0 + disc.sqrt();
        let s = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        (self.pdf.abscissa(k) + s.clamp(0.0, h)).min(self.pdf.x_max())
    }

    /// I.i.d. draws by inverse-CDF transform of a seeded uniform stream.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(invalid("sample count must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(self.sample_with(&mut rng, n))
    }

    pub fn sample_with(&self, rng: &mut impl Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.inverse_cdf(rng.random::<f64>())).collect()
    }
}

/// Integrals of `f`, `x f` and `x^2 f` from `a` to `a + s` for the linear
/// piece through `(a, f0)` and `(a + h, f1)`.
fn segment_moments(a: f64, f0: f64, f1: f64, h: f64, s: f64) -> (f64, f64, f64) {
    let d = (f1 - f0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let u0 = f0 * s + 0.5 * d * s2;
    let u1 = 0.5 * f0 * s2 + d * s3 / 3.0;
    let u2 = f0 * s3 / 3.0 + 0.25 * d * s3 * s;
    (u0, a * u0 + u1, a * a * u0 + 2.0 * a * u1 + u2)
}

/// Differential entropy `-∫ f log2 f` in bits by trapezoidal quadrature.
pub fn differential_entropy(pdf: &ScalarGrid) -> Result<f64> {
    if let Some(v) = pdf.values().iter().find(|&&v| v < 0.0) {
        return Err(invalid(format!("density has a negative value {v}")));
    }
    Ok(-pdf.trapezoid_of(|_, f| plogp(f)))
}

/// `f log2 f`, zero at `f = 0`.
pub(crate) fn plogp(f: f64) -> f64 {
    if f > 0.0 {
        f * f.log2()
    } else {
        0.0
    }
}

/// Jointly Gaussian pair truncated to a square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivariateGaussianSpec {
    pub rho: f64,
    pub variance: f64,
    pub truncation: f64,
}

impl BivariateGaussianSpec {
    pub fn new(rho: f64, variance: f64, truncation: f64) -> Result<Self> {
        if !(rho.abs() <= 1.0) {
            return Err(invalid(format!("correlation must lie in [-1, 1], got {rho}")));
        }
        if !(variance > 0.0) || !(truncation > 0.0) {
            return Err(invalid("variance and truncation must be positive"));
        }
        Ok(Self { rho, variance, truncation })
    }
}

/// Correlated Gaussian pairs, rejected outside `[-t, t]^2`.
pub fn sample_bivariate(spec: &BivariateGaussianSpec, n: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let spec = BivariateGaussianSpec::new(spec.rho, spec.variance, spec.truncation)?;
    if n == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    let sd = spec.variance.sqrt();
    let cross = (1.0 - spec.rho * spec.rho).max(0.0).sqrt();
    let t = spec.truncation;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let u: f64 = rng.sample(StandardNormal);
        let v: f64 = rng.sample(StandardNormal);
        let a = sd * u;
        let b = sd * (spec.rho * u + cross * v);
        if a.abs() <= t && b.abs() <= t {
            out.push((a, b));
        }
    }
    Ok(out)
}
