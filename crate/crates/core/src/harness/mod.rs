//! SNR sweeps, error-correlation experiments and whiteness diagnostics over
//! the quantizer families, plus the command-line front end.

mod cli;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compander::{
    constrain_randomized, design_from, design_penalized, design_unconstrained, initial_compressor, initial_slope,
    relaxation_stages, DesignConfig, PenalizedDesign, PenalizedSearch, PenalizedStart, RandomizedDesign, RateMode,
};
use crate::dither::{
    conventional_cross_moment, conventional_distortion, conventional_variable_rate, fixed_rate_of,
    dithered_reconstruct, DitherRealization, UniformQuantizerSpec,
};
use crate::error::{invalid, Result};
use crate::lloyd::{constrain_deterministic, ecsq, lloyd_max, orthogonality_residual, CellQuantizer};
use crate::search::{bisect_decreasing, golden_min, match_decreasing};
use crate::source::{sample_bivariate, BivariateGaussianSpec, SourceModel};

pub use cli::{run_cli, EXIT_CONFIG, EXIT_OK, EXIT_UNCONVERGED};

/// Tolerance in bits for placing variable-rate operating points.
pub const RATE_TOL: f64 = 0.01;

/// Evaluation budget of each rate search.
const RATE_SEARCH_EVALS: usize = 40;

/// Bins of the error histogram.
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ConventionalDither,
    /// Unconstrained nonuniform randomized quantizer (Quantizer 1).
    Randomized,
    /// Randomized quantizer with orthogonal error (Quantizer 2).
    ConstrainedRandomized,
    /// Deterministic quantizer with orthogonal error (Quantizer 3).
    ConstrainedDeterministic,
    OptimalDeterministic,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::ConventionalDither,
        Family::Randomized,
        Family::ConstrainedRandomized,
        Family::ConstrainedDeterministic,
        Family::OptimalDeterministic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::ConventionalDither => "conventional_dither",
            Family::Randomized => "randomized",
            Family::ConstrainedRandomized => "constrained_randomized",
            Family::ConstrainedDeterministic => "constrained_deterministic",
            Family::OptimalDeterministic => "optimal_deterministic",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = crate::error::QuantError;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| invalid(format!("unknown family {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    Fixed,
    Variable,
}

impl FromStr for SweepMode {
    type Err = crate::error::QuantError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(SweepMode::Fixed),
            "variable" => Ok(SweepMode::Variable),
            other => Err(invalid(format!("unknown mode {other:?} (expected fixed or variable)"))),
        }
    }
}

impl SweepMode {
    /// Rate points used when none are given.
    pub fn default_rates(self) -> Vec<f64> {
        match self {
            SweepMode::Fixed => [3.0f64, 5.0, 7.0].iter().map(|m| m.log2()).collect(),
            SweepMode::Variable => vec![0.5, 1.0, 1.4, 2.0, 3.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub mode: SweepMode,
    pub rates: Vec<f64>,
    pub families: Vec<Family>,
    pub config: DesignConfig,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() {
            return Err(invalid("rate list is empty"));
        }
        if self.families.is_empty() {
            return Err(invalid("family list is empty"));
        }
        if let Some(r) = self.rates.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(invalid(format!("rates must be positive, got {r}")));
        }
        self.config.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub family: Family,
    pub rate_bits: f64,
    pub distortion: f64,
    pub snr_db: f64,
    /// `E[X(X - X̂)]`.
    pub ortho_residual: f64,
    /// Correlation between the source and the reconstruction error.
    pub err_src_corr: f64,
    pub converged: bool,
}

pub const SWEEP_HEADER: &str = "family,rate_bits,distortion,snr_db,ortho_residual,err_src_corr,converged";

/// Nine significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn snr_db(variance: f64, distortion: f64) -> f64 {
    10.0 * (variance / distortion).log10()
}

pub fn write_rows(rows: &[ResultRow], out: &mut impl Write) -> Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.family,
            fmt_real(r.rate_bits),
            fmt_real(r.distortion),
            fmt_real(r.snr_db),
            fmt_real(r.ortho_residual),
            fmt_real(r.err_src_corr),
            r.converged
        )?;
    }
    Ok(())
}

/// A designed quantizer of any family.
#[derive(Debug, Clone)]
pub enum Quantizer {
    Conventional(UniformQuantizerSpec),
    Randomized(Box<RandomizedDesign>),
    Deterministic(CellQuantizer),
}

/// Moments of a quantizer's output, by quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub distortion: f64,
    pub rate: f64,
    /// `E[X X̂]`.
    pub cross: f64,
    /// `E[X̂]`.
    pub recon_mean: f64,
}

impl Quantizer {
    pub fn is_dithered(&self) -> bool {
        !matches!(self, Quantizer::Deterministic(_))
    }

    /// Dither step, zero for deterministic quantizers.
    pub fn delta(&self) -> f64 {
        match self {
            Quantizer::Conventional(s) => s.delta,
            Quantizer::Randomized(d) => d.delta,
            Quantizer::Deterministic(_) => 0.0,
        }
    }

    /// Reconstruction of `x`, drawing a fresh dither from `rng` when the
    /// quantizer is randomized.
    pub fn reconstruct(&self, x: f64, rng: &mut impl Rng) -> f64 {
        match self {
            Quantizer::Conventional(s) => dithered_reconstruct(x, DitherRealization::draw(rng, s.delta), s),
            Quantizer::Randomized(d) => d.reconstruct(x, DitherRealization::draw(rng, d.delta).value()),
            Quantizer::Deterministic(q) => q.quantize(x),
        }
    }

    pub fn moments(&self, source: &SourceModel) -> Result<Moments> {
        Ok(match self {
            Quantizer::Conventional(s) => Moments {
                distortion: conventional_distortion(s, source),
                rate: match s.t_max {
                    Some(_) => fixed_rate_of(s)?,
                    None => conventional_variable_rate(source, s.delta)?,
                },
                cross: conventional_cross_moment(s, source),
                recon_mean: source.mean(),
            },
            Quantizer::Randomized(d) => {
                let e = d.evaluate(source)?;
                Moments { distortion: e.distortion, rate: e.rate, cross: e.cross, recon_mean: e.recon_mean }
            }
            Quantizer::Deterministic(q) => Moments {
                distortion: q.distortion(),
                rate: q.rate(),
                cross: source.second_moment() - orthogonality_residual(q, source),
                recon_mean: q.reconstructions().iter().zip(q.probs()).map(|(r, p)| r * p).sum(),
            },
        })
    }
}

/// A family designed at one rate point.
#[derive(Debug, Clone)]
pub struct OperatingPoint {
    pub family: Family,
    pub quantizer: Quantizer,
    pub converged: bool,
}

impl OperatingPoint {
    pub fn row(&self, source: &SourceModel) -> Result<ResultRow> {
        let m = self.quantizer.moments(source)?;
        let power = source.second_moment();
        let variance = source.variance();
        let ortho = power - m.cross;
        let err_mean = source.mean() - m.recon_mean;
        let err_var = (m.distortion - err_mean * err_mean).max(0.0);
        // Cov(X, E) with E = X - X̂
        let cov = ortho - source.mean() * err_mean;
        let corr = if err_var > 0.0 { cov / (variance.sqrt() * err_var.sqrt()) } else { 0.0 };
        Ok(ResultRow {
            family: self.family,
            rate_bits: m.rate,
            distortion: m.distortion,
            snr_db: snr_db(variance, m.distortion),
            ortho_residual: ortho,
            err_src_corr: corr,
            converged: self.converged,
        })
    }
}

/// Range parameter `T` whose fixed rate `log2(2T+1)` is nearest to `rate`.
pub fn levels_for_rate(rate: f64) -> u32 {
    let t_real = (2f64.powf(rate) - 1.0) / 2.0;
    let lo = t_real.floor().max(1.0) as u32;
    let hi = lo + 1;
    let err = |t: u32| (((2 * t + 1) as f64).log2() - rate).abs();
    if err(hi) < err(lo) {
        hi
    } else {
        lo
    }
}

/// Cell count for deterministic fixed-rate designs: `2^R` rounded.
pub fn cells_for_rate(rate: f64) -> usize {
    (2f64.powf(rate).round() as usize).max(1)
}

/// Conventional dithered quantizer with `T` levels per side and the step
/// minimizing granular plus overload distortion.
pub fn conventional_fixed(source: &SourceModel, levels: u32) -> Result<UniformQuantizerSpec> {
    let span = source.x_max().abs().max(source.x_min().abs());
    let d = |delta: f64| match UniformQuantizerSpec::new(delta, Some(levels)) {
        Ok(s) => conventional_distortion(&s, source),
        Err(_) => f64::INFINITY,
    };
    let (delta, _) = golden_min(d, 1e-6 * span, 2.0 * span, 1e-10 * span);
    UniformQuantizerSpec::new(delta, Some(levels))
}

/// Conventional dithered quantizer whose entropy-coded rate equals `rate`.
pub fn conventional_variable(source: &SourceModel, rate: f64) -> Result<UniformQuantizerSpec> {
    let span = source.x_max() - source.x_min();
    let ln = |v: f64| v.ln();
    let u = bisect_decreasing(
        |u| Ok(conventional_variable_rate(source, u.exp())? - rate),
        ln(1e-4 * span),
        ln(20.0 * span),
        1e-12,
    )?;
    UniformQuantizerSpec::unbounded(u.exp())
}

/// Rough `λ` for a rate, from the high-resolution slope `dD/dR = -2 ln2 D`.
fn lambda_guess(source: &SourceModel, rate: f64) -> f64 {
    let d = source.variance() * std::f64::consts::PI * std::f64::consts::E / 6.0 * 2f64.powf(-2.0 * rate);
    2.0 * std::f64::consts::LN_2 * d.min(source.variance())
}

/// Unconstrained randomized design at the `λ` that hits `rate`.
pub fn randomized_at_rate(
    source: &SourceModel,
    rate: f64,
    config: &DesignConfig,
) -> Result<(RandomizedDesign, bool)> {
    let m = match_decreasing(rate, RATE_TOL, lambda_guess(source, rate).ln(), 1.0, RATE_SEARCH_EVALS, |u| {
        let d = design_unconstrained(source, RateMode::Variable { lambda: u.exp() }, config)?;
        Ok((d.rate, d))
    })?;
    Ok((m.item, m.hit))
}

/// Direct penalized design checked against the rescaled unconstrained one.
#[derive(Debug, Clone)]
pub struct PenaltyConsistency {
    pub unconstrained: RandomizedDesign,
    /// Unconstrained design with its expander rescaled.
    pub scaled: RandomizedDesign,
    pub scale: f64,
    pub direct: PenalizedDesign,
    /// `sup |g_direct - g|` on the source grid.
    pub compressor_gap: f64,
    /// `sup |w_direct - s w|` over the lattice nodes both expanders cover.
    pub expander_gap: f64,
}

/// Designs the unconstrained quantizer at `rate`, then reruns its final
/// relaxation stage on the penalized cost with `λ_c` and `λ` found by root
/// finding (orthogonality and equal rate) and compares the two pairs.
pub fn penalty_consistency(source: &SourceModel, rate: f64, config: &DesignConfig) -> Result<PenaltyConsistency> {
    let (found, _) = randomized_at_rate(source, rate, config)?;
    let lambda = found.mode.lambda();
    let stages = relaxation_stages(found.mode, &config.relaxation_schedule);
    let start = match stages.len() {
        1 => initial_compressor(source.pdf(), initial_slope(source, found.mode)?, config.seed)?,
        n => design_unconstrained(source, stages[n - 2], config)?.compressor,
    };
    let unconstrained = design_from(source, start.clone(), found.mode, config, 0.0)?;
    let (scaled, report) = constrain_randomized(&unconstrained, source)?;
    let search = PenalizedSearch { lambda_guess: lambda, ..PenalizedSearch::default() };
    let direct = design_penalized(source, unconstrained.rate, config, search, PenalizedStart::From(&start))?;
    let compressor_gap = direct
        .design
        .compressor
        .values()
        .iter()
        .zip(scaled.compressor.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let (wd, ws) = (&direct.design.expander, &scaled.expander);
    let lo = wd.first_index().max(ws.first_index());
    let hi = (wd.first_index() + wd.values().len() as i64).min(ws.first_index() + ws.values().len() as i64);
    let lat = wd.lattice();
    let expander_gap = (lo..hi)
        .map(|i| {
            let y = lat.node(i);
            (wd.eval(y) - ws.eval(y)).abs()
        })
        .fold(0.0, f64::max);
    Ok(PenaltyConsistency { unconstrained, scaled, scale: report.scale, direct, compressor_gap, expander_gap })
}

/// Cells to start an entropy-constrained design from.
fn ecsq_cells(rate: f64) -> usize {
    (2f64.powf(rate + 2.0).ceil() as usize).max(8)
}

/// Entropy-constrained deterministic quantizer at the `λ` that hits `rate`.
pub fn ecsq_at_rate(source: &SourceModel, rate: f64, seed: u64) -> Result<(CellQuantizer, bool)> {
    let cells = ecsq_cells(rate);
    let m = match_decreasing(rate, RATE_TOL, lambda_guess(source, rate).ln(), 0.5, RATE_SEARCH_EVALS, |u| {
        let q = ecsq(source, u.exp(), cells, seed)?;
        Ok((q.entropy(), q))
    })?;
    Ok((m.item, m.hit))
}

/// Designs every requested family at one rate point.
pub fn design_point(
    source: &SourceModel,
    mode: SweepMode,
    rate: f64,
    families: &[Family],
    config: &DesignConfig,
    seed: u64,
) -> Result<Vec<OperatingPoint>> {
    let wants = |f: Family| families.contains(&f);
    let mut config = config.clone();
    config.seed = seed;
    let mut out = Vec::new();
    let randomized_needed = wants(Family::Randomized) || wants(Family::ConstrainedRandomized);
    let deterministic_needed = wants(Family::OptimalDeterministic) || wants(Family::ConstrainedDeterministic);
    match mode {
        SweepMode::Fixed => {
            let levels = levels_for_rate(rate);
            if wants(Family::ConventionalDither) {
                out.push(OperatingPoint {
                    family: Family::ConventionalDither,
                    quantizer: Quantizer::Conventional(conventional_fixed(source, levels)?),
                    converged: true,
                });
            }
            if randomized_needed {
                let d = design_unconstrained(source, RateMode::Fixed { levels }, &config)?;
                push_randomized(source, d, true, families, &mut out)?;
            }
            if deterministic_needed {
                let q = lloyd_max(source, cells_for_rate(rate), seed)?;
                push_deterministic(source, q, true, families, &mut out)?;
            }
        }
        SweepMode::Variable => {
            if wants(Family::ConventionalDither) {
                out.push(OperatingPoint {
                    family: Family::ConventionalDither,
                    quantizer: Quantizer::Conventional(conventional_variable(source, rate)?),
                    converged: true,
                });
            }
            if randomized_needed {
                let (d, hit) = randomized_at_rate(source, rate, &config)?;
                push_randomized(source, d, hit, families, &mut out)?;
            }
            if deterministic_needed {
                let (q, hit) = ecsq_at_rate(source, rate, seed)?;
                push_deterministic(source, q, hit, families, &mut out)?;
            }
        }
    }
    Ok(out)
}

fn push_randomized(
    source: &SourceModel,
    d: RandomizedDesign,
    hit: bool,
    families: &[Family],
    out: &mut Vec<OperatingPoint>,
) -> Result<()> {
    let converged = d.converged && hit;
    if families.contains(&Family::ConstrainedRandomized) {
        let (c, _) = constrain_randomized(&d, source)?;
        out.push(OperatingPoint {
            family: Family::ConstrainedRandomized,
            quantizer: Quantizer::Randomized(Box::new(c)),
            converged,
        });
    }
    if families.contains(&Family::Randomized) {
        out.push(OperatingPoint { family: Family::Randomized, quantizer: Quantizer::Randomized(Box::new(d)), converged });
    }
    Ok(())
}

fn push_deterministic(
    source: &SourceModel,
    q: CellQuantizer,
    hit: bool,
    families: &[Family],
    out: &mut Vec<OperatingPoint>,
) -> Result<()> {
    if families.contains(&Family::ConstrainedDeterministic) {
        let (c, _) = constrain_deterministic(&q, source)?;
        out.push(OperatingPoint {
            family: Family::ConstrainedDeterministic,
            quantizer: Quantizer::Deterministic(c),
            converged: hit,
        });
    }
    if families.contains(&Family::OptimalDeterministic) {
        out.push(OperatingPoint { family: Family::OptimalDeterministic, quantizer: Quantizer::Deterministic(q), converged: hit });
    }
    Ok(())
}

/// SNR versus rate for every family, rows sorted by family then rate. A
/// failed design is reported as an unconverged row with zero SNR.
pub fn snr_sweep(source: &SourceModel, spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &rate in &spec.rates {
        match design_point(source, spec.mode, rate, &spec.families, &spec.config, spec.seed) {
            Ok(points) => {
                for p in points {
                    rows.push(p.row(source)?);
                }
            }
            Err(_) => {
                for &family in &spec.families {
                    rows.push(failed_row(source, family, rate));
                }
            }
        }
    }
    rows.sort_by(|a, b| a.family.cmp(&b.family).then(a.rate_bits.total_cmp(&b.rate_bits)));
    Ok(rows)
}

fn failed_row(source: &SourceModel, family: Family, rate: f64) -> ResultRow {
    let power = source.second_moment();
    ResultRow {
        family,
        rate_bits: rate,
        distortion: power,
        snr_db: snr_db(source.variance(), power),
        ortho_residual: power,
        err_src_corr: 1.0,
        converged: false,
    }
}

/// Mixes a user seed into an independent stream identifier.
fn stream_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Quantizes both components of correlated pairs with the same scalar
/// quantizer, independent dither per component, and returns the
/// correlation between the two error streams.
pub fn correlation_experiment(spec: &BivariateGaussianSpec, q: &Quantizer, n_samples: usize, seed: u64) -> Result<f64> {
    let pairs = sample_bivariate(spec, n_samples, seed)?;
    let mut rng1 = ChaCha8Rng::seed_from_u64(stream_seed(seed, 1));
    let mut rng2 = ChaCha8Rng::seed_from_u64(stream_seed(seed, 2));
    let mut e1 = Vec::with_capacity(n_samples);
    let mut e2 = Vec::with_capacity(n_samples);
    for (a, b) in pairs {
        e1.push(a - q.reconstruct(a, &mut rng1));
        e2.push(b - q.reconstruct(b, &mut rng2));
    }
    Ok(pearson(&e1, &e2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhitenessReport {
    pub err_src_corr: f64,
    pub err_mean: f64,
    pub err_var: f64,
    pub distortion: f64,
    pub hist_lo: f64,
    pub hist_hi: f64,
    /// Fraction of samples per bin.
    pub histogram: Vec<f64>,
}

impl WhitenessReport {
    /// Largest `|fraction - 1/bins|`.
    pub fn max_uniform_deviation(&self) -> f64 {
        let u = 1.0 / self.histogram.len() as f64;
        self.histogram.iter().map(|f| (f - u).abs()).fold(0.0, f64::max)
    }
}

/// Simulated error statistics. The histogram spans `(-Δ/2, Δ/2]` for the
/// conventional quantizer and the observed error range otherwise.
pub fn whiteness_report(q: &Quantizer, source: &SourceModel, n_samples: usize, seed: u64) -> Result<WhitenessReport> {
    let xs = source.sample(n_samples, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 3));
    let errs: Vec<f64> = xs.iter().map(|&x| x - q.reconstruct(x, &mut rng)).collect();
    let n = n_samples as f64;
    let err_mean = errs.iter().sum::<f64>() / n;
    let distortion = errs.iter().map(|e| e * e).sum::<f64>() / n;
    let err_var = errs.iter().map(|e| (e - err_mean).powi(2)).sum::<f64>() / n;
    let (lo, hi) = match q {
        Quantizer::Conventional(s) => (-0.5 * s.delta, 0.5 * s.delta),
        _ => {
            let lo = errs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = errs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, lo + 0.5)
            }
        }
    };
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    for &e in &errs {
        let b = (((e - lo) / width).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
        counts[b] += 1;
    }
    Ok(WhitenessReport {
        err_src_corr: pearson(&xs, &errs),
        err_mean,
        err_var,
        distortion,
        hist_lo: lo,
        hist_hi: hi,
        histogram: counts.into_iter().map(|c| c as f64 / n).collect(),
    })
}
