//! Deterministic scalar quantizers: Lloyd-Max, entropy-constrained (ECSQ),
//! and their orthogonality-constrained versions obtained by scaling the
//! reconstruction points.

use std::io::{BufRead, BufReader, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, QuantError, Result};
use crate::source::{SourceModel, DENSITY_TOL};

/// Number of starts tried by [`lloyd_max`] and [`ecsq`].
pub const MULTISTARTS: u64 = 16;

/// Stopping threshold on the change of the design cost between iterations.
pub const COST_CHANGE_TOL: f64 = 1e-10;

const MAX_ITERS: usize = 200_000;

/// Cells with less mass than this are dropped by [`ecsq`].
const EMPTY_CELL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellRate {
    /// Rate `log2 M`.
    Fixed,
    /// Rate is the output entropy; `lambda` is the multiplier the design used.
    Variable { lambda: f64 },
}

/// A partition of the source support into cells `(b_{i-1}, b_i]`, each with
/// one reconstruction point.
#[derive(Debug, Clone, PartialEq)]
pub struct CellQuantizer {
    boundaries: Vec<f64>,
    reconstructions: Vec<f64>,
    probs: Vec<f64>,
    moments: Vec<f64>,
    second: Vec<f64>,
    rate_mode: CellRate,
}

impl CellQuantizer {
    /// Builds a quantizer and computes cell statistics from `source`.
    /// The outer boundaries must be the support end points.
    pub fn new(
        source: &SourceModel,
        boundaries: Vec<f64>,
        reconstructions: Vec<f64>,
        rate_mode: CellRate,
    ) -> Result<Self> {
        let m = reconstructions.len();
        if m == 0 || boundaries.len() != m + 1 {
            return Err(invalid("need M >= 1 reconstructions and M + 1 boundaries"));
        }
        if boundaries.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("boundaries must be strictly increasing"));
        }
        let tol = 1e-12 * (source.x_max() - source.x_min());
        if (boundaries[0] - source.x_min()).abs() > tol || (boundaries[m] - source.x_max()).abs() > tol {
            return Err(invalid("outer boundaries must match the source support"));
        }
        if reconstructions.iter().any(|r| !r.is_finite()) {
            return Err(invalid("reconstructions must be finite"));
        }
        if let CellRate::Variable { lambda } = rate_mode {
            if !(lambda >= 0.0) {
                return Err(invalid("lambda must be non-negative"));
            }
        }
        let mut probs = Vec::with_capacity(m);
        let mut moments = Vec::with_capacity(m);
        let mut second = Vec::with_capacity(m);
        for w in boundaries.windows(2) {
            let (p, m1, m2) = source.interval_moments(w[0], w[1]);
            probs.push(p.max(0.0));
            moments.push(m1);
            second.push(m2.max(0.0));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > DENSITY_TOL {
            return Err(invalid(format!("cell probabilities sum to {total}")));
        }
        Ok(Self { boundaries, reconstructions, probs, moments, second, rate_mode })
    }

    /// Centroid reconstructions for the given boundaries; empty cells get
    /// their midpoint.
    pub fn with_centroids(source: &SourceModel, boundaries: Vec<f64>, rate_mode: CellRate) -> Result<Self> {
        let r = centroids(source, &boundaries);
        Self::new(source, boundaries, r, rate_mode)
    }

    pub fn levels(&self) -> usize {
        self.reconstructions.len()
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn reconstructions(&self) -> &[f64] {
        &self.reconstructions
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `l_i = ∫_{cell i} x f(x) dx`.
    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    pub fn rate_mode(&self) -> CellRate {
        self.rate_mode
    }

    /// Cell index of `x`; values outside the support go to the end cells.
    pub fn cell(&self, x: f64) -> usize {
        let inner = &self.boundaries[1..self.boundaries.len() - 1];
        inner.partition_point(|&b| b < x)
    }

    pub fn quantize(&self, x: f64) -> f64 {
        self.reconstructions[self.cell(x)]
    }

    /// Mean squared error.
    pub fn distortion(&self) -> f64 {
        (0..self.levels())
            .map(|i| {
                let r = self.reconstructions[i];
                self.second[i] - 2.0 * r * self.moments[i] + r * r * self.probs[i]
            })
            .sum::<f64>()
            .max(0.0)
    }

    /// Output entropy in bits.
    pub fn entropy(&self) -> f64 {
        self.probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
    }

    /// `log2 M` at fixed rate, the output entropy at variable rate.
    pub fn rate(&self) -> f64 {
        match self.rate_mode {
            CellRate::Fixed => (self.levels() as f64).log2(),
            CellRate::Variable { .. } => self.entropy(),
        }
    }

    /// `D + λH` at variable rate, `D` at fixed rate.
    pub fn lagrangian_cost(&self) -> f64 {
        match self.rate_mode {
            CellRate::Fixed => self.distortion(),
            CellRate::Variable { lambda } => self.distortion() + lambda * self.entropy(),
        }
    }

    /// `E[X X̂]`.
    pub fn cross_moment(&self) -> f64 {
        self.reconstructions.iter().zip(&self.moments).map(|(r, l)| r * l).sum()
    }

    /// Writes `lower,upper,reconstruction,probability` rows under a
    /// `# mode=...` comment line.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        match self.rate_mode {
            CellRate::Fixed => writeln!(out, "# mode=fixed")?,
            CellRate::Variable { lambda } => writeln!(out, "# mode=variable lambda={lambda}")?,
        }
        writeln!(out, "lower,upper,reconstruction,probability")?;
        for i in 0..self.levels() {
            writeln!(
                out,
                "{},{},{},{}",
                self.boundaries[i],
                self.boundaries[i + 1],
                self.reconstructions[i],
                self.probs[i]
            )?;
        }
        Ok(())
    }

    /// Reads the format of [`write_csv`](Self::write_csv). Cell statistics
    /// are recomputed from `source` and must match the stored probabilities.
    pub fn read_csv(input: impl Read, source: &SourceModel) -> Result<Self> {
        let bad = |m: String| QuantError::Format(m);
        let mut mode = None;
        let mut rows: Vec<[f64; 4]> = Vec::new();
        for (no, line) in BufReader::new(input).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            let lineno = no + 1;
            if line.is_empty() || line == "lower,upper,reconstruction,probability" {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if rest == "mode=fixed" {
                    mode = Some(CellRate::Fixed);
                } else if let Some(l) = rest.strip_prefix("mode=variable lambda=") {
                    let lambda = l.parse().map_err(|_| bad(format!("line {lineno}: bad lambda")))?;
                    mode = Some(CellRate::Variable { lambda });
                }
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(bad(format!("line {lineno}: expected 4 columns")));
            }
            let mut row = [0.0; 4];
            for (slot, c) in row.iter_mut().zip(&cols) {
                *slot = c.trim().parse().map_err(|_| bad(format!("line {lineno}: bad number {c:?}")))?;
            }
            rows.push(row);
        }
        let mode = mode.ok_or_else(|| bad("missing '# mode=' line".into()))?;
        if rows.is_empty() {
            return Err(bad("no cells".into()));
        }
        for (i, w) in rows.windows(2).enumerate() {
            if w[0][1] != w[1][0] {
                return Err(bad(format!("cell {} does not start where cell {i} ends", i + 1)));
            }
        }
        let mut boundaries: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        boundaries.push(rows[rows.len() - 1][1]);
        let recon = rows.iter().map(|r| r[2]).collect();
        let q = Self::new(source, boundaries, recon, mode)?;
        for (i, (row, p)) in rows.iter().zip(&q.probs).enumerate() {
            if (row[3] - p).abs() > DENSITY_TOL {
                return Err(bad(format!("cell {i}: stored probability {} disagrees with source ({p})", row[3])));
            }
        }
        Ok(q)
    }
}

/// Centroids of the cells given by `boundaries`.
fn centroids(source: &SourceModel, boundaries: &[f64]) -> Vec<f64> {
    boundaries
        .windows(2)
        .map(|w| {
            let (p, m1) = source.interval(w[0], w[1]);
            if p > 0.0 {
                (m1 / p).clamp(w[0], w[1])
            } else {
                0.5 * (w[0] + w[1])
            }
        })
        .collect()
}

fn quantile_start(source: &SourceModel, m: usize) -> Vec<f64> {
    let mut b: Vec<f64> = (0..=m).map(|i| source.inverse_cdf(i as f64 / m as f64)).collect();
    b[0] = source.x_min();
    b[m] = source.x_max();
    b
}

/// Start `s` of a multistart run: quantiles for `s = 0`, sorted random
/// quantile levels otherwise.
fn start_boundaries(source: &SourceModel, m: usize, seed: u64, s: u64) -> Vec<f64> {
    if s == 0 {
        return quantile_start(source, m);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(s));
    let mut u: Vec<f64> = (0..m - 1).map(|_| rng.random::<f64>()).collect();
    u.sort_by(f64::total_cmp);
    let mut b = Vec::with_capacity(m + 1);
    b.push(source.x_min());
    b.extend(u.iter().map(|&p| source.inverse_cdf(p)));
    b.push(source.x_max());
    b
}

/// Removes zero-width cells, keeping the outer end points.
fn strictly_increasing(b: Vec<f64>) -> Vec<f64> {
    let last = b[b.len() - 1];
    let mut out: Vec<f64> = Vec::with_capacity(b.len());
    for v in b {
        if out.last().is_none_or(|&p| v > p) && v < last {
            out.push(v);
        }
    }
    out.push(last);
    out
}

/// Fixed-rate Lloyd iteration with `m` cells from `b`.
fn lloyd_run(source: &SourceModel, mut b: Vec<f64>) -> Vec<f64> {
    let mut prev = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        let r = centroids(source, &b);
        for i in 1..b.len() - 1 {
            b[i] = 0.5 * (r[i - 1] + r[i]);
        }
        // Coincident centroids can only come from empty cells; nudge apart.
        for i in 1..b.len() - 1 {
            if !(b[i] > b[i - 1]) {
                b[i] = b[i - 1] + f64::EPSILON * b[i - 1].abs().max(1.0);
            }
        }
        let d = distortion_of(source, &b, &centroids(source, &b));
        if (prev - d).abs() < COST_CHANGE_TOL {
            break;
        }
        prev = d;
    }
    b
}

fn distortion_of(source: &SourceModel, b: &[f64], r: &[f64]) -> f64 {
    b.windows(2)
        .zip(r)
        .map(|(w, &r)| {
            let (p, m1, m2) = source.interval_moments(w[0], w[1]);
            m2 - 2.0 * r * m1 + r * r * p
        })
        .sum()
}

/// Lloyd-Max quantizer with `m` levels: alternates centroid and
/// nearest-neighbour conditions until the distortion changes by less than
/// [`COST_CHANGE_TOL`], keeping the best of [`MULTISTARTS`] starts.
pub fn lloyd_max(source: &SourceModel, m: usize, seed: u64) -> Result<CellQuantizer> {
    if m == 0 {
        return Err(invalid("M must be at least 1"));
    }
    if m == 1 {
        return CellQuantizer::with_centroids(source, vec![source.x_min(), source.x_max()], CellRate::Fixed);
    }
    let mut best: Option<CellQuantizer> = None;
    for s in 0..MULTISTARTS {
        let b = lloyd_run(source, start_boundaries(source, m, seed, s));
        let q = CellQuantizer::with_centroids(source, b, CellRate::Fixed)?;
        if best.as_ref().is_none_or(|bq| q.distortion() < bq.distortion()) {
            best = Some(q);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Lagrangian boundary between neighbouring cells with reconstructions
/// `r0 < r1` and masses `p0`, `p1`, for squared error scaled by `gain`
/// (`gain = 1` for the plain cost).
fn lagrangian_boundary(r0: f64, r1: f64, p0: f64, p1: f64, lambda: f64, gain: f64) -> f64 {
    let mid = 0.5 * (r0 + r1) / gain;
    if lambda == 0.0 {
        return mid;
    }
    mid + lambda * (p0 / p1).log2() / (2.0 * gain * (r1 - r0))
}

/// One entropy-constrained Lloyd run. Cells that empty out are pruned.
fn ecsq_run(source: &SourceModel, mut b: Vec<f64>, lambda: f64) -> Result<CellQuantizer> {
    let lo = source.x_min();
    let hi = source.x_max();
    let mut prev = f64::INFINITY;
    let mut q = CellQuantizer::with_centroids(source, b.clone(), CellRate::Variable { lambda })?;
    for _ in 0..MAX_ITERS {
        let r = q.reconstructions().to_vec();
        let p = q.probs().to_vec();
        let mut nb = vec![lo];
        for i in 1..r.len() {
            nb.push(lagrangian_boundary(r[i - 1], r[i], p[i - 1], p[i], lambda, 1.0).clamp(lo, hi));
        }
        nb.push(hi);
        // A boundary that overtakes its successor empties the cell between.
        for i in 1..nb.len() {
            nb[i] = nb[i].max(nb[i - 1]);
        }
        b = strictly_increasing(nb);
        let cand = CellQuantizer::with_centroids(source, b.clone(), CellRate::Variable { lambda })?;
        b = prune_empty(cand.boundaries(), cand.probs());
        q = if b.len() == cand.boundaries.len() {
            cand
        } else {
            CellQuantizer::with_centroids(source, b.clone(), CellRate::Variable { lambda })?
        };
        let j = q.lagrangian_cost();
        if (prev - j).abs() < COST_CHANGE_TOL {
            break;
        }
        prev = j;
    }
    Ok(q)
}

/// Drops cells with (numerically) zero mass by merging them into a
/// neighbour.
fn prune_empty(b: &[f64], p: &[f64]) -> Vec<f64> {
    let m = p.len();
    if m == 1 {
        return b.to_vec();
    }
    let mut keep = vec![true; m + 1];
    for (i, &pi) in p.iter().enumerate() {
        if pi <= EMPTY_CELL {
            // remove the boundary shared with the neighbour inside the support
            if i + 1 < m {
                keep[i + 1] = false;
            } else {
                keep[i] = false;
            }
        }
    }
    keep[0] = true;
    keep[m] = true;
    let out: Vec<f64> = b.iter().zip(&keep).filter(|(_, &k)| k).map(|(&v, _)| v).collect();
    out
}

/// Entropy-constrained scalar quantizer minimizing `D + λH` (bits), started
/// from `m_init` cells; the best of [`MULTISTARTS`] starts is returned.
pub fn ecsq(source: &SourceModel, lambda: f64, m_init: usize, seed: u64) -> Result<CellQuantizer> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid("lambda must be finite and non-negative"));
    }
    if m_init == 0 {
        return Err(invalid("M_init must be at least 1"));
    }
    let mut best: Option<CellQuantizer> = None;
    for s in 0..MULTISTARTS {
        let q = if m_init == 1 {
            CellQuantizer::with_centroids(source, vec![source.x_min(), source.x_max()], CellRate::Variable { lambda })?
        } else {
            ecsq_run(source, start_boundaries(source, m_init, seed, s), lambda)?
        };
        if best.as_ref().is_none_or(|bq| q.lagrangian_cost() < bq.lagrangian_cost()) {
            best = Some(q);
        }
        if m_init == 1 {
            break;
        }
    }
    Ok(best.expect("at least one start"))
}

/// Result of scaling a deterministic quantizer to satisfy `E[X(X - X̂)] = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintReport {
    pub scale_c: f64,
    pub orthogonality_residual: f64,
    /// `D*`.
    pub distortion_unconstrained: f64,
    /// `D`.
    pub distortion_constrained: f64,
}

/// Keeps the partition and sets `r_i ← c r̂_i` with `c = σ² / Σ p_i r̂_i²`.
pub fn constrain_deterministic(q: &CellQuantizer, source: &SourceModel) -> Result<(CellQuantizer, ConstraintReport)> {
    let power: f64 = q.probs.iter().zip(&q.reconstructions).map(|(p, r)| p * r * r).sum();
    let sigma2 = source.second_moment();
    if power <= 1e-15 * sigma2 {
        return Err(QuantError::ConstraintInfeasible("zero-rate quantizer has no power to scale".into()));
    }
    let c = sigma2 / power;
    let r = q.reconstructions.iter().map(|r| c * r).collect();
    let out = CellQuantizer::new(source, q.boundaries.clone(), r, q.rate_mode)?;
    let report = ConstraintReport {
        scale_c: c,
        orthogonality_residual: orthogonality_residual(&out, source),
        distortion_unconstrained: q.distortion(),
        distortion_constrained: out.distortion(),
    };
    Ok((out, report))
}

/// `|D - σ²D*/(σ² - D*)|`.
pub fn verify_distortion_identity(report: &ConstraintReport, sigma2: f64) -> Result<f64> {
    let d_star = report.distortion_unconstrained;
    if !(sigma2 > 0.0) || d_star >= sigma2 {
        return Err(invalid("identity needs 0 <= D* < sigma^2"));
    }
    Ok((report.distortion_constrained - sigma2 * d_star / (sigma2 - d_star)).abs())
}

/// `E[X(X - X̂)]`, cell by cell.
pub fn orthogonality_residual(q: &CellQuantizer, source: &SourceModel) -> f64 {
    q.boundaries
        .windows(2)
        .zip(&q.reconstructions)
        .map(|(w, r)| {
            let (_, m1, m2) = source.interval_moments(w[0], w[1]);
            m2 - r * m1
        })
        .sum()
}

/// Orthogonality-constrained design computed directly, without going
/// through an unconstrained design: coordinate descent on
/// `D + λH + γ(σ² - E[X X̂])`, where each sweep places boundaries for the
/// current `(r, γ)`, then sets `r_i = (1 + γ/2) l_i/p_i` with `γ` chosen so
/// the constraint holds exactly.
pub fn constrained_direct(source: &SourceModel, m: usize, rate_mode: CellRate, seed: u64) -> Result<CellQuantizer> {
    if m < 2 {
        return Err(invalid("M must be at least 2"));
    }
    let lambda = match rate_mode {
        CellRate::Fixed => 0.0,
        CellRate::Variable { lambda } => lambda,
    };
    let sigma2 = source.second_moment();
    let lo = source.x_min();
    let hi = source.x_max();
    let mut best: Option<CellQuantizer> = None;
    for s in 0..MULTISTARTS {
        let mut b = start_boundaries(source, m, seed, s);
        let mut prev = f64::INFINITY;
        let mut q = None;
        for _ in 0..MAX_ITERS {
            let cq = CellQuantizer::with_centroids(source, b.clone(), rate_mode)?;
            let b2 = prune_empty(cq.boundaries(), cq.probs());
            let cq = if b2.len() == b.len() { cq } else { CellQuantizer::with_centroids(source, b2, rate_mode)? };
            let power: f64 = cq.probs.iter().zip(&cq.reconstructions).map(|(p, r)| p * r * r).sum();
            if power <= 0.0 {
                break;
            }
            let gain = sigma2 / power;
            let r: Vec<f64> = cq.reconstructions.iter().map(|v| gain * v).collect();
            let cur = CellQuantizer::new(source, cq.boundaries.clone(), r.clone(), rate_mode)?;
            let j = cur.lagrangian_cost();
            let p = cur.probs().to_vec();
            let mut nb = vec![lo];
            for i in 1..r.len() {
                nb.push(lagrangian_boundary(r[i - 1], r[i], p[i - 1], p[i], lambda, gain).clamp(lo, hi));
            }
            nb.push(hi);
            for i in 1..nb.len() {
                nb[i] = nb[i].max(nb[i - 1]);
            }
            b = strictly_increasing(nb);
            q = Some(cur);
            if (prev - j).abs() < COST_CHANGE_TOL {
                break;
            }
            prev = j;
        }
        if let Some(q) = q {
            if best.as_ref().is_none_or(|bq| q.lagrangian_cost() < bq.lagrangian_cost()) {
                best = Some(q);
            }
        }
    }
    best.ok_or_else(|| QuantError::ConstraintInfeasible("every start collapsed to one cell".into()))
}
