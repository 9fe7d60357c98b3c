use crate::error::{QuantError, Result};
use crate::search::match_decreasing;
use crate::source::SourceModel;

use super::cost::RateMode;
use super::design::{design_from, design_with_observer, DesignConfig, RandomizedDesign};
use super::map::MonotoneMap;

/// How the expander was rescaled to make the error orthogonal to the source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomizedConstraintReport {
    /// Factor `s` applied to the expander.
    pub scale: f64,
    /// Multiplier of the `w_c = (1 - λ_c) w` form implied by `s`; its sign
    /// is reported, not asserted.
    pub implied_lambda_c: f64,
    /// `|E[X X̂] - σ²|` after rescaling.
    pub residual: f64,
    pub distortion_unconstrained: f64,
    pub distortion_constrained: f64,
}

/// Keeps the compressor and rescales the expander so that
/// `s E[X w(g(X)+N)] = E[X²]`.
pub fn constrain_randomized(
    design: &RandomizedDesign,
    source: &SourceModel,
) -> Result<(RandomizedDesign, RandomizedConstraintReport)> {
    let eval = design.evaluate(source)?;
    let power = source.second_moment();
    if eval.cross.abs() <= 1e-12 * power {
        return Err(QuantError::ConstraintInfeasible(
            "reconstruction is uncorrelated with the source (zero-rate design)".into(),
        ));
    }
    let scale = power / eval.cross;
    let expander = design.expander.scaled(scale);
    let mut out = RandomizedDesign::from_maps(source, design.compressor.clone(), expander, design.delta, design.mode)?;
    out.converged = design.converged;
    out.iterations = design.iterations;
    out.seed = design.seed;
    let after = out.evaluate(source)?;
    let report = RandomizedConstraintReport {
        scale,
        implied_lambda_c: 1.0 - 1.0 / scale,
        residual: (after.cross - power).abs(),
        distortion_unconstrained: eval.distortion,
        distortion_constrained: after.distortion,
    };
    Ok((out, report))
}

/// A design found by optimizing `D + λR + λ_c (σ² - E[X X̂])` directly, with
/// `λ_c` tuned until the error is orthogonal to the source and `λ` until
/// the rate hits a target.
#[derive(Debug, Clone)]
pub struct PenalizedDesign {
    pub design: RandomizedDesign,
    pub lambda: f64,
    pub lambda_c: f64,
    /// `|E[X X̂] - σ²|`.
    pub residual: f64,
    /// `|R - target|` in bits.
    pub rate_error: f64,
    /// Designs run during the search.
    pub evaluations: usize,
}

/// Tolerances and starting points for [`design_penalized`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenalizedSearch {
    pub rate_tol: f64,
    /// Relative to `σ²`.
    pub residual_tol: f64,
    pub lambda_guess: f64,
    pub lambda_c_guess: f64,
    pub max_evals: usize,
}

/// Where each penalized run starts.
#[derive(Debug, Clone, Copy)]
pub enum PenalizedStart<'m> {
    /// Seeded start walked down the relaxation schedule.
    Relaxation,
    /// Descent from the given compressor, without relaxation.
    From(&'m MonotoneMap),
}

impl Default for PenalizedSearch {
    fn default() -> Self {
        Self { rate_tol: 1e-5, residual_tol: 1e-6, lambda_guess: 0.1, lambda_c_guess: 0.5, max_evals: 30 }
    }
}

/// Direct penalized variable-rate design at `target_rate`.
pub fn design_penalized(
    source: &SourceModel,
    target_rate: f64,
    config: &DesignConfig,
    search: PenalizedSearch,
    start: PenalizedStart<'_>,
) -> Result<PenalizedDesign> {
    let power = source.second_moment();
    let mut evaluations = 0;
    // λ / gain² of the last inner solution seeds the next inner search
    let mut reduced = search.lambda_guess;
    let outer = match_decreasing(0.0, search.residual_tol * power, search.lambda_c_guess, 0.25, search.max_evals, |lc| {
        let gain2 = (1.0 + 0.5 * lc).powi(2);
        let inner = match_decreasing(target_rate, search.rate_tol, (reduced * gain2).ln(), 0.05, search.max_evals, |u| {
            let mode = RateMode::Variable { lambda: u.exp() };
            let d = match start {
                PenalizedStart::Relaxation => design_with_observer(source, mode, config, lc, &mut |_, _, _| {})?,
                PenalizedStart::From(g) => design_from(source, g.clone(), mode, config, lc)?,
            };
            Ok((d.rate, d))
        })?;
        evaluations += inner.evaluations;
        let lambda = inner.arg.exp();
        reduced = lambda / gain2;
        let cross = inner.item.evaluate(source)?.cross;
        Ok((power - cross, (inner.item, lambda, (inner.value - target_rate).abs())))
    })?;
    let (design, lambda, rate_error) = outer.item;
    Ok(PenalizedDesign {
        design,
        lambda,
        lambda_c: outer.arg,
        residual: outer.value.abs(),
        rate_error,
        evaluations,
    })
}
