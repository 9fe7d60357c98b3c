//! Nonuniform randomized quantization: uniform subtractive dithering applied
//! between a monotone compressor `g` and an expander `w`.
//!
//! The free functions below are thin entry points over [`CostModel`], which
//! holds the quadrature.

mod bundle;
mod constrained;
mod cost;
mod design;
mod map;

pub use bundle::{read_design, write_design};
pub use constrained::{constrain_randomized, design_penalized, PenalizedDesign, PenalizedSearch,
    PenalizedStart, RandomizedConstraintReport};
pub use cost::{CostModel, Evaluation, RateMode};
pub use design::{
    descend, design_from, design_unconstrained, design_with_observer, initial_compressor, initial_slope, optimize_stage,
    relaxation_stages, DescentStep, DesignConfig, Observer, RandomizedDesign, StageOutcome, DESIGN_DELTA,
    MAX_HALVINGS, PATIENCE,
};
pub use map::{Expander, MonotoneMap};

use crate::error::Result;
use crate::grid::ScalarGrid;
use crate::source::SourceModel;

/// Conditional-mean expander `w(y) = E[X | Y = y]` for compressor `g`.
pub fn optimal_expander(g: &MonotoneMap, source: &SourceModel, delta: f64, mode: RateMode) -> Result<Expander> {
    CostModel::new(source, delta, mode)?.expander(g)
}

fn mode_for(levels: Option<u32>) -> RateMode {
    match levels {
        Some(levels) => RateMode::Fixed { levels },
        None => RateMode::Variable { lambda: 0.0 },
    }
}

/// Distortion over `g⁻¹([-TΔ, TΔ])`; everything when `levels` is `None`.
pub fn granular_distortion(
    g: &MonotoneMap,
    w: &Expander,
    source: &SourceModel,
    delta: f64,
    levels: Option<u32>,
) -> Result<f64> {
    Ok(CostModel::new(source, delta, mode_for(levels))?.distortion_split(g, w)?.0)
}

/// Distortion of the saturated tails, reconstructed at `w(±TΔ + n)`.
pub fn overload_distortion(g: &MonotoneMap, w: &Expander, source: &SourceModel, delta: f64, levels: u32) -> Result<f64> {
    Ok(CostModel::new(source, delta, RateMode::Fixed { levels })?.distortion_split(g, w)?.1)
}

/// Total distortion by `nodes`-point Gauss-Legendre tensor-product quadrature
/// over the dither, independent of the closed-form window integrals.
pub fn tensor_product_distortion(design: &RandomizedDesign, source: &SourceModel, nodes: usize) -> Result<f64> {
    design.model(source)?.tensor_distortion(&design.compressor, &design.expander, nodes)
}

/// Density of `Y = g(X) + N`.
pub fn output_density(g: &MonotoneMap, source: &SourceModel, delta: f64) -> Result<ScalarGrid> {
    CostModel::new(source, delta, mode_for(None))?.output_density(g)
}

/// `h(Y) - log2 Δ` in bits.
pub fn variable_rate(g: &MonotoneMap, source: &SourceModel, delta: f64) -> Result<f64> {
    CostModel::new(source, delta, mode_for(None))?.rate(g)
}

/// `D_g + D_ol` at fixed rate, `D + λR` at variable rate.
pub fn total_cost(design: &RandomizedDesign, source: &SourceModel) -> Result<f64> {
    Ok(design.evaluate(source)?.cost)
}

/// Per-node derivative of the total cost along a unit hat bump.
pub fn compressor_gradient(
    g: &MonotoneMap,
    w: &Expander,
    source: &SourceModel,
    delta: f64,
    mode: RateMode,
) -> Result<Vec<f64>> {
    CostModel::new(source, delta, mode)?.gradient(g, w)
}
