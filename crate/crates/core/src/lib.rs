//! Design, constraint and benchmarking of scalar quantizers: uniform
//! subtractive-dither quantizers, companded (nonuniform) dithered quantizers,
//! Lloyd-Max and entropy-constrained deterministic quantizers, and variants
//! whose reconstruction error is uncorrelated with the source.

pub mod compander;
pub mod dither;
pub mod error;
pub mod grid;
pub mod harness;
pub mod lloyd;
pub mod search;
pub mod source;

pub use error::{QuantError, Result};
