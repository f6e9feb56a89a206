//! Design and verification toolkit for transformer-feedback current-reuse
//! quadrature VCOs built on through-silicon-via (TSV) transformers.
//!
//! The crate is split along the design flow:
//!
//! - [`em_extract`] turns TSV transformer geometries into lumped models.
//! - [`circuit_analysis`] evaluates the small-signal design equations.
//! - [`device_models`] holds the behavioral element models.
//! - [`transient_sim`] is a modified-nodal-analysis transient simulator with
//!   netlist generators for the oscillator topologies and waveform metrology.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod circuit_analysis;
pub mod constants;
pub mod device_models;
pub mod em_extract;
mod error;
pub mod transient_sim;

pub use error::{Error, Result};
