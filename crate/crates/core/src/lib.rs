//! Spatiotemporal periodic interest modeling for long user-behavior sequences.
//!
//! The pipeline compresses a user's history with a target-conditioned hard
//! search ([`gsu`]), builds forgetting-curve masks whose review points are the
//! historical behaviors sharing the request's hour, week or geohash group
//! ([`forgetting`]), derives five weighted queries from the request context
//! with a gated mixture of experts ([`moe`]), and pools the sequence under
//! every (query, mask) pair with a two-stage attention unit ([`hmin`]).
//! [`model`] wires these into a trainable ranker; [`data`] and [`eval`] supply
//! ingestion, synthetic data, metrics and the ablation harness.

pub mod cli;
pub mod context;
pub mod data;
pub mod error;
pub mod eval;
pub mod forgetting;
pub mod gsu;
pub mod hmin;
pub mod model;
pub mod moe;
pub mod numeric;

pub use error::{Error, Result};
