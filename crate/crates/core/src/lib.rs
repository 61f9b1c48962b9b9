//! Geometric and baseline markers for frozen neural-network features.
//!
//! The crate computes manifold-capacity geometry (effective dimension, radius
//! and utility of class manifolds) together with conventional statistical,
//! spectral and logit-based markers, checks the capacity estimate against a
//! random-projection separability oracle, trains linear probes, and turns
//! in-distribution markers into out-of-distribution predictions.

pub mod error;
pub mod featureio;
pub mod gluecap;
pub mod markers;
pub mod preprocess;
pub mod probe;
pub mod prognostics;
pub mod projoracle;
pub mod rng;

pub use error::{Error, Result};
