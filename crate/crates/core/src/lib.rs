//! Perceived confidence scoring for black-box LLM text classifiers.
//!
//! Each input is rewritten under a set of meaning-preserving metamorphic
//! relations, every variant is labeled by one or more LLM backends, and the
//! labels are aggregated into per-label confidence scores with MR and backend
//! weights learned on a labeled calibration set.

pub mod backends;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod mrengine;
pub mod optimize;
pub mod pcs;
pub mod util;

pub use error::{Error, Result};
