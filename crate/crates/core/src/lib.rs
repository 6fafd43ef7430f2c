//! Action recognition and content-based video retrieval over velocity
//! templates, covariance eigenspaces, and trajectory point clouds.

pub mod classifier;
pub mod error;
pub mod eigenspace;
pub mod geometry;
pub mod indexer;
pub mod pipeline;
pub mod synth_eval;
pub mod templates;

pub use error::{Error, Result};
