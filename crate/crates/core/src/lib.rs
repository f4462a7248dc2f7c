//! Meta-learning engine for time-constrained pipeline selection.
//!
//! Offline, a partially observed error tensor (datasets x pipeline components)
//! is completed and factorized into dataset and pipeline embeddings. Online, a
//! small set of informative pipelines is chosen by greedy D-optimal design under
//! a runtime budget, their errors are observed on the new dataset, and the
//! errors of every other pipeline are predicted from the fitted embedding.

pub mod completion;
pub mod design;
pub mod error;
pub mod factorization;
pub mod harness;
pub mod io;
mod linalg;
pub mod runtime;
pub mod selection;
pub mod tensor;

pub use error::{Error, Result};
