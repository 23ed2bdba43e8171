//! Joint training of one-versus-rest linear text classifiers across two
//! class taxonomies.
//!
//! Documents from two corpora are classified within their own taxonomy, but
//! the per-class models are trained together: class centroids are compared
//! across the corpora with Tanimoto similarity, each task is coupled to its
//! nearest classes on the other side, and the coupled objectives are
//! minimized by full-batch gradient descent. Six regimes are provided —
//! independent training (STL), positive-pooling augmentation (SSL), transfer
//! from frozen neighbor models (TL-NPA / TL-INA) and fully joint multi-task
//! training (MTL-NPA / MTL-INA) — plus an experiment harness that drives the
//! split/sample/relate/tune/train/evaluate protocol end to end.

pub mod corpus;
pub mod error;
pub mod harness;
pub mod learners;
pub mod metrics;
pub mod optim;
pub mod persist;
pub mod relatedness;
mod seeding;
pub mod sparse;

pub use error::{Error, Result};
