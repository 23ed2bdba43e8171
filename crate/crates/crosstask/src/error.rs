//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong across the corpus, training and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid sparse vector: {0}")]
    InvalidVector(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("classes too small for a 3:1:1 split (need >= 5 examples): {0:?}")]
    SplitTooSmall(Vec<u32>),

    #[error("no class has {size} or more training examples")]
    EmptySample { size: usize },

    #[error("dataset has a single class; one-versus-rest needs at least two")]
    SingleClass,

    #[error("k={k} but only {available} classes are available in the other source")]
    BadK { k: usize, available: usize },

    #[error("negative value {value} at feature {feature}; Tanimoto similarity needs non-negative vectors")]
    NegativeFeature { feature: u32, value: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("objective is not finite at the initial point")]
    NonFiniteObjective,

    #[error("line search failed after {0} halvings")]
    LineSearchFailed(usize),

    #[error("coupling references unknown column {0}")]
    DanglingCoupling(String),

    #[error("task {0} has an empty positive or negative side")]
    EmptyTaskSide(String),

    #[error("pooled task for {0} is degenerate (empty positives or negatives)")]
    DegeneratePooledTask(String),

    #[error("task {task} has no neighbor entry in the neighbor map")]
    MissingNeighbors { task: String },

    #[error("neighbor class {class} is not present in the other source")]
    MissingNeighborClass { class: u32 },

    #[error("evaluation input: {0}")]
    Eval(String),

    #[error("model has no columns for the requested source")]
    EmptyModel,

    #[error("model file {path}: {msg}")]
    ModelFormat { path: PathBuf, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("every hyperparameter cell failed to train")]
    TuningFailed,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
