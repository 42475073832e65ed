use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("intersection index set must not be empty")]
    EmptyIntersection,
    #[error("intersection and difference sets overlap: {0:?}")]
    OverlappingSets(Vec<usize>),
    #[error("class index {index} out of range for universe size {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("universe size {0} outside supported range [1, 16]")]
    UniverseSizeOutOfRange(usize),
    #[error("unknown point id {0}")]
    UnknownPoint(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("mixture weights must be positive and sum to 1 (sum = {0})")]
    InvalidWeights(f64),
    #[error("covariance matrix is not symmetric positive-definite")]
    NotPositiveDefinite,
    #[error("density undefined at evaluation point")]
    DensityUndefined,
    #[error("generator support does not cover the target density (grid point {0:?})")]
    SupportNotCovered(Vec<f64>),
    #[error("training diverged at step {step}: non-finite parameters")]
    TrainingDiverged { step: usize },
    #[error("ratio provider contract violated: {0}")]
    ProviderContractViolation(String),
    #[error("chain initialization exhausted after {attempts} proposal draws")]
    InitializationExhausted { attempts: usize },
    #[error("EM produced a degenerate component after {retries} restarts")]
    DegenerateComponent { retries: usize },
    #[error("EM requires at least {needed} distinct points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },
    #[error("cannot parse joint-class spec {input:?}: {message}")]
    SpecParse { input: String, message: String },
    #[error("pipeline stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("unsupported format version {0}")]
    FormatVersion(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("config parse error: {0}")]
    Toml(String),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
