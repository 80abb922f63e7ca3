use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is not positive definite: pivot {pivot} is {value:e}")]
    Indefinite { pivot: usize, value: f64 },
    #[error("matrix is numerically singular at pivot {pivot}")]
    Singular { pivot: usize },
    #[error("conjugate gradient did not converge after {iterations} iterations (residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },
    #[error("eigensolver did not converge after {iterations} iterations")]
    EigNotConverged { iterations: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("requested {requested} eigenpairs but only {available} are available")]
    NotEnoughEigenpairs { requested: usize, available: usize },
    #[error("form {0} is not available for this model")]
    UnknownForm(&'static str),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn in_sample(self, index: usize) -> Self {
        Error::Sample {
            index,
            source: alloc::boxed::Box::new(self),
        }
    }
}
