use std::path::PathBuf;

/// Errors raised across the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("state vector contains non-finite entries")]
    NonFiniteState,
    #[error("parameter ({0}, {1}) lies outside the parameter domain")]
    ParameterOutOfDomain(f64, f64),
    #[error("Newton iteration did not converge after {iters} iterations (last residual {last:.3e})")]
    NonConvergence {
        iters: usize,
        last: f64,
        history: Vec<f64>,
    },
    #[error("linear solve with the Jacobian failed")]
    SingularJacobian,
    #[error("exact-solution denominator vanishes at ({0}, {1})")]
    SingularDenominator(f64, f64),
    #[error("grid split {0}x{1} leaves a subdomain without residual rows")]
    DegenerateSplit(usize, usize),
    #[error("test functions for port {0} stayed rank deficient after repeated draws")]
    TestFunctionRankFailure(usize),
    #[error("snapshot matrix is identically zero")]
    ZeroSnapshots,
    #[error("sample budget {budget} is smaller than the {corners} seeded corner nodes")]
    InsufficientBudget { budget: usize, corners: usize },
    #[error("least-squares fit on the sampled rows is rank deficient")]
    SampleRankFailure,
    #[error("sampled residual basis is rank deficient (rank {rank} < {cols})")]
    GappyRankDeficient { rank: usize, cols: usize },
    #[error("non-finite value while assembling the KKT system")]
    NonFiniteAssembly,
    #[error("saddle-point matrix is singular")]
    SingularSaddle,
    #[error("SQP did not converge after {iters} iterations (KKT norm {last:.3e})")]
    SqpNonConvergence { iters: usize, last: f64 },
    #[error("port values disagree by {0:.3e}")]
    PortMismatch(f64),
    #[error("reference state of subdomain {0} has zero norm")]
    ZeroReference(usize),
    #[error("port {0} does not lie on a coordinate-aligned segment")]
    UnsupportedPortGeometry(usize),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed container {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
