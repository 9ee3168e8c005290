use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Parameter or configuration values violate their documented ranges.
    /// The message lists every violated constraint, not just the first.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A covariance matrix stopped describing a quantum state: its smallest
    /// symplectic eigenvalue fell below 1 beyond numerical tolerance.
    #[error("non-physical state ({context}): min symplectic eigenvalue {nu_min:.6e} < 1")]
    NonPhysicalState { nu_min: f64, context: String },

    /// A temporal mode cannot be normalized because the selected transfer
    /// matrix element never rises above numerical noise.
    #[error("degenerate temporal mode: {0}")]
    DegenerateProfile(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: String,
    },

    #[error("ensemble sample {index} failed: {source}")]
    EnsembleSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// Config file could not be read or parsed, or failed validation.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
