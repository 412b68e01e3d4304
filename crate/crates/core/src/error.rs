use thiserror::Error;

/// Errors raised by state construction, optical elements, detection and the
/// protocol drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown mode `{0}`")]
    UnknownMode(String),

    #[error("duplicate mode `{0}` in registry")]
    DuplicateMode(String),

    #[error("states live on different mode registries")]
    RegistryMismatch,

    #[error("matrix is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("matrix dimension {got} does not match {expected} modes")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("modes passed to a mode unitary must be distinct")]
    RepeatedMode,

    #[error("kept subspace has dimension {dim}, above the bound {bound}")]
    SubspaceTooLarge { dim: usize, bound: usize },

    #[error("path `{path}`: {reason}")]
    Basis { path: String, reason: String },

    #[error("parameter `{name}` = {value} outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("mode `{0}` must be empty before emission")]
    OccupiedMode(String),

    #[error("emission order {order} needs {needed} excitations, cutoff is {cutoff}")]
    OrderExceedsCutoff { order: u32, needed: u32, cutoff: u8 },

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("subsystem is not qubit-like: {0}")]
    NotQubit(String),

    #[error("no detector declared for mode `{0}`")]
    MissingDetector(String),

    #[error("state leaves the expected sector: {0}")]
    OutOfSector(String),

    #[error("invalid element spec `{0}`")]
    ElementSyntax(String),

    #[error("invalid herald rule: {0}")]
    RuleSyntax(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sampled mode needs a seed")]
    MissingSeed,

    #[error("weights must be positive and sum to 1 (got {0})")]
    BadWeights(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
