use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("simplex stalled after {iterations} pivots (instance {hash:016x})")]
    NumericalBreakdown { iterations: usize, hash: u64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("invalid epsilon {0}")]
    InvalidEpsilon(f64),
    #[error("conditioning on an event of zero mass")]
    EmptyConditioning,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("dimension {0} too large for exhaustive enumeration")]
    DimensionTooLarge(usize),
    #[error("type {point:?} of bidder {bidder} is not in the type space")]
    UnsupportedType { bidder: usize, point: Vec<f64> },
    #[error("instance too large: {0} profiles exceed the enumeration cap")]
    InstanceTooLarge(u128),
    #[error("linear program unexpectedly {0}")]
    LpFailure(String),
    #[error("base mechanism is not IR: bidder {bidder} has utility {utility} at {profile:?}")]
    BaseMechanismNotIr { bidder: usize, profile: Vec<usize>, utility: f64 },
    #[error("transform requires a single bidder, got {0}")]
    MultiBidderUnsupported(usize),
    #[error("no samples")]
    EmptySamples,
    #[error("value {value} of node {node} is not in the alphabet")]
    AlphabetViolation { node: usize, value: f64 },
    #[error("joint enumeration of {0} states exceeds the cap")]
    TooLarge(u128),
    #[error("graph structures differ")]
    StructureMismatch,
    #[error("no candidates")]
    EmptyCandidates,
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

pub type Result<T> = std::result::Result<T, Error>;
