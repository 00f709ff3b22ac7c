use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("a DC-free constraint needs at least 2 RDS values, got {0}")]
    TooFewStates(usize),
    #[error("state {state} out of range for an FSM with {num_states} states")]
    StateOutOfRange { state: usize, num_states: usize },
    #[error("emitted bit must be 0 or 1, got {0}")]
    InvalidBit(u8),
    #[error("constraint graph is not strongly connected")]
    NotIrreducible,
    #[error("power iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("capacity must be positive to build a rate table")]
    ZeroCapacity,

    #[error("expected a word of {expected} bits, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid bit string {0:?}")]
    InvalidBitString(String),
    #[error("codebook with {0} frames is too large to enumerate")]
    TooManyFrames(usize),
    #[error("malformed codebook: {0}")]
    MalformedCodebook(String),

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("shape mismatch: expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u32),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("MAP decoder made no errors at {0} dB; the validation grid cannot normalize")]
    ZeroMapErrors(f64),

    #[error("unknown decoder {0:?}")]
    UnknownDecoder(String),
    #[error("target BER {0:e} is outside the range of a curve")]
    TargetOutOfRange(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
