use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} is not representable with {frac_bits} fractional bits")]
    EncodingRange { value: f64, frac_bits: u32 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("share integrity violation: {0}")]
    Integrity(String),

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("protocol order violation: {0}")]
    ProtocolOrder(String),

    #[error("malformed frame: {0}")]
    Framing(String),

    #[error("container format error: {0}")]
    Format(String),

    #[error("preprocessing budget exhausted: {0}")]
    BudgetExhausted(String),

    #[error("invalid model spec: {0}")]
    ModelSpec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
