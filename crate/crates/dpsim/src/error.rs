use thiserror::Error;

/// Errors produced across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("lens file parse error at line {line}: {msg}")]
    LensParse { line: usize, msg: String },

    #[error("invalid prescription: {0}")]
    InvalidPrescription(String),

    #[error("paraxial solve failed: {0}")]
    Paraxial(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point fully vignetted")]
    FullyVignetted,

    #[error("degenerate prediction (all-zero output)")]
    DegeneratePrediction,

    #[error("format error: {0}")]
    Format(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
