use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid cavity geometry: {0}")]
    InvalidGeometry(String),

    #[error("pump power {p_pump} W is at or above threshold {p_threshold} W")]
    AboveThreshold { p_pump: f64, p_threshold: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("efficiency chain is under-determined: {unknowns} unknown entries")]
    Underdetermined { unknowns: usize },

    #[error("unbounded squeezing: total efficiency of 1 has no finite dB limit")]
    UnboundedSqueezing,

    #[error("rank-deficient normal matrix: unidentifiable combination {combination}")]
    RankDeficient { combination: String },

    #[error("non-finite residual at series {series}, point {index} (x = {x})")]
    Evaluation { series: usize, index: usize, x: f64 },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid parameter setup: {0}")]
    InvalidParameters(String),

    #[error("empty grid: {0}")]
    EmptyGrid(String),

    #[error("degenerate abscissae: all x values are equal")]
    DegenerateAbscissae,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("trace of {len} samples is shorter than one {segment}-sample segment")]
    TraceTooShort { len: usize, segment: usize },

    #[error("noise band contains no usable bins")]
    EmptyNoiseBand,
}
