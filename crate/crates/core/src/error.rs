use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model structure: {0}")]
    InvalidStructure(String),

    #[error("parameter count overflows for {0}")]
    Sizing(String),

    #[error("empty design: {len} samples with memory bound tau = {tau} leave no usable rows")]
    EmptyDesign { len: usize, tau: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("unstable filter: {0}")]
    Unstable(String),

    #[error("bound domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Data(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::EmptyDesign { .. }
            | Error::DegenerateData(_) => 3,
            _ => 2,
        }
    }
}
