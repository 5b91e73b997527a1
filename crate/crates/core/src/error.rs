use thiserror::Error;

/// Errors produced anywhere in the fitting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid composition: {0}")]
    InvalidComposition(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("design matrix is rank deficient; offending block: {block}")]
    RankDeficient { block: String },

    #[error("spatial unit {unit} has no neighbours")]
    IsolatedUnit { unit: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(
        "replication {replication} failed (sub-seed stream {stream} of seed {seed}): {source}"
    )]
    Replication {
        replication: usize,
        seed: u64,
        stream: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by bad inputs rather than numerics.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::InvalidComposition(_)
            | Error::DimensionMismatch { .. }
            | Error::InvalidInput(_)
            | Error::RankDeficient { .. }
            | Error::IsolatedUnit { .. }
            | Error::Io(_)
            | Error::Csv(_) => true,
            Error::Replication { source, .. } => source.is_input_error(),
            Error::Singular(_) | Error::Numerical(_) => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
