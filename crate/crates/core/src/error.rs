use thiserror::Error;

/// Errors raised by the sampler, the quadrature engine and the mechanisms.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate law: {0}")]
    DegenerateLaw(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("round {round}: {source}")]
    Round {
        round: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by user input or configuration rather than by
    /// numerical breakdown.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Domain(_)
            | Error::DimensionMismatch { .. }
            | Error::DegenerateLaw(_)
            | Error::Precondition(_)
            | Error::Config(_)
            | Error::Ingestion(_)
            | Error::Io(_)
            | Error::Csv(_) => true,
            Error::Numerical(_) => false,
            Error::Round { source, .. } => source.is_config(),
        }
    }

    pub(crate) fn at_round(self, round: u64) -> Error {
        Error::Round {
            round,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
