use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class {class} is deficient: needs {needed} samples, only {available} available")]
    DeficientClass {
        class: usize,
        needed: usize,
        available: usize,
    },

    #[error("stage {stage} requires a frozen source discriminator")]
    MissingSourceDiscriminator { stage: &'static str },

    #[error("checkpoint has no discriminator; adaptation needs one")]
    MissingDiscriminator,

    #[error("attribute classifier accuracy {accuracy:.4} is below the required {threshold:.4}")]
    ClassifierAccuracy { accuracy: f64, threshold: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid stage transition: {0}")]
    Stage(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("dataset file: {0}")]
    DatasetFormat(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Validation errors map to CLI exit code 1, everything else to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Shape(_)
                | Error::InvalidArgument(_)
                | Error::DeficientClass { .. }
                | Error::MissingSourceDiscriminator { .. }
                | Error::MissingDiscriminator
                | Error::Stage(_)
                | Error::Config(_)
        )
    }
}
