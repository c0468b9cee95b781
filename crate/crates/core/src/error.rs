use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("unknown sensitive column `{0}`")]
    UnknownColumn(String),

    #[error("sensitive group {column}={group} is empty")]
    EmptyGroup { column: String, group: u8 },

    #[error("undefined rate: empty cell {0}")]
    EmptyCell(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("optimizer diverged: loss increased for {0} consecutive epochs")]
    Divergence(usize),

    #[error("malformed input at row {row}: {message}")]
    Malformed { row: usize, message: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// True for failures caused by the input data rather than by configuration.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::InvalidDataset(_)
            | Error::Malformed { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::EmptyGroup { .. }
            | Error::EmptyCell(_)
            | Error::NonFinite(_)
            | Error::Divergence(_) => true,
            Error::Stage { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}
