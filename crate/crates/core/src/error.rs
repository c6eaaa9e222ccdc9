use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A caller broke an operation's precondition (dimension mismatch, empty input, ...).
    #[error("contract violation: {0}")]
    Contract(String),
    /// The corpus does not fit the train/test protocol.
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("clip too short for a single analysis frame ({samples} samples, frame is {frame_len})")]
    EmptyFeatures { samples: usize, frame_len: usize },
    #[error("initialization error: {0}")]
    Initialization(String),
    #[error("training error: {0}")]
    Training(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! contract {
    ($($arg:tt)*) => { $crate::Error::Contract(alloc::format!($($arg)*)) };
}
pub(crate) use contract;
