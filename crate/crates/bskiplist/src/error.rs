use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The minimum key is reserved for sentinel headers.
    #[error("key is reserved for sentinel headers")]
    ReservedKey,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}
