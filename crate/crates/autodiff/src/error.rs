//! Error type shared by tensor construction, primitive evaluation and the tape.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are structurally incompatible with the primitive.
    #[error("shape error: {0}")]
    Shape(String),
    /// A computation produced or consumed a NaN or infinite value.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// An API precondition was violated (wrong tape, non-scalar loss, ...).
    #[error("contract error: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
