use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] stretchnas_autodiff::Error),
    /// Malformed structured text (checkpoint, architecture file, config).
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(line: usize, col: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            col,
            msg: msg.into(),
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// True when the underlying failure is a non-finite numeric event, the
    /// class that triggers an abort-with-checkpoint.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Autodiff(stretchnas_autodiff::Error::Numeric(_))
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
