//! Exit-code taxonomy: 0 success, 2 bad arguments, 3 I/O or file-format
//! failure, 4 numeric failure.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Args(String),
    Io(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Args(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Args(m) | CliError::Io(m) | CliError::Numeric(m) => write!(f, "{m}"),
        }
    }
}

impl From<lsg_core::Error> for CliError {
    fn from(e: lsg_core::Error) -> Self {
        use lsg_core::Error::*;
        match e {
            InvalidConfig(_) | ShapeMismatch { .. } => CliError::Args(e.to_string()),
            NonFiniteLoss { .. } | DegenerateDirection => CliError::Numeric(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<image::ImageError> for CliError {
    fn from(e: image::ImageError) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
