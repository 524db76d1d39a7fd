//! File formats, configuration, and command implementations for the
//! `avatar` CLI. Everything here is deterministic: rerunning a command with
//! identical inputs produces byte-identical outputs.

pub mod commands;
pub mod config;
pub mod image_io;
pub mod jsonio;
pub mod obj;
pub mod rig;
pub mod tensor;

use std::fmt;

/// CLI error with a stable exit-code mapping: 1 for numerical failures,
/// 2 for IO/format failures.
#[derive(Debug)]
pub enum CliError {
    Io(std::io::Error),
    Format(String),
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(e) => write!(f, "io error: {e}"),
            CliError::Format(m) => write!(f, "format error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 1,
            CliError::Io(_) | CliError::Format(_) => 2,
        }
    }

    pub fn format(msg: impl Into<String>) -> CliError {
        CliError::Format(msg.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Format(format!("json: {e}"))
    }
}

impl From<avatar_core::Error> for CliError {
    fn from(e: avatar_core::Error) -> Self {
        use avatar_core::Error as E;
        match e {
            E::Diverged { .. }
            | E::NonFinite { .. }
            | E::ZeroAreaMesh
            | E::DegeneratePoints(_)
            | E::NonPositiveScale => CliError::Numerical(e.to_string()),
            other => CliError::Format(other.to_string()),
        }
    }
}
