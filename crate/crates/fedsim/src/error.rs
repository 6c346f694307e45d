//! Error type shared across the simulator.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building or running an experiment.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation contract (shape mismatch, bad argument).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration; the message names the offending field.
    #[error("config error: {0}")]
    Config(String),

    /// Parameters blew up (NaN/Inf or magnitude beyond the guard).
    #[error("divergence at round {round}, client {client}, local step {step}")]
    Divergence {
        round: usize,
        client: usize,
        step: usize,
    },

    /// Malformed input file; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Client/server exchange broke its protocol (empty round, missing field).
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code for the CLI: 2 config, 3 divergence, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } => 3,
            Error::Io(_) => 4,
            _ => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(Error::config("M exceeds N").exit_code(), 2);
        assert_eq!(Error::contract("bad shape").exit_code(), 2);
        assert_eq!(
            Error::Parse {
                line: 3,
                message: "ragged".into()
            }
            .exit_code(),
            2
        );
        assert_eq!(
            Error::Divergence {
                round: 1,
                client: 2,
                step: 3
            }
            .exit_code(),
            3
        );
        assert_eq!(
            Error::Io(std::io::Error::other("disk")).exit_code(),
            4
        );
    }
}
