use std::path::{Path, PathBuf};

use thiserror::Error;
use veridl_core::adversary::AdversaryError;
use veridl_core::{ArtifactError, CodecError, DnnError, PairingError, ProtocolError};

/// Process exit codes.
pub mod exit {
    pub const ACCEPT: i32 = 0;
    pub const MALFORMED: i32 = 1;
    pub const REJECT: i32 = 2;
    pub const IO: i32 = 3;
    pub const PARSE: i32 = 4;
    pub const PROTOCOL: i32 = 5;
    pub const USAGE: i32 = 64;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Net(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("{0}")]
    Protocol(String),
    #[error("usage: {0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Net(_) => exit::IO,
            CliError::Parse(_) => exit::PARSE,
            CliError::Malformed(_) => exit::MALFORMED,
            CliError::Protocol(_) => exit::PROTOCOL,
            CliError::Usage(_) => exit::USAGE,
        }
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        CliError::Malformed(e.to_string())
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Malformed(m) => CliError::Malformed(m),
            other => CliError::Protocol(other.to_string()),
        }
    }
}

impl From<DnnError> for CliError {
    fn from(e: DnnError) -> Self {
        match e {
            DnnError::Shape(m) => CliError::Malformed(m),
            DnnError::Config(m) => CliError::Parse(m),
            other => CliError::Protocol(other.to_string()),
        }
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<PairingError> for CliError {
    fn from(e: PairingError) -> Self {
        CliError::Protocol(e.to_string())
    }
}

impl From<AdversaryError> for CliError {
    fn from(e: AdversaryError) -> Self {
        match e {
            AdversaryError::UnknownKind(_) | AdversaryError::Parameter(_) => CliError::Usage(e.to_string()),
            AdversaryError::Protocol(p) => p.into(),
            AdversaryError::Dnn(d) => d.into(),
            AdversaryError::Pairing(p) => p.into(),
        }
    }
}
