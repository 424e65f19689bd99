use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid alignment: {0}")]
    InvalidAlignment(String),

    #[error("motif site crosses a change point of the alignment path")]
    SiteCrossesChangePoint,

    #[error("inconsistent latent state: {0}")]
    InconsistentLatent(String),

    #[error("state space too large for exhaustive enumeration ({0} configurations)")]
    StateSpaceTooLarge(u128),

    #[error("empty parent list")]
    EmptyParents,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot place {0} modules without overlap")]
    Placement(usize),

    #[error("duplicate record id `{0}`")]
    DuplicateId(String),

    #[error("unknown species `{0}`")]
    UnknownSpecies(String),

    #[error("missing record `{0}`")]
    MissingRecord(String),

    #[error("invalid character `{ch}` in record `{record}`")]
    InvalidBase { record: String, ch: char },

    #[error("parse error in {path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::DuplicateId(_) => 3,
            Error::UnknownSpecies(_) => 4,
            Error::MissingRecord(_) => 5,
            Error::InvalidBase { .. } | Error::Parse { .. } => 6,
            Error::Read { .. } | Error::Io(_) => 7,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
