use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(indefinite::Error),

    #[error("numerical failure: {0}")]
    Numerical(indefinite::Error),

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration problems, 1 for everything found while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

impl From<indefinite::Error> for CliError {
    fn from(e: indefinite::Error) -> Self {
        use indefinite::Error as E;
        if e.is_invariant_violation() {
            return CliError::Invariant(e.to_string());
        }
        match e {
            E::InvalidParams(m) => CliError::Config(m),
            E::Domain(_) | E::NoCenter(_) | E::NotReachable(_) | E::NotBracketed(_) | E::Degenerate(_) => {
                CliError::Domain(e)
            }
            _ => CliError::Numerical(e),
        }
    }
}
