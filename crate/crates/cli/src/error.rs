use std::path::PathBuf;

use serde_json::json;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] predcp::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed model, manifest or argument value.
    #[error("{0}")]
    Input(String),

    /// A numerical check ran to completion and did not pass.
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(predcp::Error::Degenerate { .. } | predcp::Error::UnboundedMap { .. }) => 3,
            CliError::Verification(_) => 3,
            _ => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => match e {
                predcp::Error::Domain(_) => "domain",
                predcp::Error::InvalidSpec(_) => "invalid_spec",
                predcp::Error::Shape(_) => "shape",
                predcp::Error::Degenerate { .. } => "degenerate",
                predcp::Error::UnboundedMap { .. } => "unbounded_map",
                predcp::Error::Precondition(_) => "precondition",
            },
            CliError::Io { .. } => "io",
            CliError::Input(_) => "input",
            CliError::Verification(_) => "verification",
        }
    }

    /// One-line JSON diagnostic for stderr.
    pub fn diagnostic(&self) -> String {
        json!({ "error": self.kind(), "exit_code": self.exit_code(), "message": self.to_string() }).to_string()
    }
}
