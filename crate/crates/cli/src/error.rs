use suzz::SuzzError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error{}{}: {message}", line.map_or(String::new(), |l| format!(" at line {l}")), field.as_ref().map_or(String::new(), |f| format!(" in field '{f}'")))]
    Config {
        line: Option<usize>,
        field: Option<String>,
        message: String,
    },

    #[error("{context}: {source}")]
    Runtime {
        context: String,
        #[source]
        source: SuzzError,
    },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config { .. } => 2,
            Self::Runtime { .. } | Self::Io { .. } => 3,
        }
    }

    pub fn runtime(context: impl Into<String>, source: SuzzError) -> Self {
        Self::Runtime {
            context: context.into(),
            source,
        }
    }
}
