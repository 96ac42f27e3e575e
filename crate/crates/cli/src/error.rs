use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// A malformed or invalid row in a tabular input.
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },
    /// A JSON configuration file that does not match its schema.
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    /// An error raised by the library while processing `input`.
    #[error("{input}: {source}")]
    Core { input: String, source: avitrack::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: u64, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub fn config(path: &Path, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub fn core(input: impl Into<String>, source: avitrack::Error) -> Self {
        CliError::Core {
            input: input.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Config { .. } => "config",
            CliError::Core { source, .. } => source.kind(),
            CliError::Usage(_) => "usage",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// One-line JSON object: `{"error": kind, "input": .., "line": .., "message": ..}`.
    pub fn to_json_line(&self) -> String {
        let mut obj = serde_json::Map::new();
        obj.insert("error".into(), self.kind().into());
        match self {
            CliError::Io { path, source } => {
                obj.insert("input".into(), path.display().to_string().into());
                obj.insert("message".into(), source.to_string().into());
            }
            CliError::Parse { path, line, message } => {
                obj.insert("input".into(), path.display().to_string().into());
                obj.insert("line".into(), (*line).into());
                obj.insert("message".into(), message.clone().into());
            }
            CliError::Config { path, message } => {
                obj.insert("input".into(), path.display().to_string().into());
                obj.insert("message".into(), message.clone().into());
            }
            CliError::Core { input, source } => {
                obj.insert("input".into(), input.clone().into());
                obj.insert("message".into(), source.to_string().into());
            }
            CliError::Usage(message) => {
                obj.insert("message".into(), message.clone().into());
            }
        }
        serde_json::Value::Object(obj).to_string()
    }
}
