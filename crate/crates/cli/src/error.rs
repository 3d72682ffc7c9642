use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}{message}", location(.line))]
    Config { line: Option<usize>, message: String },

    #[error(transparent)]
    Core(#[from] ldg_core::Error),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed field or VTK file.
    #[error("{0}")]
    Format(String),

    #[error("{0}")]
    Usage(String),
}

fn location(line: &Option<usize>) -> String {
    match line {
        Some(l) => format!("line {l}: "),
        None => String::new(),
    }
}

impl CliError {
    pub fn config(line: usize, message: impl Into<String>) -> Self {
        CliError::Config {
            line: Some(line),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Core(e) => e.category(),
            CliError::Io { .. } => "io",
            CliError::Format(_) => "format",
            CliError::Usage(_) => "usage",
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
