use thiserror::Error;

use crate::expr::ExprError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in {field}: {message}")]
    Config { field: String, message: String },

    #[error("cannot parse config: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("expression error in {field}: {source}")]
    Expr {
        field: String,
        #[source]
        source: ExprError,
    },

    #[error("failing checks: {}", .0.join(", "))]
    ChecksFailed(Vec<String>),

    #[error("missing reports in {dir}: expected one of {}", .expected.join(", "))]
    MissingReports { dir: String, expected: Vec<String> },

    #[error(transparent)]
    Core(#[from] fkverify::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write config: {0}")]
    TomlWrite(#[from] toml::ser::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 2 for schema and validation problems, 1 for failed checks or missing
    /// reports, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Toml(_) | CliError::Expr { .. } => 2,
            CliError::ChecksFailed(_) | CliError::MissingReports { .. } => 1,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
