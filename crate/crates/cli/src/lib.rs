//! Reproducible batch experiments on top of the `phasesweep` library.
//!
//! Each experiment takes an [`ExperimentConfig`], writes its artifacts into
//! an output directory and finishes with `manifest.json` holding the config,
//! seed, tool version and the SHA-256 of every file written.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{ExperimentConfig, KernelChoice, ScenePreset};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Core(#[from] phasesweep::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("dataset error: {0}")]
    Dataset(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Parse(_) => "config-parse",
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "io",
            CliError::Json(_) => "json",
            CliError::Dataset(_) => "dataset",
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            CliError::Config { field, .. } => Some(field),
            _ => None,
        }
    }

    /// One-line JSON description for stderr.
    pub fn to_json_line(&self) -> String {
        let mut v = serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
        });
        if let Some(f) = self.field() {
            v["field"] = serde_json::Value::String(f.to_string());
        }
        v.to_string()
    }
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}
