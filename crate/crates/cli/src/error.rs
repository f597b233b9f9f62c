use std::path::PathBuf;

/// Failures that map to a specific exit code. Anything else is a runtime
/// failure (exit 1).
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config keys or values, or an empty dataset (exit 2).
    #[error("{0}")]
    Usage(String),

    #[error("missing {artifact} ({path}); run `sscnn {command}` first")]
    MissingPrerequisite {
        artifact: String,
        path: PathBuf,
        command: &'static str,
    },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> anyhow::Error {
        CliError::Usage(msg.into()).into()
    }

    pub fn missing(artifact: impl Into<String>, path: impl Into<PathBuf>, command: &'static str) -> anyhow::Error {
        CliError::MissingPrerequisite {
            artifact: artifact.into(),
            path: path.into(),
            command,
        }
        .into()
    }
}

/// Process exit code for an error returned by a command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<CliError>() {
        Some(CliError::Usage(_)) => 2,
        _ => 1,
    }
}
