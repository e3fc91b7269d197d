use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

/// Failures the front end reports, each mapped to its own exit status.
#[derive(Debug)]
pub enum CliError {
    UnknownKey { source: String, key: String },
    ConfigType { source: String, message: String },
    MissingInput { path: PathBuf, message: String },
    Invalid(String),
    Runtime(anyhow::Error),
}

impl CliError {
    /// 1 runtime, 3 unknown config key, 4 config type mismatch, 5 missing
    /// input, 6 invalid setting. Usage errors exit with 2 from clap.
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Runtime(_) => 1,
            CliError::UnknownKey { .. } => 3,
            CliError::ConfigType { .. } => 4,
            CliError::MissingInput { .. } => 5,
            CliError::Invalid(_) => 6,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::UnknownKey { source, key } => write!(f, "{source}: unknown configuration key `{key}`"),
            CliError::ConfigType { source, message } => write!(f, "{source}: {message}"),
            CliError::MissingInput { path, message } => write!(f, "missing input {}: {message}", path.display()),
            CliError::Invalid(m) => write!(f, "invalid configuration: {m}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}
