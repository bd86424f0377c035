use std::fmt;

use serde::Serialize;

pub const EXIT_MODEL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Error printed to stderr as one JSON object before exiting.
#[derive(Debug, Serialize)]
pub struct CliError {
    #[serde(skip)]
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, kind: "usage", message: message.into(), path: None }
    }

    pub fn nonconvergence(message: impl Into<String>) -> Self {
        CliError { code: EXIT_MODEL, kind: "nonconvergence", message: message.into(), path: None }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError {
            code: EXIT_USAGE,
            kind: "io",
            message: format!("{}: {e}", path.display()),
            path: Some(path.display().to_string()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<stintlab::Error> for CliError {
    fn from(e: stintlab::Error) -> Self {
        use stintlab::Error as E;
        let message = e.to_string();
        let (code, kind, path) = match &e {
            E::Domain(_) => (EXIT_USAGE, "domain", None),
            E::Parse { path, .. } => (EXIT_USAGE, "parse", Some(path.display().to_string())),
            E::Io { path, .. } => (EXIT_USAGE, "io", Some(path.display().to_string())),
            E::Unsupported(_) => (EXIT_USAGE, "unsupported", None),
            E::Config(_) => (EXIT_USAGE, "config", None),
            E::Init(_) => (EXIT_MODEL, "init", None),
            E::Fit(_) => (EXIT_MODEL, "fit", None),
        };
        CliError { code, kind, message, path }
    }
}

pub type CliResult<T> = Result<T, CliError>;
