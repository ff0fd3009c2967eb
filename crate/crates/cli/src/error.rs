use std::fmt;
use std::process::ExitCode;

/// Failures that end a command, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    /// Input could not be read or does not describe a valid problem.
    Schema { field: Option<String>, location: Option<(usize, usize)>, message: String },
    /// A computation failed on valid input.
    Numeric(closedmtp::Error),
}

impl CliError {
    pub fn schema(field: impl Into<String>, message: impl fmt::Display) -> Self {
        CliError::Schema { field: Some(field.into()), location: None, message: message.to_string() }
    }

    pub fn io(path: &str, err: std::io::Error) -> Self {
        CliError::Schema { field: None, location: None, message: format!("cannot read {path}: {err}") }
    }

    pub fn from_json(err: serde_path_to_error::Error<serde_json::Error>) -> Self {
        let path = err.path().to_string();
        let inner = err.into_inner();
        let location = (inner.line() > 0).then(|| (inner.line(), inner.column()));
        // serde_json appends " at line L column C"; the location is reported separately
        let mut message = inner.to_string();
        if let Some(cut) = message.rfind(" at line ") {
            message.truncate(cut);
        }
        let field = (path != ".").then_some(path);
        CliError::Schema { field, location, message }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Schema { .. } => ExitCode::from(2),
            CliError::Numeric(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Schema { field, location, message } => {
                write!(f, "invalid input")?;
                if let Some((line, col)) = location {
                    write!(f, " at line {line}, column {col}")?;
                }
                if let Some(field) = field {
                    write!(f, " (field `{field}`)")?;
                }
                write!(f, ": {message}")
            }
            CliError::Numeric(e) => write!(f, "computation failed: {e}"),
        }
    }
}

impl From<closedmtp::Error> for CliError {
    fn from(e: closedmtp::Error) -> Self {
        CliError::Numeric(e)
    }
}
