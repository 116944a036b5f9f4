//! CLI error taxonomy with one exit code per failure class and a single
//! machine-readable JSON line on stderr.

use std::fmt;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;

/// What went wrong, by contract class rather than by module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Argument parsing: unknown flags, malformed values, missing subcommand.
    Usage(String),
    /// A config or parameter set that parsed but fails validation.
    Config(String),
    /// Filesystem trouble reading inputs or writing artifacts.
    Io(String),
    /// A solver or simulation failed on valid inputs.
    Numeric(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Numeric(_) => "numeric",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Config(m) | CliError::Io(m) | CliError::Numeric(m) => m,
        }
    }

    /// One-line JSON report for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": {
                "kind": self.kind(),
                "message": self.message(),
                "code": self.exit_code(),
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl From<mfrisk::Error> for CliError {
    fn from(e: mfrisk::Error) -> Self {
        match e {
            mfrisk::Error::InvalidParams(_) | mfrisk::Error::EmptyGroup { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let errors = [
            CliError::Usage("u".into()),
            CliError::Config("c".into()),
            CliError::Io("i".into()),
            CliError::Numeric("n".into()),
        ];
        for (i, a) in errors.iter().enumerate() {
            for b in &errors[i + 1..] {
                assert_ne!(a.exit_code(), b.exit_code());
                assert_ne!(a.kind(), b.kind());
            }
        }
        assert!(errors.iter().all(|e| e.exit_code() != 0));
    }

    #[test]
    fn stderr_report_is_one_parseable_line() {
        let e = CliError::Io("missing file: config.json".into());
        let line = e.to_json();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["error"]["kind"], "io");
        assert_eq!(v["error"]["code"], EXIT_IO);
    }

    #[test]
    fn library_errors_split_into_config_and_numeric() {
        let config: CliError = mfrisk::Error::InvalidParams(vec!["bad dt".into()]).into();
        assert_eq!(config.kind(), "config");
        let numeric: CliError = mfrisk::Error::NonFiniteState { step: 3 }.into();
        assert_eq!(numeric.kind(), "numeric");
    }
}
