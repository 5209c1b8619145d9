//! Error kinds mapped onto distinct process exit codes.

use std::path::Path;

/// Exit codes: 2 for bad configuration or malformed files, 3 for I/O
/// failures, 4 for aborted training runs.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("training aborted: {0}")]
    Training(replearn::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io(_) => 3,
            CliError::Training(_) => 4,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> CliError {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<replearn::Error> for CliError {
    fn from(e: replearn::Error) -> Self {
        match e {
            replearn::Error::NonFinite { .. } => CliError::Training(e),
            other => CliError::Validation(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_per_kind() {
        let v = CliError::Validation("x".into());
        let i = CliError::Io("y".into());
        let t = CliError::from(replearn::Error::NonFinite { iteration: 3 });
        assert_eq!(v.exit_code(), 2);
        assert_eq!(i.exit_code(), 3);
        assert_eq!(t.exit_code(), 4);
        assert!(matches!(t, CliError::Training(_)));
        // Other library errors are configuration problems.
        let shape = CliError::from(replearn::Error::ShapeMismatch("z".into()));
        assert_eq!(shape.exit_code(), 2);
    }
}
