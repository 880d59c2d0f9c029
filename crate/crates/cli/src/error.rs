use std::fmt;
use std::path::Path;

/// Failures of a CLI run, each mapped to a process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid flags or flag combinations.
    Usage(String),
    Core(sinodn_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Core(sinodn_core::Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// 1 usage, 2 I/O or file contents, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use sinodn_core::Error;
        match self {
            CliError::Usage(_) | CliError::Core(Error::Config(_)) => 1,
            CliError::Core(Error::Io { .. } | Error::Format(_) | Error::Shape(_)) => 2,
            CliError::Core(Error::Numerical(_)) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for CliError {}

impl From<sinodn_core::Error> for CliError {
    fn from(e: sinodn_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;
    use sinodn_core::Error;

    #[test]
    fn exit_code_mapping() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::Core(Error::Config("x".into())).exit_code(), 1);
        assert_eq!(CliError::Core(Error::Format("x".into())).exit_code(), 2);
        assert_eq!(CliError::Core(Error::Shape("x".into())).exit_code(), 2);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(CliError::io(Path::new("a"), io).exit_code(), 2);
        assert_eq!(CliError::Core(Error::Numerical("x".into())).exit_code(), 3);
    }
}
