use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed or invalid configuration (exit 1).
    #[error("config error {0}")]
    Config(String),

    /// Output directory or file could not be written (exit 1).
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A computation failed (exit 2).
    #[error("numerical failure in {op}: {source}")]
    Numerical {
        op: &'static str,
        #[source]
        source: erlq::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Numerical { .. } => 2,
        }
    }
}

impl From<erlq::Error> for CliError {
    fn from(e: erlq::Error) -> Self {
        match e {
            erlq::Error::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Numerical {
                op: other.operation(),
                source: other,
            },
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}
