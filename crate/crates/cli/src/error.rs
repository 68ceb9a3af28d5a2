use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] svcluster::Error),

    #[error("{0} violation(s) found")]
    Violations(usize),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// 0 success, 1 assertion or violation, 2 usage or config, 3 I/O or parse.
    pub fn exit_code(&self) -> i32 {
        use svcluster::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Violations(_) => 1,
            CliError::Core(e) => match e {
                E::InvalidInput(_) | E::Config(_) => 2,
                E::Io(_) | E::Json(_) | E::Parse { .. } => 3,
                E::InvalidState(_)
                | E::Numerical(_)
                | E::DegeneratePoint(_)
                | E::DegenerateClustering(_) => 1,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
