use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Parse(String),

    #[error("{count} run(s) diverged")]
    Diverged { count: usize },

    #[error("verification failed")]
    VerifyFailed,

    #[error(transparent)]
    Core(#[from] vibench_core::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 1 divergence or failed checks, 2 configuration, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Diverged { .. } | Self::VerifyFailed => 1,
            Self::Config(_) => 2,
            Self::Io { .. } | Self::Parse(_) => 3,
            Self::Core(e) => match e {
                vibench_core::Error::Io(_) | vibench_core::Error::Parse { .. } => 3,
                vibench_core::Error::Diverged { .. } => 1,
                _ => 2,
            },
        }
    }
}
