use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] dfresid::Error),
}

impl CliError {
    /// 1 for usage, configuration and I/O problems, 2 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        use dfresid::Error as E;
        match self {
            CliError::Core(
                E::NotUnit { .. }
                | E::NotOrthonormal { .. }
                | E::RankDeficient { .. }
                | E::NotSymmetric { .. }
                | E::Singular { .. }
                | E::NonFinite(_)
                | E::TooManyFitFailures { .. },
            ) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
