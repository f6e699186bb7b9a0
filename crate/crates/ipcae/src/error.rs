use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] ipcae_core::Error),
    /// Unreadable or malformed input (config, CSV, checkpoint).
    #[error("{0}")]
    Input(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Write {
            path: path.into(),
            source,
        }
    }

    /// 1 for anything wrong with the inputs, 2 for failures during a run.
    pub fn exit_code(&self) -> u8 {
        use ipcae_core::Error as E;
        match self {
            Error::Input(_) => 1,
            Error::Core(E::Config(_) | E::Data(_) | E::Shape { .. }) => 1,
            Error::Core(E::NonFinite { .. } | E::Contract(_)) => 2,
            Error::Write { .. } => 2,
        }
    }
}
