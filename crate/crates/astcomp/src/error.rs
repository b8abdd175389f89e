use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] astcomp_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    /// A record that could not be read, with its location.
    #[error("{}:{line}: {source}", path.display())]
    Record { path: PathBuf, line: usize, source: astcomp_core::Error },
    /// A file whose contents are not in the expected format.
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Error {
        Error::Format { path: path.into(), message: message.to_string() }
    }

    /// Process exit status: 1 usage or configuration, 2 data, 3 divergence.
    pub fn exit_code(&self) -> u8 {
        use astcomp_core::Error as E;
        match self {
            Error::Usage(_) => 1,
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => 1,
            Error::Io { .. } => 2,
            Error::Record { .. } | Error::Format { .. } => 2,
            Error::Core(E::Config(_) | E::UnknownType { .. } | E::Domain(_)) => 1,
            Error::Core(E::Divergence { .. }) => 3,
            Error::Core(_) => 2,
        }
    }
}
