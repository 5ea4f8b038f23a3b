use std::fmt;

/// Failure classes, each with its own process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    /// Bad flags or configuration file.
    Config,
    /// A file could not be read or written.
    Io,
    /// Input data is malformed or inconsistent.
    Validation,
}

impl Kind {
    pub fn exit_code(self) -> u8 {
        match self {
            Kind::Config => 2,
            Kind::Io => 3,
            Kind::Validation => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub error: anyhow::Error,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn new(kind: Kind, error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            error: error.into(),
        }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        Self::new(Kind::Config, anyhow::anyhow!("{msg}"))
    }

    pub fn with_context(self, msg: impl fmt::Display + Send + Sync + 'static) -> Self {
        Self::new(self.kind, self.error.context(msg))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<spgan_core::Error> for CliError {
    fn from(e: spgan_core::Error) -> Self {
        use spgan_core::Error as E;
        let kind = match &e {
            E::MissingFile(_) | E::Io(_) => Kind::Io,
            E::InvalidArgument(_) => Kind::Config,
            E::MalformedHeader { .. }
            | E::LengthMismatch { .. }
            | E::IllegalPhase { .. }
            | E::OutOfBounds(_)
            | E::Shape(_)
            | E::RevNotReached { .. }
            | E::Checkpoint(_)
            | E::Json(_) => Kind::Validation,
        };
        Self::new(kind, e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(Kind::Io, e)
    }
}

/// Attaches a message to any error convertible into [`CliError`].
pub trait Context<T> {
    fn context(self, msg: impl fmt::Display + Send + Sync + 'static) -> CliResult<T>;
}

impl<T, E: Into<CliError>> Context<T> for Result<T, E> {
    fn context(self, msg: impl fmt::Display + Send + Sync + 'static) -> CliResult<T> {
        self.map_err(|e| e.into().with_context(msg))
    }
}
