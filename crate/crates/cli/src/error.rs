use std::fmt;

use serde::Serialize;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
    pub const IO: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] medreg::Error),
    #[error("{0}")]
    Usage(String),
}

pub type CliResult<T> = Result<T, CliError>;

/// Machine-parsable error categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    Config,
    Data,
    Numeric,
    Io,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Config => "config",
            ErrorKind::Data => "data",
            ErrorKind::Numeric => "numeric",
            ErrorKind::Io => "io",
        };
        f.write_str(s)
    }
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => exit::USAGE,
            ErrorKind::Config | ErrorKind::Data => exit::DATA,
            ErrorKind::Numeric => exit::NUMERIC,
            ErrorKind::Io => exit::IO,
        }
    }
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn kind(&self) -> ErrorKind {
        use medreg::Error as E;
        match self {
            CliError::Usage(_) => ErrorKind::Usage,
            CliError::Core(e) => match e {
                E::Io { .. } => ErrorKind::Io,
                E::Config(_) => ErrorKind::Config,
                E::NonFinite(_) => ErrorKind::Numeric,
                E::Record { .. } | E::Data(_) | E::Shape(_) | E::MissingVector { .. } | E::Checkpoint(_) => {
                    ErrorKind::Data
                }
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind().exit_code()
    }

    /// One JSON line: `{"error":<kind>,"code":<exit code>,"message":<text>}`.
    pub fn to_line(&self) -> String {
        error_line(self.kind(), &self.to_string())
    }
}

pub fn error_line(kind: ErrorKind, message: &str) -> String {
    #[derive(Serialize)]
    struct Line<'a> {
        error: ErrorKind,
        code: i32,
        message: &'a str,
    }
    let message = message.replace('\n', " ");
    serde_json::to_string(&Line {
        error: kind,
        code: kind.exit_code(),
        message: message.trim(),
    })
    .expect("plain struct serializes")
}
