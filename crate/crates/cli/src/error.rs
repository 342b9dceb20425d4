use std::fmt;

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Configuration or parameter rejected; the message leads with the field path.
    Schema(String),
    /// A pole the nudge could not step around.
    Pole(String),
    Io(String),
    /// Any other solver failure.
    Solver(String),
    /// oracle_check ran but the solvers disagree.
    OracleMismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Pole(_) => 3,
            CliError::Io(_) => 4,
            CliError::Solver(_) | CliError::OracleMismatch(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Schema(_) => "schema",
            CliError::Pole(_) => "pole",
            CliError::Io(_) => "io",
            CliError::Solver(_) => "solver",
            CliError::OracleMismatch(_) => "oracle",
        }
    }

    pub fn schema(path: &str, msg: impl fmt::Display) -> Self {
        CliError::Schema(format!("{path}: {msg}"))
    }

    /// Classifies a library error raised while evaluating the section at `path`.
    pub fn from_core(path: &str, e: wqed2d::Error) -> Self {
        use wqed2d::Error as E;
        match e {
            E::Pole { .. } => CliError::Pole(e.to_string()),
            E::InvalidParameter { .. } | E::PortOutOfRange { .. } | E::SingularPhase { .. } => {
                CliError::schema(path, e)
            }
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            CliError::Schema(m)
            | CliError::Pole(m)
            | CliError::Io(m)
            | CliError::Solver(m)
            | CliError::OracleMismatch(m) => m,
        };
        write!(f, "error[{}] (exit {}): {}", self.kind(), self.exit_code(), msg)
    }
}

impl std::error::Error for CliError {}
