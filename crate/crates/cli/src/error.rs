use obstacle_core::Error as CoreError;

/// Failures of a run, each mapped to a fixed exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Parse(_) | Self::Io(_) => 2,
            Self::Precondition(_) => 3,
            Self::NonConvergence(_) => 4,
        }
    }
}

fn with_hint(message: String, hint: &str) -> String {
    if message.contains("(H") {
        message
    } else {
        format!("{message} {hint}")
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::InvalidNonlinearity(_) => Self::Precondition(with_hint(
                msg,
                "(H1)/(H2): f must be continuous and nonincreasing in y",
            )),
            CoreError::Precondition(_) | CoreError::Singular(_) => Self::Precondition(msg),
            CoreError::NonConvergence { .. } => Self::NonConvergence(with_hint(
                msg,
                "(H1): a reaction increasing in y or badly scaled data prevents convergence",
            )),
            CoreError::ContinuationStalled { .. } => Self::NonConvergence(with_hint(
                msg,
                "(H5)/(H6): no admissible separating v at this scale",
            )),
            _ => Self::Parse(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Io(e.to_string())
    }
}
