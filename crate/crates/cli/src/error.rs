use std::fmt;

/// CLI failures, grouped by exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(mstp::Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use mstp::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                E::InvalidArgument(_) => 2,
                E::Schema(_)
                | E::Domain(_)
                | E::Positivity { .. }
                | E::MalformedTrajectory { .. }
                | E::Dimension { .. } => 3,
                E::Csv(_) | E::Json(_) => 3,
                E::Numeric(_) | E::DantzigInfeasible { .. } | E::DegenerateInformation { .. } => 4,
                E::Convergence(_) => 5,
                E::Io(_) => 1,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<mstp::Error> for CliError {
    fn from(e: mstp::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(mstp::Error::Json(e))
    }
}
