use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or invalid configuration and input files.
    #[error("{0}")]
    Config(String),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: sqkerr::Error,
    },

    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn config(context: &str, e: sqkerr::Error) -> Self {
        match e {
            sqkerr::Error::InvalidParameter(_) | sqkerr::Error::InvalidDimension(_) | sqkerr::Error::SingularParameter(_) => {
                CliError::Config(format!("{context}: {e}"))
            }
            other => CliError::Core { context: context.to_string(), source: other },
        }
    }

    pub fn core(context: &str, e: sqkerr::Error) -> Self {
        match e {
            sqkerr::Error::InvalidParameter(_) | sqkerr::Error::InvalidDimension(_) => {
                CliError::Config(format!("{context}: {e}"))
            }
            other => CliError::Core { context: context.to_string(), source: other },
        }
    }

    pub fn io(what: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", what.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core { .. } | CliError::Io(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        use sqkerr::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Core { source, .. } => match source {
                E::InvalidDimension(_) => "invalid_dimension",
                E::DimensionMismatch { .. } => "dimension_mismatch",
                E::InvalidParameter(_) => "invalid_parameter",
                E::SingularParameter(_) => "singular_parameter",
                E::NotHermitian { .. } => "not_hermitian",
                E::InvalidState(_) => "invalid_state",
                E::StepUnderflow { .. } => "step_underflow",
                E::IntegrationFailure { .. } => "integration_failure",
                E::FitFailure(_) => "fit_failure",
                E::Degeneracy(_) => "degeneracy",
                E::Saturation { .. } => "saturation",
                E::Heisenberg { .. } => "heisenberg",
            },
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport {
            error: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

#[derive(Serialize)]
pub struct ErrorReport {
    pub error: &'static str,
    pub message: String,
    pub exit_code: i32,
    pub version: &'static str,
}
