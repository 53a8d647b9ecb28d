use thiserror::Error;

/// Failures grouped by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid configuration: {0}")]
    Validation(#[source] blindfield::Error),
    #[error("computation failed: {0}")]
    Compute(#[source] blindfield::Error),
    #[error("{n} of {total} trajectories diverged (pass --allow-divergence to accept)")]
    Diverged { n: usize, total: usize },
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Validation(_) => 3,
            Self::Compute(_) | Self::Diverged { .. } | Self::Output(_) => 4,
        }
    }
}

pub trait Validate<T> {
    /// Tags a core error as a validation failure.
    fn invalid(self) -> Result<T, CliError>;
    /// Tags a core error as a failure during computation.
    fn compute(self) -> Result<T, CliError>;
}

impl<T> Validate<T> for blindfield::Result<T> {
    fn invalid(self) -> Result<T, CliError> {
        self.map_err(CliError::Validation)
    }

    fn compute(self) -> Result<T, CliError> {
        self.map_err(CliError::Compute)
    }
}
