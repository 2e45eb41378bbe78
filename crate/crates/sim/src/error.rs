use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] cpsl_core::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

pub type SimResult<T> = Result<T, SimError>;

impl SimError {
    /// Process exit code: 2 configuration or validation, 3 infeasible
    /// instance, 4 enumeration guard, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use cpsl_core::Error as E;
        match self {
            SimError::Config(_) => 2,
            SimError::Core(E::Validation(_) | E::Domain(_) | E::Shape(_)) => 2,
            SimError::Core(E::Infeasible(_)) => 3,
            SimError::Core(E::GuardExceeded { .. }) => 4,
            _ => 1,
        }
    }
}
