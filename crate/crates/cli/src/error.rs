use serde_json::{json, Value};

/// Exit code when every check passes.
pub const EXIT_OK: i32 = 0;
/// Exit code when the run completed but at least one check failed.
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{experiment}: missing required key `{key}`")]
    Missing { experiment: String, key: String },
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("config: {message}")]
    Config { key: Option<String>, message: String },
    #[error(transparent)]
    Core(#[from] kppwave_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

macro_rules! from_core {
    ($($ty:path),*) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Core(e.into())
            }
        })*
    };
}
from_core!(
    kppwave_core::env::EnvError,
    kppwave_core::spectral::SpectralError,
    kppwave_core::fkpp::FkppError,
    kppwave_core::bbmpe::SimError,
    kppwave_core::diffusion::DiffusionError
);

impl CliError {
    fn is_validation(&self) -> bool {
        use kppwave_core::Error as E;
        match self {
            CliError::Missing { .. } | CliError::Invalid { .. } | CliError::Config { .. } => true,
            CliError::Core(e) => matches!(
                e,
                E::Env(_)
                    | E::Fkpp(kppwave_core::fkpp::FkppError::Config(_))
                    | E::Sim(kppwave_core::bbmpe::SimError::Config(_))
                    | E::Diffusion(kppwave_core::diffusion::DiffusionError::Config(_))
                    | E::Spectral(kppwave_core::spectral::SpectralError::BelowMinimalSpeed { .. })
            ),
            _ => false,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            EXIT_VALIDATION
        } else {
            EXIT_NUMERIC
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> Value {
        let kind = if self.is_validation() { "validation" } else { "numeric" };
        let key = match self {
            CliError::Missing { key, .. } | CliError::Invalid { key, .. } => Some(key.clone()),
            CliError::Config { key, .. } => key.clone(),
            _ => None,
        };
        json!({ "error": kind, "key": key, "message": self.to_string(), "exit_code": self.exit_code() })
    }
}
