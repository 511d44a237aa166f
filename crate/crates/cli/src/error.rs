use serde_json::{json, Value};

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] qmep::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Config(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }

    /// 2 for usage and configuration errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        use qmep::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Json(_) => "json",
            CliError::Failed(_) => "failed",
            CliError::Core(e) => match e {
                E::CapExceeded { .. } => "cap_exceeded",
                E::NotUnital { .. } => "not_unital",
                E::NotInvariant { .. } => "not_invariant",
                E::NotPositive { .. } => "not_positive",
                E::NonUniqueInvariantState { .. } => "non_unique_invariant_state",
                E::DimensionMismatch { .. } => "dimension_mismatch",
                E::EigenFailure(_) => "eigen_failure",
                E::UncertifiedCurve => "uncertified_curve",
                E::Format(_) | E::Json(_) | E::Csv(_) | E::Io(_) => "format",
                _ => "numerical",
            },
        }
    }

    pub fn diagnostic(&self) -> Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        if let CliError::Core(qmep::Error::CapExceeded { required, cap }) = self {
            v["required"] = json!(required.to_string());
            v["cap"] = json!(cap);
        }
        v
    }
}
