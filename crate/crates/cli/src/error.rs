use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} failed{}: {source}", seed.map(|s| format!(" for seed {s}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        seed: Option<u64>,
        #[source]
        source: kstep::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: schema mismatch at column `{column}`")]
    Schema { file: PathBuf, column: String },
    #[error("oracle check failed: {0}")]
    OracleFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Schema { .. } => 2,
            CliError::Stage { .. } | CliError::Io { .. } => 3,
            CliError::OracleFailed(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Tags core errors with the stage (and seed) that produced them.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str, seed: Option<u64>) -> CliResult<T>;
}

impl<T> StageContext<T> for kstep::Result<T> {
    fn stage(self, stage: &'static str, seed: Option<u64>) -> CliResult<T> {
        self.map_err(|source| CliError::Stage { stage, seed, source })
    }
}
