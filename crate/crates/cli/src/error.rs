use std::path::{Path, PathBuf};

use thiserror::Error;

use regrowth::raster::RasterError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("missing {}: run {stage} first", path.display())]
    Missing { path: PathBuf, stage: &'static str },
    #[error("{} exists; another stage is running in this directory (delete the file if it is stale)", .0.display())]
    Locked(PathBuf),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub fn invalid(message: impl std::fmt::Display) -> Self {
        Self::Validation(message.to_string())
    }

    /// 1 for validation problems, 2 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) | Self::Missing { .. } => 1,
            Self::Io { .. } | Self::Locked(_) => 2,
        }
    }
}

impl From<RasterError> for CliError {
    fn from(e: RasterError) -> Self {
        match e {
            RasterError::Io { path, source } => Self::Io { path, source },
            other => Self::Validation(other.to_string()),
        }
    }
}

macro_rules! validation_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::Validation(e.to_string())
            }
        })*
    };
}

validation_from!(
    regrowth::kv::KvError,
    regrowth::preprocess::PreprocessError,
    regrowth::pipeline::PipelineError,
    regrowth::convlstm::TrainError,
    regrowth::convlstm::RolloutError,
    regrowth::nn::NnError,
    regrowth::logistic::LogisticError,
    regrowth::cluster::ClusterError,
    regrowth::eval::EvalError,
    regrowth::tucker::TuckerError
);
