//! Raster stacks, the fire catalog and the synthetic fire generator.

mod catalog;
mod stack;
mod synth;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use catalog::{parse_catalog, read_catalog, write_catalog, FireRecord, YearMonth, HEADER as CATALOG_HEADER, MIN_ACRES};
pub use stack::{
    read_stack, write_stack, RasterStack, DEFAULT_CHANNELS, EVI, FIREMASK, INDEX_RANGE, LST, NDVI, PRECIP, QA,
};
pub use synth::{month_of, synth_generate, SynthConfig, SynthFire, SynthTruth, K_RANGE, MONTHS, REF_AMPLITUDE, REF_MEAN, UNBURNED};

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed raster: {0}")]
    Format(String),
    #[error("truncated raster: need {expected} bytes, have {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("unsupported raster version {0}")]
    Version(u32),
    #[error("{0}")]
    Invalid(String),
    #[error("missing channel {0}")]
    MissingChannel(String),
    #[error("catalog line {line}: {message}")]
    Catalog { line: usize, message: String },
}

impl RasterError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Self::Io { .. })
    }
}
