//! Command implementations behind the `maptopo` binary.
//!
//! Every command returns a typed report so tests can drive them without a
//! subprocess. Exit codes: 0 ok, 1 invalid input, 2 internal failure.

mod data;
mod evaluate;
mod gradcheck;
mod pairing;
mod train;

use std::path::{Path, PathBuf};

pub use data::{cmd_split, cmd_stitch, cmd_tile, SplitSummary, TileIndex, TILE_INDEX};
pub use evaluate::{
    ablation_tables, cmd_ablation, cmd_compare, cmd_metrics, AblationConfig, AblationVariant,
    CompareConfig, ModeSelection, ModelDir, ABLATION_HEADER, COMPARE_HEADER, METRICS_HEADER,
};
pub use gradcheck::{cmd_gradcheck, GradcheckReport};
pub use pairing::{pair_dirs, PairedFile};
pub use train::{cmd_ratio_sweep, cmd_train, SweepRow, TrainOptions, TrainSummary, SWEEP_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl From<maptopo_core::Error> for CliError {
    fn from(e: maptopo_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

impl From<maptopo_perception::Error> for CliError {
    fn from(e: maptopo_perception::Error) -> Self {
        match e {
            maptopo_perception::Error::Io(..) => CliError::Internal(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Internal(format!("csv: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Internal(format!("{}: {e}", path.display()))
}

/// Reads and parses a JSON config file; parse failures are validation errors.
pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Validation(format!("{}: not found", path.display())),
        _ => io_err(path, e),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Resolves `entry` against the directory holding `config`.
pub(crate) fn relative_to(config: &Path, entry: &Path) -> PathBuf {
    config.parent().unwrap_or(Path::new(".")).join(entry)
}

pub(crate) fn csv_writer(path: &Path) -> CliResult<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(Into::into)
}
