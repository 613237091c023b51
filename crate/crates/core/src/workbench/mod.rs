//! Synthetic dataset generators, CSV ingestion, and the benchmark harness
//! behind the `pflow` CLI.

mod csvio;
mod experiments;
mod gen;

pub use csvio::{read_csv, read_csv_from, write_csv};
pub use experiments::{
    cap_rows, run_experiment, BenchConfig, ExperimentReport, FlowParams, ReportRow,
    EXPERIMENT_NAMES,
};
pub use gen::{gen_dataset, DatasetKind, GenProfile};

use std::path::PathBuf;

use thiserror::Error;

use crate::chunkpipe::ChunkError;
use crate::columnar::ColumnarError;
use crate::flowsim::FlowError;
use crate::partition::PartitionError;
use crate::wire::WireError;

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("CSV header {actual:?} does not match schema fields {expected:?}")]
    HeaderMismatch {
        expected: Vec<String>,
        actual: Vec<String>,
    },
    #[error("row {row}, column `{column}`: cannot parse {value:?}")]
    ParseError {
        row: usize,
        column: String,
        value: String,
    },
    #[error("unknown experiment `{0}` (see `pflow bench --help` for the list)")]
    UnknownExperiment(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Columnar(#[from] ColumnarError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}
