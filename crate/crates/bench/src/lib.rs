//! Shared fixtures for the criterion benches.

use pflow_core::workbench::{gen_dataset, DatasetKind, GenProfile};
use pflow_core::Table;

pub const BENCH_ROWS: usize = 100_000;
pub const BENCH_SEED: u64 = 42;

pub fn dataset(kind: DatasetKind) -> Table {
    gen_dataset(&GenProfile {
        kind,
        rows: BENCH_ROWS,
        seed: BENCH_SEED,
    })
}
