//! Data-flow engine for in-transit tabular particle data.
//!
//! The crate is organized around the journey a batch of particle rows takes
//! through an in-transit processing element:
//!
//! - [`columnar`]: immutable tables with a deterministic physical buffer
//!   layout, plus select/concat/sort primitives.
//! - [`codec`] and [`wire`]: the `.ptbl` envelope format with per-buffer
//!   ("inner") compression, one task per buffer.
//! - [`chunkpipe`]: the `.pchk` chunked container ("outer" compression): a
//!   worker pool compresses independent ≤64 KiB chunks under a bounded
//!   outstanding-data window, synchronously or through submit/poll tickets.
//! - [`partition`]: routing rows to `2^b` output tables by the low bits of
//!   their particle ID, with a single-pass scatter oracle for equivalence
//!   testing.
//! - [`flowsim`]: a simulated LSM tree of processing elements that turns
//!   spatially batched input into temporally ordered per-particle runs,
//!   exchanging envelopes between elements.
//! - [`workbench`]: seeded dataset generators, CSV ingestion, and the
//!   benchmark experiments behind the `pflow` CLI.

pub mod chunkpipe;
pub mod codec;
pub mod columnar;
pub mod flowsim;
mod ioutil;
pub mod partition;
pub mod wire;
pub mod workbench;

#[cfg(test)]
pub(crate) mod testgen;

pub use codec::CodecId;
pub use columnar::{Bitmap, Column, DataType, Field, Schema, Table};
