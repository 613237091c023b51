//! Simulated LSM tree of processing elements.
//!
//! Spatially batched input enters at the root. Each non-leaf element buffers
//! rows until it reaches capacity, then compacts: buffered tables are
//! concatenated, split on the next `b` ID bits, serialized as envelopes, and
//! forwarded to the matching children. Leaves keep rows as runs sorted by
//! `(id, time)`, so a drained tree answers per-particle time-window queries
//! from a handful of sorted runs.
//!
//! Routing consumes b-bit groups from the low end of the ID: the element at
//! `(level l, index i)` holds exactly the rows whose ID bits `[0, b*l)`
//! equal `i`, and its child `c` takes rows whose bits `[b*l, b*(l+1))` equal
//! `c`. A leaf's index therefore equals `id & (2^(b*depth) - 1)` for every
//! row it stores.
//!
//! Elements exchange data only as serialized envelopes, so every hop
//! exercises the wire round trip. The whole tree runs sequentially and
//! deterministically; element state is never shared.

use thiserror::Error;

use crate::codec::CodecId;
use crate::columnar::{concat, Bitmap, ColumnarError, DataType, Schema, Table};
use crate::wire::{self, Parallelism, WireError};

/// Runs per leaf before they are merged into one.
pub const RUN_MERGE_THRESHOLD: usize = 4;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid tree config: {0}")]
    BadConfig(String),
    #[error("batch schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("row with id {id} does not belong to element ({level}, {index})")]
    RoutingViolation { level: usize, index: usize, id: i64 },
    #[error(transparent)]
    Columnar(#[from] ColumnarError),
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// Shape and transport parameters of the tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeConfig {
    /// ID bits consumed per level; fan-out is `2^bits_per_level`.
    pub bits_per_level: u8,
    /// Number of routing levels; leaves sit at level `depth`.
    pub depth: usize,
    /// Max buffered rows per element before compaction fires.
    pub capacity: usize,
    /// Codec for inter-element envelopes.
    pub codec: CodecId,
}

impl TreeConfig {
    fn validate(&self) -> Result<(), FlowError> {
        if !(1..=4).contains(&self.bits_per_level) {
            return Err(FlowError::BadConfig(format!(
                "bits_per_level must lie in [1, 4], got {}",
                self.bits_per_level
            )));
        }
        if self.depth == 0 {
            return Err(FlowError::BadConfig("depth must be at least 1".into()));
        }
        if self.bits_per_level as usize * self.depth > 24 {
            return Err(FlowError::BadConfig(
                "bits_per_level * depth must not exceed 24".into(),
            ));
        }
        if self.capacity == 0 {
            return Err(FlowError::BadConfig("capacity must be at least 1".into()));
        }
        Ok(())
    }
}

/// Transport and storage counters, reported by the workbench as CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowMetrics {
    /// Serialized envelope bytes sent from each non-leaf level.
    pub bytes_forwarded_per_level: Vec<u64>,
    pub compactions: u64,
    pub rows_per_leaf: Vec<u64>,
}

#[derive(Default)]
struct Element {
    buffered: Vec<Table>,
    buffered_rows: usize,
    /// Sorted runs; leaves only.
    store: Vec<Table>,
}

/// The tree: `levels[l]` holds `2^(b*l)` elements, leaves at `levels[depth]`.
pub struct LsmTree {
    config: TreeConfig,
    levels: Vec<Vec<Element>>,
    schema: Option<Schema>,
    ingested: u64,
    bytes_forwarded: Vec<u64>,
    compactions: u64,
}

impl LsmTree {
    pub fn new(config: TreeConfig) -> Result<Self, FlowError> {
        config.validate()?;
        let levels = (0..=config.depth)
            .map(|level| {
                let count = 1usize << (config.bits_per_level as usize * level);
                (0..count).map(|_| Element::default()).collect()
            })
            .collect();
        let bytes_forwarded = vec![0; config.depth];
        Ok(LsmTree {
            config,
            levels,
            schema: None,
            ingested: 0,
            bytes_forwarded,
            compactions: 0,
        })
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn leaf_count(&self) -> usize {
        self.levels[self.config.depth].len()
    }

    pub fn ingested_rows(&self) -> u64 {
        self.ingested
    }

    pub fn buffered_rows(&self, level: usize, index: usize) -> usize {
        self.levels[level][index].buffered_rows
    }

    pub fn leaf_run_count(&self, leaf: usize) -> usize {
        self.levels[self.config.depth][leaf].store.len()
    }

    pub fn leaf_rows(&self, leaf: usize) -> u64 {
        self.levels[self.config.depth][leaf]
            .store
            .iter()
            .map(|t| t.nrows() as u64)
            .sum()
    }

    /// The sorted runs a leaf currently holds.
    pub fn leaf_store(&self, leaf: usize) -> &[Table] {
        &self.levels[self.config.depth][leaf].store
    }

    pub fn metrics(&self) -> FlowMetrics {
        FlowMetrics {
            bytes_forwarded_per_level: self.bytes_forwarded.clone(),
            compactions: self.compactions,
            rows_per_leaf: (0..self.leaf_count()).map(|i| self.leaf_rows(i)).collect(),
        }
    }

    fn check_batch(&self, batch: &Table) -> Result<(), FlowError> {
        for name in ["id", "time"] {
            let col = batch
                .column_by_name(name)
                .ok_or_else(|| FlowError::SchemaMismatch(format!("missing Int64 field `{name}`")))?;
            if col.dtype() != DataType::Int64 {
                return Err(FlowError::SchemaMismatch(format!(
                    "field `{name}` must be Int64, got {}",
                    col.dtype()
                )));
            }
            if col.null_count() > 0 {
                return Err(FlowError::SchemaMismatch(format!(
                    "field `{name}` must not contain nulls"
                )));
            }
        }
        if let Some(schema) = &self.schema {
            if schema != batch.schema() {
                return Err(FlowError::SchemaMismatch(
                    "batch schema differs from the first ingested batch".into(),
                ));
            }
        }
        Ok(())
    }

    /// Feeds one spatial batch into the root element.
    pub fn ingest(&mut self, batch: &Table) -> Result<(), FlowError> {
        self.check_batch(batch)?;
        if batch.nrows() == 0 {
            return Ok(());
        }
        if self.schema.is_none() {
            self.schema = Some(batch.schema().clone());
        }
        self.ingested += batch.nrows() as u64;
        self.deliver(0, 0, batch.clone())
    }

    /// Buffers a table at an element; compacts when capacity is reached.
    fn deliver(&mut self, level: usize, index: usize, table: Table) -> Result<(), FlowError> {
        if level == self.config.depth {
            return self.leaf_absorb(index, &table);
        }
        let element = &mut self.levels[level][index];
        element.buffered_rows += table.nrows();
        element.buffered.push(table);
        if element.buffered_rows >= self.config.capacity {
            let messages = self.compact(level, index)?;
            self.forward(level, index, messages)?;
        }
        Ok(())
    }

    fn forward(
        &mut self,
        level: usize,
        parent: usize,
        messages: Vec<(usize, Vec<u8>)>,
    ) -> Result<(), FlowError> {
        // a child's flat index keeps the parent's low bits
        let shift = self.config.bits_per_level as usize * level;
        for (child, envelope) in messages {
            let table = wire::deserialize(&envelope)?;
            self.deliver(level + 1, parent + (child << shift), table)?;
        }
        Ok(())
    }

    /// Flushes a non-leaf element: concatenates its buffer, splits on ID bits
    /// `[b*level, b*(level+1))`, and returns one envelope per non-empty
    /// partition as `(child index, bytes)`.
    pub fn compact(&mut self, level: usize, index: usize) -> Result<Vec<(usize, Vec<u8>)>, FlowError> {
        assert!(level < self.config.depth, "leaves do not compact");
        let element = &mut self.levels[level][index];
        if element.buffered.is_empty() {
            return Ok(Vec::new());
        }
        let buffered = std::mem::take(&mut element.buffered);
        element.buffered_rows = 0;
        let merged = concat(&buffered)?;

        let bits = self.config.bits_per_level;
        let shift = bits as usize * level;
        let fanout = 1usize << bits;
        let mask = (fanout - 1) as u64;
        let ids: Vec<i64> = merged
            .column_by_name("id")
            .and_then(|c| c.i64_values())
            .expect("checked at ingest")
            .to_vec();

        let mut messages = Vec::new();
        for child in 0..fanout {
            let mut mask_bits = Bitmap::all_clear(merged.nrows());
            for (row, &id) in ids.iter().enumerate() {
                if ((id as u64) >> shift) & mask == child as u64 {
                    mask_bits.set(row, true);
                }
            }
            let part = merged.select(&mask_bits)?;
            if part.nrows() == 0 {
                continue;
            }
            let envelope = wire::serialize(&part, self.config.codec, Parallelism::Fixed(1))?;
            self.bytes_forwarded[level] += envelope.len() as u64;
            messages.push((child, envelope));
        }
        self.compactions += 1;
        Ok(messages)
    }

    /// Stores a batch at a leaf as a new sorted run; merges runs once more
    /// than [`RUN_MERGE_THRESHOLD`] accumulate.
    pub fn leaf_absorb(&mut self, leaf: usize, batch: &Table) -> Result<(), FlowError> {
        self.check_batch(batch)?;
        let bits_total = self.config.bits_per_level as usize * self.config.depth;
        let mask = (1u64 << bits_total) - 1;
        let ids = batch
            .column_by_name("id")
            .and_then(|c| c.i64_values())
            .expect("checked above");
        for &id in ids {
            if (id as u64) & mask != leaf as u64 {
                return Err(FlowError::RoutingViolation {
                    level: self.config.depth,
                    index: leaf,
                    id,
                });
            }
        }
        let run = batch.sort_by(&["id", "time"])?;
        let element = &mut self.levels[self.config.depth][leaf];
        element.store.push(run);
        if element.store.len() > RUN_MERGE_THRESHOLD {
            let merged = concat(&element.store)?.sort_by(&["id", "time"])?;
            element.store = vec![merged];
        }
        Ok(())
    }

    /// Forces a full compaction cascade so every buffered row reaches its
    /// leaf.
    pub fn drain(&mut self) -> Result<(), FlowError> {
        for level in 0..self.config.depth {
            for index in 0..self.levels[level].len() {
                if self.levels[level][index].buffered_rows > 0 {
                    let messages = self.compact(level, index)?;
                    self.forward(level, index, messages)?;
                }
            }
        }
        Ok(())
    }

    /// All rows with the given id and `time in [t0, t1]`, sorted by time
    /// ascending. Drains the tree first.
    pub fn query_track(&mut self, id: i64, t0: i64, t1: i64) -> Result<Table, FlowError> {
        self.drain()?;
        let schema = match &self.schema {
            Some(s) => s.clone(),
            None => return Err(FlowError::SchemaMismatch("nothing ingested yet".into())),
        };
        let bits_total = self.config.bits_per_level as usize * self.config.depth;
        let leaf = ((id as u64) & ((1u64 << bits_total) - 1)) as usize;
        let store = &self.levels[self.config.depth][leaf].store;
        if store.is_empty() {
            return Ok(Table::empty(schema));
        }
        let all = concat(store)?;
        let ids = all.column_by_name("id").and_then(|c| c.i64_values()).unwrap();
        let times = all
            .column_by_name("time")
            .and_then(|c| c.i64_values())
            .unwrap();
        let mut mask = Bitmap::all_clear(all.nrows());
        for row in 0..all.nrows() {
            if ids[row] == id && (t0..=t1).contains(&times[row]) {
                mask.set(row, true);
            }
        }
        Ok(all.select(&mask)?.sort_by(&["time"])?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::{Column, Field};

    fn batch(ids: Vec<i64>, times: Vec<i64>) -> Table {
        let tags: Vec<i64> = (0..ids.len() as i64).collect();
        Table::new(
            Schema::new(vec![
                Field::new("id", DataType::Int64, false),
                Field::new("time", DataType::Int64, false),
                Field::new("tag", DataType::Int64, false),
            ])
            .unwrap(),
            vec![Column::int64(ids), Column::int64(times), Column::int64(tags)],
        )
        .unwrap()
    }

    fn tree(bits: u8, depth: usize, capacity: usize) -> LsmTree {
        LsmTree::new(TreeConfig {
            bits_per_level: bits,
            depth,
            capacity,
            codec: CodecId::Zstd,
        })
        .unwrap()
    }

    #[test]
    fn buffers_until_capacity() {
        let mut t = tree(1, 1, 100);
        t.ingest(&batch((0..99).collect(), vec![0; 99])).unwrap();
        assert_eq!(t.buffered_rows(0, 0), 99);
        assert_eq!(t.metrics().compactions, 0);

        t.ingest(&batch(vec![99], vec![0])).unwrap();
        assert_eq!(t.buffered_rows(0, 0), 0);
        assert_eq!(t.metrics().compactions, 1);

        // empty batch changes nothing
        t.ingest(&batch(vec![], vec![])).unwrap();
        assert_eq!(t.buffered_rows(0, 0), 0);
        assert_eq!(t.ingested_rows(), 100);
    }

    #[test]
    fn compaction_routes_by_low_bits() {
        let mut t = tree(1, 1, 4);
        t.ingest(&batch(vec![0, 1, 2, 3], vec![0, 0, 0, 0])).unwrap();
        assert_eq!(t.leaf_rows(0), 2); // ids 0, 2
        assert_eq!(t.leaf_rows(1), 2); // ids 1, 3
        let even = t.leaf_store(0)[0].column(0).i64_values().unwrap().to_vec();
        assert_eq!(even, vec![0, 2]);
    }

    #[test]
    fn single_destination_when_bits_agree() {
        let mut t = tree(1, 1, 4);
        t.ingest(&batch(vec![0, 2, 4, 6], vec![0, 0, 0, 0])).unwrap();
        assert_eq!(t.leaf_rows(0), 4);
        assert_eq!(t.leaf_rows(1), 0);
        assert_eq!(t.metrics().bytes_forwarded_per_level.len(), 1);
        assert!(t.metrics().bytes_forwarded_per_level[0] > 0);
    }

    #[test]
    fn two_level_routing_reaches_leaf_three() {
        let mut t = tree(1, 2, 1);
        t.ingest(&batch(vec![3], vec![7])).unwrap();
        t.drain().unwrap();
        assert_eq!(t.leaf_rows(3), 1);
        assert_eq!(t.leaf_rows(0) + t.leaf_rows(1) + t.leaf_rows(2), 0);
    }

    #[test]
    fn leaf_runs_merge_past_threshold() {
        let mut t = tree(1, 1, 1);
        for i in 0..4 {
            t.leaf_absorb(0, &batch(vec![0, 2], vec![i, i + 10])).unwrap();
        }
        assert_eq!(t.leaf_run_count(0), 4);
        t.leaf_absorb(0, &batch(vec![0], vec![99])).unwrap();
        assert_eq!(t.leaf_run_count(0), 1);
        assert_eq!(t.leaf_rows(0), 9);
        let run = &t.leaf_store(0)[0];
        let ids = run.column(0).i64_values().unwrap();
        let times = run.column(1).i64_values().unwrap();
        let mut pairs: Vec<(i64, i64)> = ids.iter().zip(times).map(|(&a, &b)| (a, b)).collect();
        let sorted = {
            let mut p = pairs.clone();
            p.sort();
            p
        };
        assert_eq!(pairs.len(), 9);
        pairs.sort();
        assert_eq!(pairs, sorted);
    }

    #[test]
    fn leaf_rejects_foreign_ids() {
        let mut t = tree(1, 2, 10);
        let err = t.leaf_absorb(3, &batch(vec![2], vec![0])).unwrap_err();
        assert!(matches!(err, FlowError::RoutingViolation { id: 2, .. }));
    }

    #[test]
    fn schema_is_enforced() {
        let mut t = tree(1, 1, 10);
        let no_time = Table::new(
            Schema::new(vec![Field::new("id", DataType::Int64, false)]).unwrap(),
            vec![Column::int64(vec![1])],
        )
        .unwrap();
        assert!(matches!(
            t.ingest(&no_time),
            Err(FlowError::SchemaMismatch(_))
        ));

        t.ingest(&batch(vec![1], vec![1])).unwrap();
        let other = Table::new(
            Schema::new(vec![
                Field::new("id", DataType::Int64, false),
                Field::new("time", DataType::Int64, false),
            ])
            .unwrap(),
            vec![Column::int64(vec![1]), Column::int64(vec![1])],
        )
        .unwrap();
        assert!(matches!(
            t.ingest(&other),
            Err(FlowError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn query_track_examples() {
        let mut t = tree(1, 2, 2);
        t.ingest(&batch(vec![5, 5, 5], vec![3, 1, 2])).unwrap();
        let hits = t.query_track(5, 0, 10).unwrap();
        assert_eq!(hits.column_by_name("time").unwrap().i64_values().unwrap(), &[1, 2, 3]);

        let misses = t.query_track(1234, 0, 10).unwrap();
        assert_eq!(misses.nrows(), 0);

        let windowed = t.query_track(5, 2, 3).unwrap();
        assert_eq!(
            windowed.column_by_name("time").unwrap().i64_values().unwrap(),
            &[2, 3]
        );
    }

    #[test]
    fn conservation_and_query_oracle_small() {
        let mut t = tree(2, 2, 64);
        let mut all = Vec::new();
        let mut state = 99u64;
        for _ in 0..40 {
            let ids: Vec<i64> = (0..37)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                    ((state >> 16) % 50) as i64
                })
                .collect();
            let times: Vec<i64> = (0..37)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                    ((state >> 16) % 1000) as i64
                })
                .collect();
            let b = batch(ids, times);
            all.push(b.clone());
            t.ingest(&b).unwrap();
        }
        t.drain().unwrap();

        let total: u64 = (0..t.leaf_count()).map(|i| t.leaf_rows(i)).sum();
        assert_eq!(total, t.ingested_rows());
        assert_eq!(total, 40 * 37);

        let everything = concat(&all).unwrap();
        for id in 0..50i64 {
            let got = t.query_track(id, 100, 800).unwrap();
            // brute-force filter + stable sort over the retained input copy
            let ids = everything.column_by_name("id").unwrap().i64_values().unwrap();
            let times = everything
                .column_by_name("time")
                .unwrap()
                .i64_values()
                .unwrap();
            let mut mask = Bitmap::all_clear(everything.nrows());
            for row in 0..everything.nrows() {
                if ids[row] == id && (100..=800).contains(&times[row]) {
                    mask.set(row, true);
                }
            }
            let expect = everything.select(&mask).unwrap().sort_by(&["time"]).unwrap();
            assert_eq!(got, expect, "id {id}");
        }
    }
}
