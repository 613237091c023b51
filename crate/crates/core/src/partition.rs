//! Bit-split partitioning: route each row to one of `2^b` output tables by
//! the low `b` bits of its particle ID.
//!
//! [`split`] is the multistep algorithm: one select pass per partition. It is
//! O(k·n) but matches the low-fanout routing this engine needs.
//! [`scatter_oracle`] builds the same result in a single row-wise pass over
//! an entirely different code path; the two must agree exactly, which the
//! tests and the acceptance suite verify on randomized inputs.
//!
//! Negative IDs are masked on their two's-complement bit pattern, so id -1
//! lands in the all-ones bucket. Skewed ID spaces can be rebalanced by
//! hashing the ID through the splitmix64 finalizer before masking.

use thiserror::Error;

use crate::codec::CodecId;
use crate::columnar::{Bitmap, ColumnarError, DataType, Table, TableBuilder};
use crate::ioutil::splitmix64_mix;
use crate::wire::{self, Parallelism, WireError};

pub const MIN_BITS: u8 = 1;
pub const MAX_BITS: u8 = 4;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("partition bits must lie in [{MIN_BITS}, {MAX_BITS}], got {0}")]
    BadBits(u8),
    #[error("unknown ID field `{0}`")]
    UnknownField(String),
    #[error("ID field `{field}` is {actual}, expected int64")]
    WrongIdType { field: String, actual: DataType },
    #[error("null particle ID at row {row}")]
    NullId { row: usize },
    #[error("skew is undefined for all-zero counts")]
    EmptyInput,
    #[error(transparent)]
    Columnar(#[from] ColumnarError),
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// What to do with rows whose ID is null.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NullPolicy {
    #[default]
    Reject,
    RouteToZero,
}

/// How a table is split: which Int64 field carries the particle ID, how many
/// low bits to use (k = 2^bits partitions), and whether to hash first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSpec {
    pub id_field: String,
    pub bits: u8,
    pub hash_ids: bool,
    pub null_policy: NullPolicy,
}

impl PartitionSpec {
    pub fn new(id_field: impl Into<String>, bits: u8) -> Result<Self, PartitionError> {
        if !(MIN_BITS..=MAX_BITS).contains(&bits) {
            return Err(PartitionError::BadBits(bits));
        }
        Ok(PartitionSpec {
            id_field: id_field.into(),
            bits,
            hash_ids: false,
            null_policy: NullPolicy::Reject,
        })
    }

    pub fn with_hash(mut self, hash_ids: bool) -> Self {
        self.hash_ids = hash_ids;
        self
    }

    pub fn with_null_policy(mut self, policy: NullPolicy) -> Self {
        self.null_policy = policy;
        self
    }

    /// Partition count `k = 2^bits`.
    pub fn partitions(&self) -> usize {
        1 << self.bits
    }
}

/// Partition index of one ID: the low `bits` bits of the two's-complement
/// bit pattern, optionally mixed through the splitmix64 finalizer first.
pub fn partition_index(id: i64, bits: u8, hash_ids: bool) -> usize {
    debug_assert!((MIN_BITS..=MAX_BITS).contains(&bits));
    let pattern = if hash_ids {
        splitmix64_mix(id as u64)
    } else {
        id as u64
    };
    (pattern & ((1u64 << bits) - 1)) as usize
}

/// The `k = 2^bits` output tables of a split plus per-partition row counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSet {
    pub spec: PartitionSpec,
    pub parts: Vec<Table>,
    pub counts: Vec<usize>,
    pub serialized_sizes: Option<Vec<usize>>,
}

impl PartitionSet {
    /// Serializes each partition with `codec` and records the byte sizes.
    pub fn compute_serialized_sizes(
        &mut self,
        codec: CodecId,
        parallelism: Parallelism,
    ) -> Result<&[usize], PartitionError> {
        let mut sizes = Vec::with_capacity(self.parts.len());
        for part in &self.parts {
            sizes.push(wire::serialize(part, codec, parallelism)?.len());
        }
        self.serialized_sizes = Some(sizes);
        Ok(self.serialized_sizes.as_deref().unwrap())
    }
}

/// Resolves the ID column and routes every row; `None` marks a null ID.
fn route_rows(table: &Table, spec: &PartitionSpec) -> Result<Vec<Option<usize>>, PartitionError> {
    if !(MIN_BITS..=MAX_BITS).contains(&spec.bits) {
        return Err(PartitionError::BadBits(spec.bits));
    }
    let idx = table
        .schema()
        .index_of(&spec.id_field)
        .ok_or_else(|| PartitionError::UnknownField(spec.id_field.clone()))?;
    let col = table.column(idx);
    let ids = col.i64_values().ok_or_else(|| PartitionError::WrongIdType {
        field: spec.id_field.clone(),
        actual: col.dtype(),
    })?;
    let mut routes = Vec::with_capacity(table.nrows());
    for (row, &id) in ids.iter().enumerate() {
        if col.is_valid(row) {
            routes.push(Some(partition_index(id, spec.bits, spec.hash_ids)));
        } else {
            match spec.null_policy {
                NullPolicy::Reject => return Err(PartitionError::NullId { row }),
                NullPolicy::RouteToZero => routes.push(None),
            }
        }
    }
    Ok(routes)
}

/// Multistep split: one select pass per partition, each over the full input.
pub fn split(table: &Table, spec: &PartitionSpec) -> Result<PartitionSet, PartitionError> {
    let routes = route_rows(table, spec)?;
    let k = spec.partitions();
    let mut parts = Vec::with_capacity(k);
    for j in 0..k {
        let mut mask = Bitmap::all_clear(table.nrows());
        for (row, route) in routes.iter().enumerate() {
            if route.unwrap_or(0) == j {
                mask.set(row, true);
            }
        }
        parts.push(table.select(&mask)?);
    }
    let counts = parts.iter().map(|p| p.nrows()).collect();
    Ok(PartitionSet {
        spec: spec.clone(),
        parts,
        counts,
        serialized_sizes: None,
    })
}

/// Single-pass scatter: appends each row to its partition's builder. Exists
/// as an independent implementation for equivalence testing against
/// [`split`].
pub fn scatter_oracle(table: &Table, spec: &PartitionSpec) -> Result<PartitionSet, PartitionError> {
    let routes = route_rows(table, spec)?;
    let k = spec.partitions();
    let mut builders: Vec<TableBuilder> = (0..k)
        .map(|_| TableBuilder::new(table.schema().clone()))
        .collect();
    for (row, route) in routes.iter().enumerate() {
        builders[route.unwrap_or(0)].append_row(table, row);
    }
    let parts: Vec<Table> = builders
        .into_iter()
        .map(|b| b.finish())
        .collect::<Result<_, _>>()?;
    let counts = parts.iter().map(|p| p.nrows()).collect();
    Ok(PartitionSet {
        spec: spec.clone(),
        parts,
        counts,
        serialized_sizes: None,
    })
}

/// Imbalance ratio: `max(counts) * k / sum(counts)`; 1.0 is perfectly
/// balanced, `k` is worst.
pub fn skew(counts: &[usize]) -> Result<f64, PartitionError> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(PartitionError::EmptyInput);
    }
    let max = *counts.iter().max().unwrap();
    Ok(max as f64 * counts.len() as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::columnar::{Column, Field, Schema};
    use crate::testgen::{arb_table, row_multiset};

    fn id_table(ids: Vec<i64>) -> Table {
        Table::new(
            Schema::new(vec![
                Field::new("id", DataType::Int64, false),
                Field::new("tag", DataType::Int64, false),
            ])
            .unwrap(),
            vec![
                Column::int64(ids.clone()),
                Column::int64((0..ids.len() as i64).collect()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn index_examples() {
        assert_eq!(partition_index(13, 2, false), 1);
        assert_eq!(partition_index(8, 3, false), 0);
        assert_eq!(partition_index(-1, 3, false), 7);
    }

    #[test]
    fn split_examples() {
        let set = split(&id_table(vec![0, 1, 2, 3]), &PartitionSpec::new("id", 1).unwrap())
            .unwrap();
        assert_eq!(set.counts, vec![2, 2]);
        assert_eq!(set.parts[0].column(0).i64_values().unwrap(), &[0, 2]);
        assert_eq!(set.parts[1].column(0).i64_values().unwrap(), &[1, 3]);

        let set = split(&id_table((0..8).collect()), &PartitionSpec::new("id", 2).unwrap())
            .unwrap();
        assert_eq!(set.counts, vec![2, 2, 2, 2]);
    }

    #[test]
    fn split_errors() {
        let t = id_table(vec![1, 2]);
        assert!(matches!(
            split(&t, &PartitionSpec::new("nope", 1).unwrap()),
            Err(PartitionError::UnknownField(_))
        ));
        assert!(matches!(PartitionSpec::new("id", 0), Err(PartitionError::BadBits(0))));
        assert!(matches!(PartitionSpec::new("id", 5), Err(PartitionError::BadBits(5))));

        let floats = Table::new(
            Schema::new(vec![Field::new("id", DataType::Float64, false)]).unwrap(),
            vec![Column::float64(vec![1.0])],
        )
        .unwrap();
        assert!(matches!(
            split(&floats, &PartitionSpec::new("id", 1).unwrap()),
            Err(PartitionError::WrongIdType { .. })
        ));
    }

    #[test]
    fn null_policy_behaviour() {
        let t = Table::new(
            Schema::new(vec![Field::new("id", DataType::Int64, true)]).unwrap(),
            vec![Column::int64_opt(vec![Some(1), None, Some(3)])],
        )
        .unwrap();
        assert!(matches!(
            split(&t, &PartitionSpec::new("id", 1).unwrap()),
            Err(PartitionError::NullId { row: 1 })
        ));
        let spec = PartitionSpec::new("id", 1)
            .unwrap()
            .with_null_policy(NullPolicy::RouteToZero);
        let set = split(&t, &spec).unwrap();
        assert_eq!(set.counts, vec![1, 2]);
        assert_eq!(scatter_oracle(&t, &spec).unwrap(), set);
    }

    #[test]
    fn scatter_matches_split_on_degenerate_inputs() {
        let spec = PartitionSpec::new("id", 2).unwrap();
        let empty = id_table(vec![]);
        let a = split(&empty, &spec).unwrap();
        let b = scatter_oracle(&empty, &spec).unwrap();
        assert_eq!(a, b);
        assert!(a.parts.iter().all(|p| p.nrows() == 0));

        let same = id_table(vec![5; 32]);
        let a = split(&same, &spec).unwrap();
        let b = scatter_oracle(&same, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.counts, vec![0, 32, 0, 0]);
    }

    #[test]
    fn skew_examples() {
        assert_eq!(skew(&[2, 2, 2, 2]).unwrap(), 1.0);
        assert_eq!(skew(&[4, 0, 0, 4]).unwrap(), 2.0);
        assert_eq!(skew(&[8, 0, 0, 0]).unwrap(), 4.0);
        assert!(matches!(skew(&[0, 0]), Err(PartitionError::EmptyInput)));
    }

    #[test]
    fn partitions_preserve_input_order() {
        let ids = vec![4, 1, 6, 3, 0, 5, 2, 7, 4, 1];
        let set = split(&id_table(ids), &PartitionSpec::new("id", 2).unwrap()).unwrap();
        for part in &set.parts {
            let tags = part.column(1).i64_values().unwrap();
            assert!(tags.windows(2).all(|w| w[0] < w[1]), "rows reordered");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn split_equals_scatter_and_conserves_rows(
            ids in prop::collection::vec(any::<i64>(), 0..300),
            bits in MIN_BITS..=MAX_BITS,
            hash in any::<bool>(),
        ) {
            let table = id_table(ids);
            let spec = PartitionSpec::new("id", bits).unwrap().with_hash(hash);
            let a = split(&table, &spec).unwrap();
            let b = scatter_oracle(&table, &spec).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.counts.iter().sum::<usize>(), table.nrows());
            let parts: Vec<&Table> = a.parts.iter().collect();
            prop_assert_eq!(row_multiset(&parts), row_multiset(&[&table]));
        }

        #[test]
        fn split_works_on_arbitrary_tables(table in arb_table(), bits in MIN_BITS..=MAX_BITS) {
            // splice an id column onto whatever schema arrives
            let mut fields = vec![Field::new("pid", DataType::Int64, false)];
            fields.extend(table.schema().fields().iter().cloned());
            let mut columns = vec![Column::int64(
                (0..table.nrows() as i64).map(|i| i.wrapping_mul(2654435761)).collect(),
            )];
            columns.extend(table.columns().iter().cloned());
            let table = Table::new(Schema::new(fields).unwrap(), columns).unwrap();

            let spec = PartitionSpec::new("pid", bits).unwrap();
            let a = split(&table, &spec).unwrap();
            let b = scatter_oracle(&table, &spec).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
