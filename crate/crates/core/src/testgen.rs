//! Shared proptest strategies and row-multiset helpers for unit tests.

use std::collections::HashMap;

use proptest::prelude::*;

use crate::columnar::{Cell, Column, DataType, Field, Schema, Table};

pub(crate) fn arb_dtype() -> impl Strategy<Value = DataType> {
    prop_oneof![
        Just(DataType::Int64),
        Just(DataType::Float64),
        Just(DataType::Utf8),
    ]
}

pub(crate) fn arb_schema(max_fields: usize) -> impl Strategy<Value = Schema> {
    prop::collection::vec((arb_dtype(), any::<bool>()), 1..=max_fields).prop_map(|specs| {
        let fields = specs
            .into_iter()
            .enumerate()
            .map(|(i, (dtype, nullable))| Field::new(format!("f{i}"), dtype, nullable))
            .collect();
        Schema::new(fields).unwrap()
    })
}

fn arb_string() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => "[a-zA-Z0-9 _-]{0,12}",
        1 => Just("héδ✓".to_string()),
    ]
}

pub(crate) fn arb_column(
    dtype: DataType,
    nullable: bool,
    rows: usize,
) -> BoxedStrategy<Column> {
    let n = rows..=rows;
    match (dtype, nullable) {
        (DataType::Int64, false) => prop::collection::vec(any::<i64>(), n)
            .prop_map(Column::int64)
            .boxed(),
        (DataType::Int64, true) => {
            prop::collection::vec(prop::option::weighted(0.9, any::<i64>()), n)
                .prop_map(Column::int64_opt)
                .boxed()
        }
        (DataType::Float64, false) => {
            prop::collection::vec(any::<u64>().prop_map(f64::from_bits), n)
                .prop_map(Column::float64)
                .boxed()
        }
        (DataType::Float64, true) => prop::collection::vec(
            prop::option::weighted(0.9, any::<u64>().prop_map(f64::from_bits)),
            n,
        )
        .prop_map(Column::float64_opt)
        .boxed(),
        (DataType::Utf8, false) => prop::collection::vec(arb_string(), n)
            .prop_map(|v| Column::utf8(&v))
            .boxed(),
        (DataType::Utf8, true) => {
            prop::collection::vec(prop::option::weighted(0.9, arb_string()), n)
                .prop_map(|v| Column::utf8_opt(&v))
                .boxed()
        }
    }
}

pub(crate) fn arb_table_sized(max_fields: usize, max_rows: usize) -> BoxedStrategy<Table> {
    (arb_schema(max_fields), 0..=max_rows)
        .prop_flat_map(|(schema, rows)| {
            let cols: Vec<BoxedStrategy<Column>> = schema
                .fields()
                .iter()
                .map(|f| arb_column(f.dtype, f.nullable, rows))
                .collect();
            (Just(schema), cols)
        })
        .prop_map(|(schema, columns)| Table::new(schema, columns).unwrap())
        .boxed()
}

pub(crate) fn arb_table() -> BoxedStrategy<Table> {
    arb_table_sized(6, 120)
}

/// Hashable owned cell for order-insensitive row comparisons. Floats compare
/// by bit pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) enum CellKey {
    Null,
    Int(i64),
    Float(u64),
    Str(String),
}

impl From<Cell<'_>> for CellKey {
    fn from(cell: Cell<'_>) -> Self {
        match cell {
            Cell::Null => CellKey::Null,
            Cell::Int(v) => CellKey::Int(v),
            Cell::Float(v) => CellKey::Float(v.to_bits()),
            Cell::Str(s) => CellKey::Str(s.to_string()),
        }
    }
}

pub(crate) fn row_key(table: &Table, row: usize) -> Vec<CellKey> {
    (0..table.schema().len())
        .map(|c| CellKey::from(table.cell(c, row)))
        .collect()
}

pub(crate) fn row_multiset(tables: &[&Table]) -> HashMap<Vec<CellKey>, usize> {
    let mut out = HashMap::new();
    for t in tables {
        for i in 0..t.nrows() {
            *out.entry(row_key(t, i)).or_insert(0) += 1;
        }
    }
    out
}
