//! Immutable columnar tables with a deterministic physical buffer layout.
//!
//! A [`Table`] is a schema plus equal-length [`Column`]s. Every column carries
//! a validity bitmap (bit i set = row i non-null) and one or two value
//! buffers: numeric columns hold a fixed-width data buffer, string columns
//! hold a 32-bit offsets buffer plus a byte data buffer. The flattened buffer
//! sequence (validity, then offsets where present, then data, per column in
//! schema order) is the unit of wire serialization and of per-buffer
//! compression fan-out.
//!
//! Tables are immutable after construction and safe to share across threads.

mod bitmap;

pub use bitmap::{validity_bytes, Bitmap};

use std::borrow::Cow;
use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-column value type. Closed set; every column carries exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Int64,
    Float64,
    Utf8,
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataType::Int64 => write!(f, "int64"),
            DataType::Float64 => write!(f, "float64"),
            DataType::Utf8 => write!(f, "utf8"),
        }
    }
}

/// A named, typed slot in a schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub dtype: DataType,
    pub nullable: bool,
}

impl Field {
    pub fn new(name: impl Into<String>, dtype: DataType, nullable: bool) -> Self {
        Field {
            name: name.into(),
            dtype,
            nullable,
        }
    }
}

/// Ordered, validated list of fields with pairwise-distinct names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    fields: Vec<Field>,
}

impl Schema {
    pub fn new(fields: Vec<Field>) -> Result<Self, ColumnarError> {
        if fields.is_empty() {
            return Err(ColumnarError::EmptySchema);
        }
        for field in &fields {
            if field.name.is_empty() {
                return Err(ColumnarError::EmptyFieldName);
            }
        }
        for (i, field) in fields.iter().enumerate() {
            if fields[..i].iter().any(|f| f.name == field.name) {
                return Err(ColumnarError::DuplicateField(field.name.clone()));
            }
        }
        Ok(Schema { fields })
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn field(&self, i: usize) -> &Field {
        &self.fields[i]
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }
}

/// Typed value storage behind a column.
#[derive(Debug, Clone)]
pub enum ColumnValues {
    Int64(Vec<i64>),
    Float64(Vec<f64>),
    Utf8 { offsets: Vec<u32>, data: Vec<u8> },
}

impl ColumnValues {
    fn dtype(&self) -> DataType {
        match self {
            ColumnValues::Int64(_) => DataType::Int64,
            ColumnValues::Float64(_) => DataType::Float64,
            ColumnValues::Utf8 { .. } => DataType::Utf8,
        }
    }
}

// Float64 equality is on bit patterns: round-trips must be bit-exact and
// NaN payloads must survive.
impl PartialEq for ColumnValues {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ColumnValues::Int64(a), ColumnValues::Int64(b)) => a == b,
            (ColumnValues::Float64(a), ColumnValues::Float64(b)) => {
                a.len() == b.len()
                    && a.iter()
                        .zip(b.iter())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (
                ColumnValues::Utf8 { offsets: ao, data: ad },
                ColumnValues::Utf8 { offsets: bo, data: bd },
            ) => ao == bo && ad == bd,
            _ => false,
        }
    }
}

impl Eq for ColumnValues {}

/// One borrowed cell of a table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell<'a> {
    Null,
    Int(i64),
    Float(f64),
    Str(&'a str),
}

/// An immutable column: validity bitmap plus typed values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    validity: Bitmap,
    values: ColumnValues,
}

impl Column {
    pub fn int64(values: Vec<i64>) -> Self {
        let validity = Bitmap::all_set(values.len());
        Column {
            validity,
            values: ColumnValues::Int64(values),
        }
    }

    pub fn int64_opt(values: Vec<Option<i64>>) -> Self {
        let mut validity = Bitmap::all_clear(0);
        let mut out = Vec::with_capacity(values.len());
        for v in values {
            validity.push(v.is_some());
            out.push(v.unwrap_or(0));
        }
        Column {
            validity,
            values: ColumnValues::Int64(out),
        }
    }

    pub fn float64(values: Vec<f64>) -> Self {
        let validity = Bitmap::all_set(values.len());
        Column {
            validity,
            values: ColumnValues::Float64(values),
        }
    }

    pub fn float64_opt(values: Vec<Option<f64>>) -> Self {
        let mut validity = Bitmap::all_clear(0);
        let mut out = Vec::with_capacity(values.len());
        for v in values {
            validity.push(v.is_some());
            out.push(v.unwrap_or(0.0));
        }
        Column {
            validity,
            values: ColumnValues::Float64(out),
        }
    }

    pub fn utf8<S: AsRef<str>>(values: &[S]) -> Self {
        let mut offsets = Vec::with_capacity(values.len() + 1);
        let mut data = Vec::new();
        offsets.push(0u32);
        for v in values {
            data.extend_from_slice(v.as_ref().as_bytes());
            offsets.push(u32::try_from(data.len()).expect("utf8 column exceeds 4 GiB"));
        }
        Column {
            validity: Bitmap::all_set(values.len()),
            values: ColumnValues::Utf8 { offsets, data },
        }
    }

    pub fn utf8_opt(values: &[Option<String>]) -> Self {
        let mut validity = Bitmap::all_clear(0);
        let mut offsets = Vec::with_capacity(values.len() + 1);
        let mut data = Vec::new();
        offsets.push(0u32);
        for v in values {
            validity.push(v.is_some());
            if let Some(s) = v {
                data.extend_from_slice(s.as_bytes());
            }
            offsets.push(u32::try_from(data.len()).expect("utf8 column exceeds 4 GiB"));
        }
        Column {
            validity,
            values: ColumnValues::Utf8 { offsets, data },
        }
    }

    /// Rebuilds a column from raw physical buffers, validating the layout
    /// rules (buffer sizes, offset monotonicity, UTF-8 well-formedness).
    pub fn from_buffers(
        dtype: DataType,
        len: usize,
        validity: Vec<u8>,
        offsets: Option<Vec<u8>>,
        data: Vec<u8>,
    ) -> Result<Self, ColumnarError> {
        let validity = Bitmap::from_bytes(validity, len).ok_or(ColumnarError::BufferSize {
            role: BufferRole::Validity,
            expected: validity_bytes(len),
        })?;
        let values = match dtype {
            DataType::Int64 | DataType::Float64 => {
                if offsets.is_some() {
                    return Err(ColumnarError::UnexpectedOffsets);
                }
                if data.len() != len * 8 {
                    return Err(ColumnarError::BufferSize {
                        role: BufferRole::Data,
                        expected: len * 8,
                    });
                }
                if dtype == DataType::Int64 {
                    let vals = data
                        .chunks_exact(8)
                        .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    ColumnValues::Int64(vals)
                } else {
                    let vals = data
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    ColumnValues::Float64(vals)
                }
            }
            DataType::Utf8 => {
                let raw = offsets.ok_or(ColumnarError::BufferSize {
                    role: BufferRole::Offsets,
                    expected: (len + 1) * 4,
                })?;
                if raw.len() != (len + 1) * 4 {
                    return Err(ColumnarError::BufferSize {
                        role: BufferRole::Offsets,
                        expected: (len + 1) * 4,
                    });
                }
                let offsets: Vec<u32> = raw
                    .chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                if offsets[0] != 0 || offsets.windows(2).any(|w| w[0] > w[1]) {
                    return Err(ColumnarError::BadOffsets);
                }
                if data.len() != offsets[len] as usize {
                    return Err(ColumnarError::BufferSize {
                        role: BufferRole::Data,
                        expected: offsets[len] as usize,
                    });
                }
                let text = std::str::from_utf8(&data).map_err(|_| ColumnarError::BadUtf8)?;
                if offsets.iter().any(|&o| !text.is_char_boundary(o as usize)) {
                    return Err(ColumnarError::BadUtf8);
                }
                ColumnValues::Utf8 { offsets, data }
            }
        };
        Ok(Column { validity, values })
    }

    pub fn len(&self) -> usize {
        self.validity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DataType {
        self.values.dtype()
    }

    pub fn validity(&self) -> &Bitmap {
        &self.validity
    }

    pub fn null_count(&self) -> usize {
        self.len() - self.validity.count_ones()
    }

    #[inline]
    pub fn is_valid(&self, i: usize) -> bool {
        self.validity.get(i)
    }

    pub fn values(&self) -> &ColumnValues {
        &self.values
    }

    /// Int64 values ignoring validity; null slots hold an unspecified filler.
    pub fn i64_values(&self) -> Option<&[i64]> {
        match &self.values {
            ColumnValues::Int64(v) => Some(v),
            _ => None,
        }
    }

    pub fn f64_values(&self) -> Option<&[f64]> {
        match &self.values {
            ColumnValues::Float64(v) => Some(v),
            _ => None,
        }
    }

    fn utf8_bytes_at(&self, i: usize) -> &[u8] {
        match &self.values {
            ColumnValues::Utf8 { offsets, data } => {
                &data[offsets[i] as usize..offsets[i + 1] as usize]
            }
            _ => panic!("not a utf8 column"),
        }
    }

    pub fn cell(&self, i: usize) -> Cell<'_> {
        if !self.is_valid(i) {
            return Cell::Null;
        }
        match &self.values {
            ColumnValues::Int64(v) => Cell::Int(v[i]),
            ColumnValues::Float64(v) => Cell::Float(v[i]),
            ColumnValues::Utf8 { .. } => Cell::Str(
                std::str::from_utf8(self.utf8_bytes_at(i)).expect("column invariant: valid utf8"),
            ),
        }
    }

    /// Number of physical buffers: 2 for numeric columns, 3 for strings.
    pub fn buffer_count(&self) -> usize {
        match self.values {
            ColumnValues::Utf8 { .. } => 3,
            _ => 2,
        }
    }

    /// Physical byte length of one buffer role without materializing it.
    pub fn buffer_len(&self, role: BufferRole) -> Option<usize> {
        match (role, &self.values) {
            (BufferRole::Validity, _) => Some(validity_bytes(self.len())),
            (BufferRole::Offsets, ColumnValues::Utf8 { offsets, .. }) => Some(offsets.len() * 4),
            (BufferRole::Offsets, _) => None,
            (BufferRole::Data, ColumnValues::Utf8 { data, .. }) => Some(data.len()),
            (BufferRole::Data, ColumnValues::Int64(v)) => Some(v.len() * 8),
            (BufferRole::Data, ColumnValues::Float64(v)) => Some(v.len() * 8),
        }
    }

    /// One buffer role as little-endian bytes. Borrows the in-memory storage
    /// on little-endian targets; only big-endian machines pay for a swap.
    pub fn buffer_bytes(&self, role: BufferRole) -> Option<Cow<'_, [u8]>> {
        match (role, &self.values) {
            (BufferRole::Validity, _) => Some(Cow::Borrowed(self.validity.as_bytes())),
            (BufferRole::Offsets, ColumnValues::Utf8 { offsets, .. }) => {
                Some(le_bytes::<u32>(offsets))
            }
            (BufferRole::Offsets, _) => None,
            (BufferRole::Data, ColumnValues::Utf8 { data, .. }) => Some(Cow::Borrowed(data)),
            (BufferRole::Data, ColumnValues::Int64(v)) => Some(le_bytes::<i64>(v)),
            (BufferRole::Data, ColumnValues::Float64(v)) => Some(le_bytes::<f64>(v)),
        }
    }

    fn gather(&self, indices: &[usize]) -> Column {
        let mut validity = Bitmap::all_clear(0);
        for &i in indices {
            validity.push(self.is_valid(i));
        }
        let values = match &self.values {
            ColumnValues::Int64(v) => {
                ColumnValues::Int64(indices.iter().map(|&i| v[i]).collect())
            }
            ColumnValues::Float64(v) => {
                ColumnValues::Float64(indices.iter().map(|&i| v[i]).collect())
            }
            ColumnValues::Utf8 { .. } => {
                let mut offsets = Vec::with_capacity(indices.len() + 1);
                let mut data = Vec::new();
                offsets.push(0u32);
                for &i in indices {
                    data.extend_from_slice(self.utf8_bytes_at(i));
                    offsets.push(u32::try_from(data.len()).expect("utf8 column exceeds 4 GiB"));
                }
                ColumnValues::Utf8 { offsets, data }
            }
        };
        Column { validity, values }
    }

    fn slice_prefix(&self, n: usize) -> Column {
        debug_assert!(n <= self.len());
        let mut validity = Bitmap::all_clear(0);
        for i in 0..n {
            validity.push(self.is_valid(i));
        }
        let values = match &self.values {
            ColumnValues::Int64(v) => ColumnValues::Int64(v[..n].to_vec()),
            ColumnValues::Float64(v) => ColumnValues::Float64(v[..n].to_vec()),
            ColumnValues::Utf8 { offsets, data } => ColumnValues::Utf8 {
                offsets: offsets[..=n].to_vec(),
                data: data[..offsets[n] as usize].to_vec(),
            },
        };
        Column { validity, values }
    }
}

#[cfg(target_endian = "little")]
fn le_bytes<T: bytemuck::Pod>(values: &[T]) -> Cow<'_, [u8]> {
    Cow::Borrowed(bytemuck::cast_slice(values))
}

#[cfg(target_endian = "big")]
fn le_bytes<T: bytemuck::Pod + LeBytes>(values: &[T]) -> Cow<'_, [u8]> {
    let mut out = Vec::with_capacity(std::mem::size_of_val(values));
    for v in values {
        v.push_le(&mut out);
    }
    Cow::Owned(out)
}

#[cfg(target_endian = "big")]
trait LeBytes {
    fn push_le(&self, out: &mut Vec<u8>);
}

#[cfg(target_endian = "big")]
macro_rules! impl_le_bytes {
    ($($t:ty),*) => {$(
        impl LeBytes for $t {
            fn push_le(&self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
        }
    )*};
}

#[cfg(target_endian = "big")]
impl_le_bytes!(u32, i64, f64);

/// Role of one physical buffer within a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferRole {
    Validity,
    Offsets,
    Data,
}

impl fmt::Display for BufferRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BufferRole::Validity => write!(f, "validity"),
            BufferRole::Offsets => write!(f, "offsets"),
            BufferRole::Data => write!(f, "data"),
        }
    }
}

/// One entry of the flattened physical layout of a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferInfo {
    pub column: usize,
    pub role: BufferRole,
    pub len: usize,
}

#[derive(Debug, Error)]
pub enum ColumnarError {
    #[error("schema has no fields")]
    EmptySchema,
    #[error("schema field has an empty name")]
    EmptyFieldName,
    #[error("duplicate field name `{0}` in schema")]
    DuplicateField(String),
    #[error("table has {columns} columns for {fields} schema fields")]
    ColumnCountMismatch { columns: usize, fields: usize },
    #[error("column {column} has length {actual}, expected {expected}")]
    LengthMismatch {
        column: usize,
        expected: usize,
        actual: usize,
    },
    #[error("column {column} is {actual} but field `{field}` declares {expected}")]
    TypeMismatch {
        column: usize,
        field: String,
        expected: DataType,
        actual: DataType,
    },
    #[error("utf8 offsets are not monotone non-decreasing from zero")]
    BadOffsets,
    #[error("utf8 data buffer is not valid UTF-8 at the declared offsets")]
    BadUtf8,
    #[error("numeric column cannot carry an offsets buffer")]
    UnexpectedOffsets,
    #[error("{role} buffer has the wrong size, expected {expected} bytes")]
    BufferSize { role: BufferRole, expected: usize },
    #[error("field `{0}` declares nullable=false but column contains nulls")]
    NullityViolation(String),
    #[error("selection mask has {mask} bits for {rows} rows")]
    MaskLengthMismatch { mask: usize, rows: usize },
    #[error("cannot concatenate an empty list of tables")]
    EmptyList,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("sort key `{0}` contains nulls")]
    NullKey(String),
}

/// Schema plus equal-length columns; the in-memory unit of processing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    schema: Schema,
    columns: Vec<Column>,
    nrows: usize,
}

impl Table {
    pub fn new(schema: Schema, columns: Vec<Column>) -> Result<Self, ColumnarError> {
        if columns.len() != schema.len() {
            return Err(ColumnarError::ColumnCountMismatch {
                columns: columns.len(),
                fields: schema.len(),
            });
        }
        let nrows = columns[0].len();
        for (i, (col, field)) in columns.iter().zip(schema.fields()).enumerate() {
            if col.len() != nrows {
                return Err(ColumnarError::LengthMismatch {
                    column: i,
                    expected: nrows,
                    actual: col.len(),
                });
            }
            if col.dtype() != field.dtype {
                return Err(ColumnarError::TypeMismatch {
                    column: i,
                    field: field.name.clone(),
                    expected: field.dtype,
                    actual: col.dtype(),
                });
            }
            if !field.nullable && !col.validity.all_ones() {
                return Err(ColumnarError::NullityViolation(field.name.clone()));
            }
        }
        Ok(Table {
            schema,
            columns,
            nrows,
        })
    }

    /// Zero-row table over `schema`.
    pub fn empty(schema: Schema) -> Self {
        let columns = schema
            .fields()
            .iter()
            .map(|f| match f.dtype {
                DataType::Int64 => Column::int64(Vec::new()),
                DataType::Float64 => Column::float64(Vec::new()),
                DataType::Utf8 => Column::utf8::<&str>(&[]),
            })
            .collect();
        Table {
            schema,
            columns,
            nrows: 0,
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &Column {
        &self.columns[i]
    }

    pub fn column_by_name(&self, name: &str) -> Option<&Column> {
        self.schema.index_of(name).map(|i| &self.columns[i])
    }

    pub fn cell(&self, column: usize, row: usize) -> Cell<'_> {
        self.columns[column].cell(row)
    }

    /// Deterministic flattening of the physical buffers: per column in schema
    /// order, validity then (offsets) then data.
    pub fn buffer_layout(&self) -> Vec<BufferInfo> {
        let mut out = Vec::new();
        for (i, col) in self.columns.iter().enumerate() {
            out.push(BufferInfo {
                column: i,
                role: BufferRole::Validity,
                len: col.buffer_len(BufferRole::Validity).unwrap(),
            });
            if let Some(len) = col.buffer_len(BufferRole::Offsets) {
                out.push(BufferInfo {
                    column: i,
                    role: BufferRole::Offsets,
                    len,
                });
            }
            out.push(BufferInfo {
                column: i,
                role: BufferRole::Data,
                len: col.buffer_len(BufferRole::Data).unwrap(),
            });
        }
        out
    }

    /// Rows whose mask bit is set, in original order.
    pub fn select(&self, mask: &Bitmap) -> Result<Table, ColumnarError> {
        if mask.len() != self.nrows {
            return Err(ColumnarError::MaskLengthMismatch {
                mask: mask.len(),
                rows: self.nrows,
            });
        }
        let indices: Vec<usize> = mask.ones().collect();
        Ok(self.take(&indices))
    }

    /// Gathers the given rows, in the given order. Indices must be in range.
    fn take(&self, indices: &[usize]) -> Table {
        let columns = self.columns.iter().map(|c| c.gather(indices)).collect();
        Table {
            schema: self.schema.clone(),
            columns,
            nrows: indices.len(),
        }
    }

    /// First `n` rows (all rows if `n >= nrows`).
    pub fn head(&self, n: usize) -> Table {
        let n = n.min(self.nrows);
        let columns = self.columns.iter().map(|c| c.slice_prefix(n)).collect();
        Table {
            schema: self.schema.clone(),
            columns,
            nrows: n,
        }
    }

    /// Stable ascending lexicographic sort by the named key columns.
    ///
    /// Int64 sorts numerically, Float64 in a total order with every NaN
    /// greater than every non-NaN (ties keep input order), Utf8 bytewise.
    /// Key columns must not contain nulls.
    pub fn sort_by(&self, keys: &[&str]) -> Result<Table, ColumnarError> {
        let mut key_cols = Vec::with_capacity(keys.len());
        for &name in keys {
            let idx = self
                .schema
                .index_of(name)
                .ok_or_else(|| ColumnarError::UnknownField(name.to_string()))?;
            let col = &self.columns[idx];
            if col.null_count() > 0 {
                return Err(ColumnarError::NullKey(name.to_string()));
            }
            key_cols.push(col);
        }
        let mut indices: Vec<usize> = (0..self.nrows).collect();
        indices.sort_by(|&a, &b| cmp_rows(&key_cols, a, b));
        Ok(self.take(&indices))
    }
}

fn cmp_rows(cols: &[&Column], a: usize, b: usize) -> Ordering {
    for col in cols {
        let ord = match &col.values {
            ColumnValues::Int64(v) => v[a].cmp(&v[b]),
            ColumnValues::Float64(v) => cmp_f64_nan_greatest(v[a], v[b]),
            ColumnValues::Utf8 { .. } => col.utf8_bytes_at(a).cmp(col.utf8_bytes_at(b)),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    Ordering::Equal
}

fn cmp_f64_nan_greatest(a: f64, b: f64) -> Ordering {
    match (a.is_nan(), b.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        (false, false) => a.partial_cmp(&b).unwrap(),
    }
}

/// Concatenates tables with identical schemas, rows in list order.
pub fn concat(tables: &[Table]) -> Result<Table, ColumnarError> {
    let first = tables.first().ok_or(ColumnarError::EmptyList)?;
    for t in &tables[1..] {
        if t.schema != first.schema {
            return Err(ColumnarError::SchemaMismatch(
                "all tables must share one schema".to_string(),
            ));
        }
    }
    if tables.len() == 1 {
        return Ok(first.clone());
    }
    let nrows = tables.iter().map(|t| t.nrows).sum();
    let mut columns = Vec::with_capacity(first.schema.len());
    for ci in 0..first.schema.len() {
        let mut validity = Bitmap::all_clear(0);
        for t in tables {
            for i in 0..t.nrows {
                validity.push(t.columns[ci].is_valid(i));
            }
        }
        let values = match first.columns[ci].dtype() {
            DataType::Int64 => {
                let mut v = Vec::with_capacity(nrows);
                for t in tables {
                    v.extend_from_slice(t.columns[ci].i64_values().unwrap());
                }
                ColumnValues::Int64(v)
            }
            DataType::Float64 => {
                let mut v = Vec::with_capacity(nrows);
                for t in tables {
                    v.extend_from_slice(t.columns[ci].f64_values().unwrap());
                }
                ColumnValues::Float64(v)
            }
            DataType::Utf8 => {
                let mut offsets = Vec::with_capacity(nrows + 1);
                let mut data = Vec::new();
                offsets.push(0u32);
                for t in tables {
                    if let ColumnValues::Utf8 {
                        offsets: to,
                        data: td,
                    } = &t.columns[ci].values
                    {
                        let base = data.len() as u64;
                        data.extend_from_slice(td);
                        for o in &to[1..] {
                            let off = base + *o as u64;
                            offsets
                                .push(u32::try_from(off).expect("utf8 column exceeds 4 GiB"));
                        }
                    } else {
                        unreachable!("schema equality guarantees dtype");
                    }
                }
                ColumnValues::Utf8 { offsets, data }
            }
        };
        columns.push(Column { validity, values });
    }
    Ok(Table {
        schema: first.schema.clone(),
        columns,
        nrows,
    })
}

/// Row-by-row table construction; the generators, CSV reader, and the
/// single-pass partition oracle all build tables through this.
pub struct TableBuilder {
    schema: Schema,
    validity: Vec<Bitmap>,
    values: Vec<ColumnValues>,
}

impl TableBuilder {
    pub fn new(schema: Schema) -> Self {
        let values = schema
            .fields()
            .iter()
            .map(|f| match f.dtype {
                DataType::Int64 => ColumnValues::Int64(Vec::new()),
                DataType::Float64 => ColumnValues::Float64(Vec::new()),
                DataType::Utf8 => ColumnValues::Utf8 {
                    offsets: vec![0],
                    data: Vec::new(),
                },
            })
            .collect();
        let validity = schema.fields().iter().map(|_| Bitmap::all_clear(0)).collect();
        TableBuilder {
            schema,
            validity,
            values,
        }
    }

    pub fn append_i64(&mut self, column: usize, value: i64) {
        match &mut self.values[column] {
            ColumnValues::Int64(v) => v.push(value),
            other => panic!("column {column} is {}, not int64", other.dtype()),
        }
        self.validity[column].push(true);
    }

    pub fn append_f64(&mut self, column: usize, value: f64) {
        match &mut self.values[column] {
            ColumnValues::Float64(v) => v.push(value),
            other => panic!("column {column} is {}, not float64", other.dtype()),
        }
        self.validity[column].push(true);
    }

    pub fn append_str(&mut self, column: usize, value: &str) {
        match &mut self.values[column] {
            ColumnValues::Utf8 { offsets, data } => {
                data.extend_from_slice(value.as_bytes());
                offsets.push(u32::try_from(data.len()).expect("utf8 column exceeds 4 GiB"));
            }
            other => panic!("column {column} is {}, not utf8", other.dtype()),
        }
        self.validity[column].push(true);
    }

    pub fn append_null(&mut self, column: usize) {
        match &mut self.values[column] {
            ColumnValues::Int64(v) => v.push(0),
            ColumnValues::Float64(v) => v.push(0.0),
            ColumnValues::Utf8 { offsets, .. } => {
                let last = *offsets.last().unwrap();
                offsets.push(last);
            }
        }
        self.validity[column].push(false);
    }

    pub fn append_cell(&mut self, column: usize, cell: Cell<'_>) {
        match cell {
            Cell::Null => self.append_null(column),
            Cell::Int(v) => self.append_i64(column, v),
            Cell::Float(v) => self.append_f64(column, v),
            Cell::Str(s) => self.append_str(column, s),
        }
    }

    /// Copies row `row` of `src` across all columns.
    pub fn append_row(&mut self, src: &Table, row: usize) {
        for c in 0..src.schema().len() {
            self.append_cell(c, src.cell(c, row));
        }
    }

    pub fn rows(&self) -> usize {
        self.validity.first().map(|v| v.len()).unwrap_or(0)
    }

    pub fn finish(self) -> Result<Table, ColumnarError> {
        let columns: Vec<Column> = self
            .validity
            .into_iter()
            .zip(self.values)
            .map(|(validity, values)| Column { validity, values })
            .collect();
        Table::new(self.schema, columns)
    }
}
