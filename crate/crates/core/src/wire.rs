//! Byte-exact envelope format for tables with per-buffer ("inner")
//! compression.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "PTBL" | version u16 | codec u8
//! schema_len u32 | schema JSON bytes
//! nrows u64 | buffer_count u32
//! per buffer (in [`Table::buffer_layout`] order):
//!   raw_flag u8 | uncompressed_len u64 | stored_len u64
//!   payload (stored_len bytes, zero-padded to an 8-byte boundary)
//! ```
//!
//! Buffers are compressed as one task each; output bytes are identical for
//! any worker count because assembly always follows layout order. A buffer is
//! stored raw when the codec would not shrink it or when it is shorter than
//! [`RAW_THRESHOLD`] bytes.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, CodecError, CodecId};
use crate::columnar::{Column, ColumnarError, DataType, Field, Schema, Table};
use crate::ioutil::{pad8, run_tasks, Reader};

pub const ENVELOPE_MAGIC: [u8; 4] = *b"PTBL";
pub const ENVELOPE_VERSION: u16 = 1;
/// Buffers shorter than this skip compression outright.
pub const RAW_THRESHOLD: usize = 64;

/// Worker count for per-buffer compression tasks. `Auto` runs one task per
/// buffer, matching the fan-out of the layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    #[default]
    Auto,
    Fixed(usize),
}

impl Parallelism {
    fn threads(self, tasks: usize) -> usize {
        match self {
            Parallelism::Auto => tasks,
            Parallelism::Fixed(n) => n.max(1).min(tasks),
        }
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("bad magic: not a table envelope")]
    BadMagic,
    #[error("unsupported envelope version {0}")]
    UnsupportedVersion(u16),
    #[error("envelope truncated: {0}")]
    Truncated(&'static str),
    #[error("unknown codec byte {0}")]
    UnknownCodec(u8),
    #[error("invalid envelope: {0}")]
    InvalidEnvelope(&'static str),
    #[error("buffer count {actual} does not match schema (expected {expected})")]
    LayoutMismatch { expected: usize, actual: usize },
    #[error("codec failure on buffer {buffer}: {source}")]
    CodecFailure {
        buffer: usize,
        #[source]
        source: CodecError,
    },
    #[error("invalid schema JSON: {0}")]
    InvalidSchema(#[from] serde_json::Error),
    #[error(transparent)]
    Columnar(#[from] ColumnarError),
}

#[derive(Serialize, Deserialize)]
struct SchemaJson {
    fields: Vec<Field>,
}

pub fn schema_to_json(schema: &Schema) -> String {
    serde_json::to_string(&SchemaJson {
        fields: schema.fields().to_vec(),
    })
    .expect("schema serialization cannot fail")
}

pub fn schema_from_json(text: &str) -> Result<Schema, WireError> {
    let parsed: SchemaJson = serde_json::from_str(text)?;
    Ok(Schema::new(parsed.fields)?)
}

/// Parallel fan-out of `serialize`: one task per physical buffer.
pub fn buffer_tasks(table: &Table) -> usize {
    table.buffer_layout().len()
}

/// Compression outcome for one buffer: `None` payload means "store raw".
type Packed = Option<Vec<u8>>;

fn pack_buffer(codec: CodecId, buf: &[u8]) -> Result<Packed, CodecError> {
    if codec == CodecId::None || buf.len() < RAW_THRESHOLD {
        return Ok(None);
    }
    let packed = codec::compress(codec, buf)?;
    if packed.len() >= buf.len() {
        Ok(None)
    } else {
        Ok(Some(packed))
    }
}

/// Serializes a table into an envelope, compressing each buffer as its own
/// task. Output bytes depend only on the table and codec, never on
/// `parallelism`.
pub fn serialize(
    table: &Table,
    codec: CodecId,
    parallelism: Parallelism,
) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::new();
    serialize_into(table, codec, parallelism, &mut out)?;
    Ok(out)
}

/// [`serialize`] writing into a caller-owned buffer, so repeated packing can
/// reuse one allocation.
pub fn serialize_into(
    table: &Table,
    codec: CodecId,
    parallelism: Parallelism,
    out: &mut Vec<u8>,
) -> Result<(), WireError> {
    out.clear();
    let layout = table.buffer_layout();
    let buffers: Vec<Cow<'_, [u8]>> = layout
        .iter()
        .map(|info| table.column(info.column).buffer_bytes(info.role).unwrap())
        .collect();

    let threads = parallelism.threads(buffers.len());
    let packed = run_tasks(&buffers, threads, |_, buf| pack_buffer(codec, buf));

    let schema_json = schema_to_json(table.schema());
    out.reserve(
        23 + schema_json.len() + buffers.iter().map(|b| 17 + pad8(b.len())).sum::<usize>(),
    );
    out.extend_from_slice(&ENVELOPE_MAGIC);
    out.extend_from_slice(&ENVELOPE_VERSION.to_le_bytes());
    out.push(codec.as_byte());
    out.extend_from_slice(&(schema_json.len() as u32).to_le_bytes());
    out.extend_from_slice(schema_json.as_bytes());
    out.extend_from_slice(&(table.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(buffers.len() as u32).to_le_bytes());

    for (i, (buf, packed)) in buffers.iter().zip(packed).enumerate() {
        let packed = packed.map_err(|source| WireError::CodecFailure { buffer: i, source })?;
        let (raw_flag, payload): (u8, &[u8]) = match &packed {
            None => (1, buf.as_ref()),
            Some(p) => (0, p),
        };
        out.push(raw_flag);
        out.extend_from_slice(&(buf.len() as u64).to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(payload);
        out.resize(out.len() + (pad8(payload.len()) - payload.len()), 0);
    }
    Ok(())
}

/// Reconstructs the table from an envelope; the inverse of [`serialize`].
pub fn deserialize(bytes: &[u8]) -> Result<Table, WireError> {
    deserialize_with(bytes, Parallelism::Fixed(1))
}

/// [`deserialize`] with concurrent per-buffer decompression.
pub fn deserialize_with(bytes: &[u8], parallelism: Parallelism) -> Result<Table, WireError> {
    let mut r = Reader::new(bytes);
    if r.take(4).ok_or(WireError::Truncated("magic"))? != ENVELOPE_MAGIC {
        return Err(WireError::BadMagic);
    }
    let version = r.u16().ok_or(WireError::Truncated("version"))?;
    if version != ENVELOPE_VERSION {
        return Err(WireError::UnsupportedVersion(version));
    }
    let codec_byte = r.u8().ok_or(WireError::Truncated("codec"))?;
    let codec = CodecId::from_byte(codec_byte).ok_or(WireError::UnknownCodec(codec_byte))?;
    let schema_len = r.u32().ok_or(WireError::Truncated("schema length"))? as usize;
    let schema_bytes = r.take(schema_len).ok_or(WireError::Truncated("schema JSON"))?;
    let schema = schema_from_json(
        std::str::from_utf8(schema_bytes)
            .map_err(|_| WireError::InvalidEnvelope("schema is not UTF-8"))?,
    )?;
    let nrows = r.u64().ok_or(WireError::Truncated("row count"))? as usize;
    let buffer_count = r.u32().ok_or(WireError::Truncated("buffer count"))? as usize;

    let expected: usize = schema
        .fields()
        .iter()
        .map(|f| if f.dtype == DataType::Utf8 { 3 } else { 2 })
        .sum();
    if buffer_count != expected {
        return Err(WireError::LayoutMismatch {
            expected,
            actual: buffer_count,
        });
    }

    // Pass 1: headers and payload slices.
    let mut stored: Vec<(bool, usize, &[u8])> = Vec::with_capacity(buffer_count);
    for _ in 0..buffer_count {
        let raw_flag = r.u8().ok_or(WireError::Truncated("buffer flag"))?;
        if raw_flag > 1 {
            return Err(WireError::InvalidEnvelope("raw flag must be 0 or 1"));
        }
        let raw = raw_flag == 1;
        let uncompressed_len = r.u64().ok_or(WireError::Truncated("uncompressed length"))? as usize;
        let stored_len = r.u64().ok_or(WireError::Truncated("stored length"))? as usize;
        if raw && stored_len != uncompressed_len {
            return Err(WireError::InvalidEnvelope("raw buffer length mismatch"));
        }
        if codec == CodecId::None && !raw {
            return Err(WireError::InvalidEnvelope("codec none requires raw buffers"));
        }
        let payload = r.take(stored_len).ok_or(WireError::Truncated("buffer payload"))?;
        r.take(pad8(stored_len) - stored_len)
            .ok_or(WireError::Truncated("buffer padding"))?;
        stored.push((raw, uncompressed_len, payload));
    }

    // Pass 2: decompress.
    let inputs: Vec<&[u8]> = stored.iter().map(|&(_, _, p)| p).collect();
    let threads = parallelism.threads(inputs.len());
    let unpacked = run_tasks(&inputs, threads, |i, payload| {
        let (raw, uncompressed_len, _) = stored[i];
        if raw {
            Ok(payload.to_vec())
        } else {
            codec::decompress(codec, payload, uncompressed_len)
        }
    });
    let mut buffers = Vec::with_capacity(buffer_count);
    for (i, out) in unpacked.into_iter().enumerate() {
        buffers.push(out.map_err(|source| WireError::CodecFailure { buffer: i, source })?);
    }

    // Pass 3: reassemble columns, validity then (offsets) then data.
    let mut it = buffers.into_iter();
    let mut columns = Vec::with_capacity(schema.len());
    for field in schema.fields() {
        let validity = it.next().expect("count checked");
        let (offsets, data) = if field.dtype == DataType::Utf8 {
            let offsets = it.next().expect("count checked");
            (Some(offsets), it.next().expect("count checked"))
        } else {
            (None, it.next().expect("count checked"))
        };
        columns.push(Column::from_buffers(
            field.dtype,
            nrows,
            validity,
            offsets,
            data,
        )?);
    }
    Ok(Table::new(schema, columns)?)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::columnar::Bitmap;
    use crate::testgen::arb_table;

    fn one_int_table(values: Vec<i64>) -> Table {
        Table::new(
            Schema::new(vec![Field::new("a", DataType::Int64, false)]).unwrap(),
            vec![Column::int64(values)],
        )
        .unwrap()
    }

    #[test]
    fn empty_table_envelope() {
        let t = one_int_table(vec![]);
        let bytes = serialize(&t, CodecId::None, Parallelism::Auto).unwrap();
        let back = deserialize(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(buffer_tasks(&t), 2);
    }

    #[test]
    fn parallelism_does_not_change_bytes() {
        let t = one_int_table((0..50_000).map(|i| i * 3).collect());
        for codec in [CodecId::None, CodecId::Lz4Frame, CodecId::Zstd, CodecId::Deflate] {
            let a = serialize(&t, codec, Parallelism::Fixed(1)).unwrap();
            let b = serialize(&t, codec, Parallelism::Fixed(8)).unwrap();
            let c = serialize(&t, codec, Parallelism::Auto).unwrap();
            assert_eq!(a, b, "{codec}");
            assert_eq!(a, c, "{codec}");
        }
    }

    #[test]
    fn constant_column_compresses() {
        let t = one_int_table(vec![7; 100_000]);
        let bytes = serialize(&t, CodecId::Zstd, Parallelism::Auto).unwrap();
        // data buffer is 800_000 bytes uncompressed; envelope must be far smaller
        assert!(bytes.len() < 100_000, "envelope is {} bytes", bytes.len());
        assert_eq!(deserialize(&bytes).unwrap(), t);
    }

    #[test]
    fn bad_magic() {
        let t = one_int_table(vec![1]);
        let mut bytes = serialize(&t, CodecId::None, Parallelism::Auto).unwrap();
        bytes[0..4].copy_from_slice(b"XXXX");
        assert!(matches!(deserialize(&bytes), Err(WireError::BadMagic)));
    }

    #[test]
    fn unsupported_version() {
        let t = one_int_table(vec![1]);
        let mut bytes = serialize(&t, CodecId::None, Parallelism::Auto).unwrap();
        bytes[4] = 9;
        assert!(matches!(
            deserialize(&bytes),
            Err(WireError::UnsupportedVersion(9))
        ));
    }

    #[test]
    fn truncation_detected() {
        let t = one_int_table(vec![1, 2, 3]);
        let bytes = serialize(&t, CodecId::None, Parallelism::Auto).unwrap();
        assert!(matches!(
            deserialize(&bytes[..bytes.len() - 1]),
            Err(WireError::Truncated(_))
        ));
    }

    #[test]
    fn buffer_count_must_match_schema() {
        let t = one_int_table(vec![1]);
        let mut bytes = serialize(&t, CodecId::None, Parallelism::Auto).unwrap();
        // buffer_count field sits right after the 8-byte nrows that follows the schema
        let schema_len =
            u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
        let pos = 11 + schema_len + 8;
        bytes[pos..pos + 4].copy_from_slice(&9u32.to_le_bytes());
        assert!(matches!(
            deserialize(&bytes),
            Err(WireError::LayoutMismatch { expected: 2, actual: 9 })
        ));
    }

    #[test]
    fn task_fanout_matches_layout() {
        let mut fields: Vec<Field> = (0..16)
            .map(|i| Field::new(format!("n{i}"), DataType::Int64, false))
            .collect();
        fields.push(Field::new("s", DataType::Utf8, false));
        let schema = Schema::new(fields).unwrap();
        let mut cols: Vec<Column> = (0..16).map(|_| Column::int64(vec![1])).collect();
        cols.push(Column::utf8(&["x"]));
        let t = Table::new(schema, cols).unwrap();
        assert_eq!(buffer_tasks(&t), 35);
    }

    #[test]
    fn stored_never_exceeds_uncompressed() {
        // random-ish bytes stay raw; constant bytes compress
        let mixed = Table::new(
            Schema::new(vec![Field::new("s", DataType::Utf8, false)]).unwrap(),
            vec![Column::utf8(
                &(0..500)
                    .map(|i| format!("{:x}", i * 2654435761u64))
                    .collect::<Vec<_>>(),
            )],
        )
        .unwrap();
        let bytes = serialize(&mixed, CodecId::Deflate, Parallelism::Auto).unwrap();
        let mut r = Reader::new(&bytes);
        r.take(4).unwrap();
        r.u16().unwrap();
        r.u8().unwrap();
        let slen = r.u32().unwrap() as usize;
        r.take(slen).unwrap();
        r.u64().unwrap();
        let count = r.u32().unwrap();
        for _ in 0..count {
            r.u8().unwrap();
            let unc = r.u64().unwrap();
            let sto = r.u64().unwrap();
            assert!(sto <= unc);
            r.take(pad8(sto as usize)).unwrap();
        }
        assert_eq!(r.pos, bytes.len(), "size accounting");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn round_trip_identity(table in arb_table(), codec_pick in 0u8..4) {
            let codec = CodecId::from_byte(codec_pick).unwrap();
            let bytes = serialize(&table, codec, Parallelism::Fixed(4)).unwrap();
            let back = deserialize_with(&bytes, Parallelism::Fixed(2)).unwrap();
            prop_assert_eq!(back, table);
        }

        #[test]
        fn select_then_round_trip(table in arb_table(), seed in any::<u64>()) {
            // serialization composes with selection
            let n = table.nrows();
            let mut bits = Vec::with_capacity(n);
            let mut s = seed;
            for _ in 0..n {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                bits.push(s & 1 == 1);
            }
            let part = table.select(&Bitmap::from_bools(&bits)).unwrap();
            let bytes = serialize(&part, CodecId::Zstd, Parallelism::Auto).unwrap();
            prop_assert_eq!(deserialize(&bytes).unwrap(), part);
        }
    }
}
