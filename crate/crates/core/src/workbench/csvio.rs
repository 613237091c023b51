//! CSV ingestion and emission for tables.
//!
//! Cells are comma-separated with a header row; empty cells read back as
//! nulls (so a present-but-empty string is indistinguishable from a null
//! one). Floats use the shortest representation that round-trips.

use std::io::{Read, Write};
use std::path::Path;

use crate::columnar::{Cell, DataType, Schema, Table, TableBuilder};

use super::WorkbenchError;

pub fn write_csv<W: Write>(table: &Table, writer: W) -> Result<(), WorkbenchError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(table.schema().fields().iter().map(|f| f.name.as_str()))?;
    let mut record = csv::StringRecord::new();
    for row in 0..table.nrows() {
        record.clear();
        for col in 0..table.schema().len() {
            match table.cell(col, row) {
                Cell::Null => record.push_field(""),
                Cell::Int(v) => record.push_field(&v.to_string()),
                Cell::Float(v) => record.push_field(&v.to_string()),
                Cell::Str(s) => record.push_field(s),
            }
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path, schema: &Schema) -> Result<Table, WorkbenchError> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            WorkbenchError::FileNotFound(path.to_path_buf())
        } else {
            WorkbenchError::Io(e)
        }
    })?;
    read_csv_from(std::io::BufReader::new(file), schema)
}

pub fn read_csv_from<R: Read>(reader: R, schema: &Schema) -> Result<Table, WorkbenchError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let expected: Vec<String> = schema.fields().iter().map(|f| f.name.clone()).collect();
    let actual: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if actual != expected {
        return Err(WorkbenchError::HeaderMismatch { expected, actual });
    }

    let mut builder = TableBuilder::new(schema.clone());
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let row = i + 1; // 1-based data row for error messages
        for (col, field) in schema.fields().iter().enumerate() {
            let raw = record.get(col).unwrap_or("");
            if raw.is_empty() {
                builder.append_null(col);
                continue;
            }
            match field.dtype {
                DataType::Int64 => {
                    let v: i64 = raw.parse().map_err(|_| WorkbenchError::ParseError {
                        row,
                        column: field.name.clone(),
                        value: raw.to_string(),
                    })?;
                    builder.append_i64(col, v);
                }
                DataType::Float64 => {
                    let v: f64 = raw.parse().map_err(|_| WorkbenchError::ParseError {
                        row,
                        column: field.name.clone(),
                        value: raw.to_string(),
                    })?;
                    builder.append_f64(col, v);
                }
                DataType::Utf8 => builder.append_str(col, raw),
            }
        }
    }
    Ok(builder.finish()?)
}
