//! Compression codec identifiers and one-shot (de)compression entry points.
//!
//! Levels are fixed so that output bytes are a pure function of the input:
//! LZ4 frame at its default level, Zstd at level 1, raw DEFLATE at level 1.
//! The Deflate variant emits the raw DEFLATE bit format (no zlib or gzip
//! wrapper) so payloads interoperate with any conforming implementation.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use thiserror::Error;

/// Wire codec identifier; a single byte in the envelope and container
/// headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum CodecId {
    None = 0,
    Lz4Frame = 1,
    Zstd = 2,
    Deflate = 3,
}

pub const ZSTD_LEVEL: i32 = 1;
pub const DEFLATE_LEVEL: u32 = 1;

impl CodecId {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(CodecId::None),
            1 => Some(CodecId::Lz4Frame),
            2 => Some(CodecId::Zstd),
            3 => Some(CodecId::Deflate),
            _ => None,
        }
    }

    pub fn as_byte(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            CodecId::None => "none",
            CodecId::Lz4Frame => "lz4f",
            CodecId::Zstd => "zstd",
            CodecId::Deflate => "deflate",
        }
    }
}

impl fmt::Display for CodecId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CodecId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(CodecId::None),
            "lz4f" | "lz4" => Ok(CodecId::Lz4Frame),
            "zstd" => Ok(CodecId::Zstd),
            "deflate" => Ok(CodecId::Deflate),
            other => Err(format!(
                "unknown codec `{other}` (expected none|lz4f|zstd|deflate)"
            )),
        }
    }
}

#[derive(Debug, Error)]
#[error("{codec} codec failed: {detail}")]
pub struct CodecError {
    pub codec: CodecId,
    pub detail: String,
}

fn err(codec: CodecId, e: impl fmt::Display) -> CodecError {
    CodecError {
        codec,
        detail: e.to_string(),
    }
}

/// Compresses `input` with the fixed level for `codec`. `CodecId::None`
/// copies.
pub fn compress(codec: CodecId, input: &[u8]) -> Result<Vec<u8>, CodecError> {
    match codec {
        CodecId::None => Ok(input.to_vec()),
        CodecId::Lz4Frame => {
            let mut enc = lz4_flex::frame::FrameEncoder::new(Vec::new());
            enc.write_all(input).map_err(|e| err(codec, e))?;
            enc.finish().map_err(|e| err(codec, e))
        }
        CodecId::Zstd => zstd::bulk::compress(input, ZSTD_LEVEL).map_err(|e| err(codec, e)),
        CodecId::Deflate => {
            let mut enc = flate2::write::DeflateEncoder::new(
                Vec::new(),
                flate2::Compression::new(DEFLATE_LEVEL),
            );
            enc.write_all(input).map_err(|e| err(codec, e))?;
            enc.finish().map_err(|e| err(codec, e))
        }
    }
}

/// Decompresses `input`, which must expand to exactly `expected_len` bytes.
pub fn decompress(
    codec: CodecId,
    input: &[u8],
    expected_len: usize,
) -> Result<Vec<u8>, CodecError> {
    let out = match codec {
        CodecId::None => input.to_vec(),
        CodecId::Lz4Frame => {
            let mut dec = lz4_flex::frame::FrameDecoder::new(input);
            let mut out = Vec::with_capacity(expected_len);
            dec.read_to_end(&mut out).map_err(|e| err(codec, e))?;
            out
        }
        CodecId::Zstd => {
            zstd::bulk::decompress(input, expected_len).map_err(|e| err(codec, e))?
        }
        CodecId::Deflate => {
            let mut dec = flate2::read::DeflateDecoder::new(input);
            let mut out = Vec::with_capacity(expected_len);
            dec.read_to_end(&mut out).map_err(|e| err(codec, e))?;
            out
        }
    };
    if out.len() != expected_len {
        return Err(err(
            codec,
            format!("expanded to {} bytes, expected {expected_len}", out.len()),
        ));
    }
    Ok(out)
}
