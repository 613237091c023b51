//! Chunked compression pipeline emulating a packet-granular accelerator.
//!
//! Input buffers are sliced into segments of at most 64 KiB, each segment is
//! compressed independently by a worker pool, and the results are framed into
//! a container. A bounded outstanding-data window caps the uncompressed bytes
//! of submitted-but-incomplete chunks, emulating the accelerator's limited
//! on-device memory. Because chunks share no history, container bytes are a
//! pure function of (input, codec, chunk_size) — worker count and window only
//! change scheduling.
//!
//! Container layout, little-endian:
//!
//! ```text
//! magic "PCHK" | version u16 | codec u8 | chunk_size u32
//! total_uncompressed u64 | crc32 u32 (CRC-32/IEEE of the uncompressed bytes)
//! chunk_count u32
//! per chunk: raw_flag u8 | stored_len u32 | payload
//! ```

mod pipeline;

pub use pipeline::{JobStatus, JobTicket, Pipeline};

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Instant;

use thiserror::Error;

use crate::codec::{self, CodecError, CodecId};
use crate::columnar::Table;
use crate::ioutil::{median, run_tasks, splitmix64_next, Reader};
use crate::wire::{self, Parallelism, WireError};

pub const CONTAINER_MAGIC: [u8; 4] = *b"PCHK";
pub const CONTAINER_VERSION: u16 = 1;
pub const MIN_CHUNK_SIZE: usize = 4096;
/// Hard segment limit of the emulated accelerator.
pub const MAX_CHUNK_SIZE: usize = 65536;
pub const DEFAULT_CHUNK_SIZE: usize = 65536;
/// Default outstanding-data window: 160 MiB.
pub const DEFAULT_WINDOW: usize = 167_772_160;

#[derive(Debug, Error)]
pub enum ChunkError {
    #[error("chunk size {0} outside [{MIN_CHUNK_SIZE}, {MAX_CHUNK_SIZE}]")]
    BadChunkSize(usize),
    #[error("window of {window} bytes is smaller than one chunk ({chunk_size} bytes)")]
    WindowTooSmall { window: usize, chunk_size: usize },
    #[error("pipeline needs at least one worker")]
    NoWorkers,
    #[error("bad magic: not a chunked container")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown codec byte {0}")]
    UnknownCodec(u8),
    #[error("container truncated: {0}")]
    Truncated(&'static str),
    #[error("invalid container: {0}")]
    InvalidContainer(&'static str),
    #[error("crc mismatch: stored {expected:08x}, computed {actual:08x}")]
    CrcMismatch { expected: u32, actual: u32 },
    #[error("codec failure on chunk {chunk}: {source}")]
    CodecFailure {
        chunk: usize,
        #[source]
        source: CodecError,
    },
    #[error("pipeline is shut down")]
    PipelineShutdown,
    #[error("job failed: {0}")]
    JobFailed(#[source] Box<ChunkError>),
    #[error("job result was already taken")]
    ResultTaken,
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// Slicing of `[0, input_len)` into contiguous chunk ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPlan {
    ranges: Vec<(usize, usize)>,
    chunk_size: usize,
}

impl ChunkPlan {
    pub fn ranges(&self) -> &[(usize, usize)] {
        &self.ranges
    }

    pub fn chunk_count(&self) -> usize {
        self.ranges.len()
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }
}

/// Splits `input_len` bytes into `ceil(input_len / chunk_size)` ranges; every
/// range is `chunk_size` long except possibly the last.
pub fn plan_chunks(input_len: usize, chunk_size: usize) -> Result<ChunkPlan, ChunkError> {
    if !(MIN_CHUNK_SIZE..=MAX_CHUNK_SIZE).contains(&chunk_size) {
        return Err(ChunkError::BadChunkSize(chunk_size));
    }
    let mut ranges = Vec::with_capacity(input_len.div_ceil(chunk_size));
    let mut start = 0;
    while start < input_len {
        let end = (start + chunk_size).min(input_len);
        ranges.push((start, end));
        start = end;
    }
    Ok(ChunkPlan { ranges, chunk_size })
}

/// Pipeline parameters. `workers` is the pool size; `window` bounds the sum
/// of uncompressed bytes of in-flight chunks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    pub codec: CodecId,
    pub chunk_size: usize,
    pub workers: usize,
    pub window: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            codec: CodecId::Deflate,
            chunk_size: DEFAULT_CHUNK_SIZE,
            workers: 1,
            window: DEFAULT_WINDOW,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ChunkError> {
        if !(MIN_CHUNK_SIZE..=MAX_CHUNK_SIZE).contains(&self.chunk_size) {
            return Err(ChunkError::BadChunkSize(self.chunk_size));
        }
        if self.window < self.chunk_size {
            return Err(ChunkError::WindowTooSmall {
                window: self.window,
                chunk_size: self.chunk_size,
            });
        }
        if self.workers == 0 {
            return Err(ChunkError::NoWorkers);
        }
        Ok(())
    }
}

/// Scheduler instrumentation from one compression run.
#[derive(Debug, Clone, Copy, Default)]
pub struct PipelineStats {
    /// Peak sum of uncompressed bytes of submitted-but-incomplete chunks.
    pub max_in_flight: usize,
    pub chunk_count: usize,
}

/// Outstanding-data accounting: submission blocks while the window is full.
struct WindowGauge {
    window: usize,
    state: Mutex<(usize, usize)>, // (in_flight, max_seen)
    cv: Condvar,
}

impl WindowGauge {
    fn new(window: usize) -> Self {
        WindowGauge {
            window,
            state: Mutex::new((0, 0)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self, n: usize) {
        let mut st = self.state.lock().unwrap();
        while st.0 + n > self.window {
            st = self.cv.wait(st).unwrap();
        }
        st.0 += n;
        st.1 = st.1.max(st.0);
    }

    fn release(&self, n: usize) {
        let mut st = self.state.lock().unwrap();
        st.0 -= n;
        self.cv.notify_all();
    }

    fn max_seen(&self) -> usize {
        self.state.lock().unwrap().1
    }
}

/// Compression outcome for one chunk: `None` payload means "store raw".
type PackedChunk = Result<Option<Vec<u8>>, CodecError>;

fn pack_chunk(codec: CodecId, chunk: &[u8]) -> PackedChunk {
    if codec == CodecId::None {
        return Ok(None);
    }
    let packed = codec::compress(codec, chunk)?;
    if packed.len() >= chunk.len() {
        Ok(None)
    } else {
        Ok(Some(packed))
    }
}

/// Compresses `input` into a framed container of independent chunks.
pub fn compress_chunked(input: &[u8], config: &PipelineConfig) -> Result<Vec<u8>, ChunkError> {
    Ok(compress_chunked_with_stats(input, config)?.0)
}

/// [`compress_chunked`] plus scheduler instrumentation.
pub fn compress_chunked_with_stats(
    input: &[u8],
    config: &PipelineConfig,
) -> Result<(Vec<u8>, PipelineStats), ChunkError> {
    config.validate()?;
    let plan = plan_chunks(input.len(), config.chunk_size)?;
    let chunks = plan.chunk_count();

    let gauge = WindowGauge::new(config.window);
    let results: Mutex<Vec<Option<PackedChunk>>> =
        Mutex::new((0..chunks).map(|_| None).collect());

    if chunks > 0 {
        // Dispatcher submits chunk indices under the window budget; workers
        // pop, compress, and release their budget on completion.
        let queue: Mutex<(VecDeque<usize>, bool)> = Mutex::new((VecDeque::new(), false));
        let cv = Condvar::new();
        std::thread::scope(|scope| {
            for _ in 0..config.workers.min(chunks) {
                scope.spawn(|| loop {
                    let idx = {
                        let mut q = queue.lock().unwrap();
                        loop {
                            if let Some(i) = q.0.pop_front() {
                                break i;
                            }
                            if q.1 {
                                return;
                            }
                            q = cv.wait(q).unwrap();
                        }
                    };
                    let (start, end) = plan.ranges()[idx];
                    let out = pack_chunk(config.codec, &input[start..end]);
                    results.lock().unwrap()[idx] = Some(out);
                    gauge.release(end - start);
                });
            }
            for (idx, &(start, end)) in plan.ranges().iter().enumerate() {
                gauge.acquire(end - start);
                queue.lock().unwrap().0.push_back(idx);
                cv.notify_one();
            }
            queue.lock().unwrap().1 = true;
            cv.notify_all();
        });
    }

    let crc = crc32fast::hash(input);
    let mut out = Vec::with_capacity(27 + input.len() / 2 + chunks * 5);
    out.extend_from_slice(&CONTAINER_MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.push(config.codec.as_byte());
    out.extend_from_slice(&(config.chunk_size as u32).to_le_bytes());
    out.extend_from_slice(&(input.len() as u64).to_le_bytes());
    out.extend_from_slice(&crc.to_le_bytes());
    out.extend_from_slice(&(chunks as u32).to_le_bytes());

    let packed = results.into_inner().unwrap();
    for (idx, (slot, &(start, end))) in packed.into_iter().zip(plan.ranges()).enumerate() {
        let slot = slot.expect("every chunk completed");
        let packed = slot.map_err(|source| ChunkError::CodecFailure { chunk: idx, source })?;
        let (raw_flag, payload): (u8, &[u8]) = match &packed {
            None => (1, &input[start..end]),
            Some(p) => (0, p),
        };
        out.push(raw_flag);
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(payload);
    }

    let stats = PipelineStats {
        max_in_flight: gauge.max_seen(),
        chunk_count: chunks,
    };
    Ok((out, stats))
}

/// Decompresses a container produced by [`compress_chunked`], verifying chunk
/// lengths and the whole-stream CRC-32.
pub fn decompress_chunked(container: &[u8], workers: usize) -> Result<Vec<u8>, ChunkError> {
    let mut r = Reader::new(container);
    if r.take(4).ok_or(ChunkError::Truncated("magic"))? != CONTAINER_MAGIC {
        return Err(ChunkError::BadMagic);
    }
    let version = r.u16().ok_or(ChunkError::Truncated("version"))?;
    if version != CONTAINER_VERSION {
        return Err(ChunkError::UnsupportedVersion(version));
    }
    let codec_byte = r.u8().ok_or(ChunkError::Truncated("codec"))?;
    let codec = CodecId::from_byte(codec_byte).ok_or(ChunkError::UnknownCodec(codec_byte))?;
    let chunk_size = r.u32().ok_or(ChunkError::Truncated("chunk size"))? as usize;
    let total = r.u64().ok_or(ChunkError::Truncated("total length"))? as usize;
    let crc_stored = r.u32().ok_or(ChunkError::Truncated("crc"))?;
    let chunk_count = r.u32().ok_or(ChunkError::Truncated("chunk count"))? as usize;

    let plan = plan_chunks(total, chunk_size)
        .map_err(|_| ChunkError::InvalidContainer("chunk size out of range"))?;
    if plan.chunk_count() != chunk_count {
        return Err(ChunkError::InvalidContainer(
            "chunk count inconsistent with total length",
        ));
    }

    let mut stored: Vec<(bool, &[u8])> = Vec::with_capacity(chunk_count);
    for _ in 0..chunk_count {
        let raw_flag = r.u8().ok_or(ChunkError::Truncated("chunk flag"))?;
        if raw_flag > 1 {
            return Err(ChunkError::InvalidContainer("raw flag must be 0 or 1"));
        }
        let stored_len = r.u32().ok_or(ChunkError::Truncated("chunk length"))? as usize;
        let payload = r.take(stored_len).ok_or(ChunkError::Truncated("chunk payload"))?;
        stored.push((raw_flag == 1, payload));
    }
    if r.pos != container.len() {
        return Err(ChunkError::InvalidContainer("trailing bytes"));
    }

    let inputs: Vec<&[u8]> = stored.iter().map(|&(_, p)| p).collect();
    let unpacked = run_tasks(&inputs, workers.max(1), |i, payload| {
        let (start, end) = plan.ranges()[i];
        let expected = end - start;
        if stored[i].0 {
            if payload.len() != expected {
                return Err(CodecError {
                    codec,
                    detail: format!(
                        "raw chunk has {} bytes, expected {expected}",
                        payload.len()
                    ),
                });
            }
            Ok(payload.to_vec())
        } else {
            codec::decompress(codec, payload, expected)
        }
    });

    let mut out = Vec::with_capacity(total);
    for (i, piece) in unpacked.into_iter().enumerate() {
        out.extend_from_slice(
            &piece.map_err(|source| ChunkError::CodecFailure { chunk: i, source })?,
        );
    }
    let crc_actual = crc32fast::hash(&out);
    if crc_actual != crc_stored {
        return Err(ChunkError::CrcMismatch {
            expected: crc_stored,
            actual: crc_actual,
        });
    }
    Ok(out)
}

/// Writes a table in "outer" form: a container whose uncompressed payload is
/// a codec-`None` envelope. This is the accelerator-offload path, compressing
/// the serialized stream rather than individual buffers.
pub fn compress_table_outer(table: &Table, config: &PipelineConfig) -> Result<Vec<u8>, ChunkError> {
    let envelope = wire::serialize(table, CodecId::None, Parallelism::Fixed(config.workers))?;
    compress_chunked(&envelope, config)
}

/// Reads a table written by [`compress_table_outer`].
pub fn read_table_outer(bytes: &[u8], workers: usize) -> Result<Table, ChunkError> {
    let envelope = decompress_chunked(bytes, workers)?;
    Ok(wire::deserialize_with(&envelope, Parallelism::Fixed(workers))?)
}

/// Deterministic, moderately compressible test input: three of every four
/// 8-byte words come from a 16-word dictionary, the fourth is raw PRNG
/// output.
pub fn probe_input(len: usize, seed: u64) -> Vec<u8> {
    let mut state = seed;
    let mut dict = [0u64; 16];
    for word in dict.iter_mut() {
        *word = splitmix64_next(&mut state);
    }
    let mut out = Vec::with_capacity(len + 8);
    let mut i = 0u64;
    while out.len() < len {
        let r = splitmix64_next(&mut state);
        let word = if i % 4 == 3 {
            r
        } else {
            dict[(r >> 60) as usize]
        };
        out.extend_from_slice(&word.to_le_bytes());
        i += 1;
    }
    out.truncate(len);
    out
}

const PROBE_SEED: u64 = 0x70666c6f77; // "pflow"

/// Median compress/decompress throughput in Gbps over `repetitions` runs on
/// deterministic input of `input_len` bytes.
pub fn throughput_probe(
    input_len: usize,
    config: &PipelineConfig,
    repetitions: usize,
) -> Result<(f64, f64), ChunkError> {
    config.validate()?;
    let input = probe_input(input_len, PROBE_SEED);
    let bits = (input_len as f64) * 8.0;
    let mut compress_gbps = Vec::new();
    let mut decompress_gbps = Vec::new();
    for _ in 0..repetitions.max(1) {
        let t = Instant::now();
        let container = compress_chunked(&input, config)?;
        compress_gbps.push(bits / t.elapsed().as_secs_f64() / 1e9);

        let t = Instant::now();
        let out = decompress_chunked(&container, config.workers)?;
        decompress_gbps.push(bits / t.elapsed().as_secs_f64() / 1e9);
        std::hint::black_box(out);
    }
    Ok((median(&mut compress_gbps), median(&mut decompress_gbps)))
}
