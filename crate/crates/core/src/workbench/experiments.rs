//! Benchmark experiments and their CSV reports.
//!
//! Every experiment reports rows of `(metric, dataset, codec, param, value,
//! unit)` plus a config echo sufficient to re-run it exactly. Timings are
//! medians of wall-clock repetitions on a monotonic clock.

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use crate::chunkpipe::{self, PipelineConfig};
use crate::codec::CodecId;
use crate::columnar::Table;
use crate::flowsim::{LsmTree, TreeConfig};
use crate::ioutil::median;
use crate::partition::{split, PartitionSpec};
use crate::wire::{self, Parallelism};

use super::{gen_dataset, DatasetKind, GenProfile, WorkbenchError};

pub const EXPERIMENT_NAMES: [&str; 8] = [
    "split-overhead",
    "split-breakdown",
    "partition-sizes",
    "serde-single",
    "serde-threads",
    "chunk-throughput",
    "ratios",
    "flowsim",
];

/// LSM tree parameters for the `flowsim` experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowParams {
    pub bits: u8,
    pub depth: usize,
    pub capacity: usize,
    pub batch_rows: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            bits: 1,
            depth: 3,
            capacity: 4096,
            batch_rows: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchConfig {
    pub kind: DatasetKind,
    pub rows: usize,
    pub seed: u64,
    pub codecs: Vec<CodecId>,
    pub threads: Vec<usize>,
    pub bits: Vec<u8>,
    pub repetitions: usize,
    pub flow: FlowParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            kind: DatasetKind::Particles,
            rows: 100_000,
            seed: 42,
            codecs: vec![CodecId::None, CodecId::Lz4Frame, CodecId::Zstd, CodecId::Deflate],
            threads: vec![1, 2],
            bits: vec![1, 2, 3, 4],
            repetitions: 3,
            flow: FlowParams::default(),
        }
    }
}

impl BenchConfig {
    fn echo(&self, experiment: &str) -> String {
        let codecs: Vec<&str> = self.codecs.iter().map(|c| c.name()).collect();
        let threads: Vec<String> = self.threads.iter().map(|t| t.to_string()).collect();
        let bits: Vec<String> = self.bits.iter().map(|b| b.to_string()).collect();
        format!(
            "experiment={experiment} kind={} rows={} seed={} codecs={} threads={} bits={} reps={} flow=b{}/d{}/c{}/batch{}",
            self.kind,
            self.rows,
            self.seed,
            codecs.join("|"),
            threads.join("|"),
            bits.join("|"),
            self.repetitions,
            self.flow.bits,
            self.flow.depth,
            self.flow.capacity,
            self.flow.batch_rows,
        )
    }

    fn table(&self) -> Table {
        gen_dataset(&GenProfile {
            kind: self.kind,
            rows: self.rows,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub metric: String,
    pub dataset: String,
    pub codec: String,
    pub param: String,
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config_echo: String,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    fn new(experiment: &str, config: &BenchConfig) -> Self {
        ExperimentReport {
            experiment: experiment.to_string(),
            config_echo: config.echo(experiment),
            rows: Vec::new(),
        }
    }

    fn push(
        &mut self,
        metric: &str,
        dataset: &str,
        codec: &str,
        param: String,
        value: f64,
        unit: &str,
    ) {
        self.rows.push(ReportRow {
            metric: metric.to_string(),
            dataset: dataset.to_string(),
            codec: codec.to_string(),
            param,
            value,
            unit: unit.to_string(),
        });
    }

    /// One header row, then one line per metric; the config echo rides along
    /// in the last column of every line.
    pub fn to_csv<W: Write>(&self, writer: W) -> Result<(), WorkbenchError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["metric", "dataset", "codec", "param", "value", "unit", "config"])?;
        for row in &self.rows {
            w.write_record([
                row.metric.as_str(),
                row.dataset.as_str(),
                row.codec.as_str(),
                row.param.as_str(),
                &row.value.to_string(),
                row.unit.as_str(),
                self.config_echo.as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

// timed experiments always take the median of at least 3 runs
fn time_ms<F: FnMut()>(repetitions: usize, mut f: F) -> f64 {
    let reps = repetitions.max(3);
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        f();
        samples.push(t.elapsed().as_secs_f64() * 1e3);
    }
    median(&mut samples)
}

fn gbps(bytes: usize, ms: f64) -> f64 {
    (bytes as f64) * 8.0 / (ms / 1e3) / 1e9
}

/// Runs the named experiment and returns its report.
pub fn run_experiment(name: &str, config: &BenchConfig) -> Result<ExperimentReport, WorkbenchError> {
    match name {
        "split-overhead" => split_overhead(config),
        "split-breakdown" => split_breakdown(config),
        "partition-sizes" => partition_sizes(config),
        "serde-single" => serde_single(config),
        "serde-threads" => serde_threads(config),
        "chunk-throughput" => chunk_throughput(config),
        "ratios" => ratios(config),
        "flowsim" => flowsim_experiment(config),
        other => Err(WorkbenchError::UnknownExperiment(other.to_string())),
    }
}

/// Total unpack + partition + repack time without compression, as the
/// partition count grows.
fn split_overhead(config: &BenchConfig) -> Result<ExperimentReport, WorkbenchError> {
    let mut report = ExperimentReport::new("split-overhead", config);
    let dataset = config.kind.to_string();
    let table = config.table();
    let envelope = wire::serialize(&table, CodecId::None, Parallelism::Fixed(1))?;
    for &bits in &config.bits {
        let spec = PartitionSpec::new("id", bits)?;
        let mut failure = None;
        let ms = time_ms(config.repetitions, || {
            let run = || -> Result<(), WorkbenchError> {
                let t = wire::deserialize(&envelope)?;
                let set = split(&t, &spec)?;
                for part in &set.parts {
                    black_box(wire::serialize(part, CodecId::None, Parallelism::Fixed(1))?);
                }
                Ok(())
            };
            if let Err(e) = run() {
                failure.get_or_insert(e);
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        report.push(
            "split_total_ms",
            &dataset,
            "none",
            format!("partitions={}", 1usize << bits),
            ms,
            "ms",
        );
    }
    Ok(report)
}

/// Per-phase timing of a 4-way split under each codec.
fn split_breakdown(config: &BenchConfig) -> Result<ExperimentReport, WorkbenchError> {
    let mut report = ExperimentReport::new("split-breakdown", config);
    let dataset = config.kind.to_string();
    let table = config.table();
    let spec = PartitionSpec::new("id", 2)?;
    for &codec in &config.codecs {
        let envelope = wire::serialize(&table, codec, Parallelism::Fixed(1))?;
        let unpack_ms = time_ms(config.repetitions, || {
            black_box(wire::deserialize(&envelope).expect("own envelope"));
        });
        let set = split(&table, &spec)?;
        let partition_ms = time_ms(config.repetitions, || {
            black_box(split(&table, &spec).expect("validated spec"));
        });
        let repack_ms = time_ms(config.repetitions, || {
            for part in &set.parts {
                black_box(
                    wire::serialize(part, codec, Parallelism::Fixed(1)).expect("own table"),
                );
            }
        });
        let param = "partitions=4".to_string();
        report.push("unpack_ms", &dataset, codec.name(), param.clone(), unpack_ms, "ms");
        report.push(
            "partition_ms",
            &dataset,
            codec.name(),
            param.clone(),
            partition_ms,
            "ms",
        );
        report.push("repack_ms", &dataset, codec.name(), param, repack_ms, "ms");
    }
    Ok(report)
}

/// Serialized (Zstd) size of every partition for each bit width.
fn partition_sizes(config: &BenchConfig) -> Result<ExperimentReport, WorkbenchError> {
    let mut report = ExperimentReport::new("partition-sizes", config);
    let dataset = config.kind.to_string();
    let table = config.table();
    for &bits in &config.bits {
        let spec = PartitionSpec::new("id", bits)?;
        let mut set = split(&table, &spec)?;
        let sizes = set.compute_serialized_sizes(CodecId::Zstd, Parallelism::Fixed(1))?;
        let mut aggregate = 0usize;
        for (j, &size) in sizes.iter().enumerate() {
            aggregate += size;
            report.push(
                "partition_size_bytes",
                &dataset,
                "zstd",
                format!("bits={bits}/part={j}"),
                size as f64,
                "bytes",
            );
        }
        report.push(
            "aggregate_size_bytes",
            &dataset,
            "zstd",
            format!("bits={bits}"),
            aggregate as f64,
            "bytes",
        );
    }
    Ok(report)
}

/// Single-thread pack/unpack time per codec.
fn serde_single(config: &BenchConfig) -> Result<ExperimentReport, WorkbenchError> {
    let mut report = ExperimentReport::new("serde-single", config);
    let dataset = config.kind.to_string();
    let table = config.table();
    for &codec in &config.codecs {
        let serialize_ms = time_ms(config.repetitions, || {
            black_box(
                wire::serialize(&table, codec, Parallelism::Fixed(1)).expect("own table"),
            );
        });
        let envelope = wire::serialize(&table, codec, Parallelism::Fixed(1))?;
        let deserialize_ms = time_ms(config.repetitions, || {
            black_box(
                wire::deserialize_with(&envelope, Parallelism::Fixed(1)).expect("own envelope"),
            );
        });
        let param = "threads=1".to_string();
        report.push("serialize_ms", &dataset, codec.name(), param.clone(), serialize_ms, "ms");
        report.push("deserialize_ms", &dataset, codec.name(), param, deserialize_ms, "ms");
    }
    Ok(report)
}

/// (De)serialization throughput across worker counts. Throughput counts the
/// uncompressed envelope bytes moved per second.
fn serde_threads(config: &BenchConfig) -> Result<ExperimentReport, WorkbenchError> {
    let mut report = ExperimentReport::new("serde-threads", config);
    let dataset = config.kind.to_string();
    let table = config.table();
    let logical_bytes = wire::serialize(&table, CodecId::None, Parallelism::Fixed(1))?.len();
    for &codec in &config.codecs {
        for &threads in &config.threads {
            let p = Parallelism::Fixed(threads);
            let serialize_ms = time_ms(config.repetitions, || {
                black_box(wire::serialize(&table, codec, p).expect("own table"));
            });
            let envelope = wire::serialize(&table, codec, p)?;
            let deserialize_ms = time_ms(config.repetitions, || {
                black_box(wire::deserialize_with(&envelope, p).expect("own envelope"));
            });
            let param = format!("threads={threads}");
            report.push(
                "serialize_gbps",
                &dataset,
                codec.name(),
                param.clone(),
                gbps(logical_bytes, serialize_ms),
                "Gbps",
            );
            report.push(
                "deserialize_gbps",
                &dataset,
                codec.name(),
                param,
                gbps(logical_bytes, deserialize_ms),
                "Gbps",
            );
        }
    }
    Ok(report)
}

/// Chunked-pipeline throughput on the serialized table across worker counts.
fn chunk_throughput(config: &BenchConfig) -> Result<ExperimentReport, WorkbenchError> {
    let mut report = ExperimentReport::new("chunk-throughput", config);
    let dataset = config.kind.to_string();
    let table = config.table();
    let input = wire::serialize(&table, CodecId::None, Parallelism::Fixed(1))?;
    for &workers in &config.threads {
        let pipe_config = PipelineConfig {
            codec: CodecId::Deflate,
            workers,
            ..PipelineConfig::default()
        };
        let compress_ms = time_ms(config.repetitions, || {
            black_box(chunkpipe::compress_chunked(&input, &pipe_config).expect("own input"));
        });
        let container = chunkpipe::compress_chunked(&input, &pipe_config)?;
        let decompress_ms = time_ms(config.repetitions, || {
            black_box(chunkpipe::decompress_chunked(&container, workers).expect("own container"));
        });
        let param = format!("workers={workers}");
        report.push(
            "chunk_compress_gbps",
            &dataset,
            "deflate",
            param.clone(),
            gbps(input.len(), compress_ms),
            "Gbps",
        );
        report.push(
            "chunk_decompress_gbps",
            &dataset,
            "deflate",
            param,
            gbps(input.len(), decompress_ms),
            "Gbps",
        );
    }
    Ok(report)
}

/// Compressed/uncompressed size for inner LZ4 frame, inner Zstd, and outer
/// Deflate at one and two workers. An empty table reports 1.0 throughout.
fn ratios(config: &BenchConfig) -> Result<ExperimentReport, WorkbenchError> {
    let mut report = ExperimentReport::new("ratios", config);
    let dataset = config.kind.to_string();
    let table = config.table();
    let entries: [(&str, &str); 4] = [
        ("inner_lz4f_ratio", "lz4f"),
        ("inner_zstd_ratio", "zstd"),
        ("outer_deflate_x1_ratio", "deflate"),
        ("outer_deflate_x2_ratio", "deflate"),
    ];
    if table.nrows() == 0 {
        for (metric, codec) in entries {
            report.push(metric, &dataset, codec, "".to_string(), 1.0, "ratio");
        }
        return Ok(report);
    }
    let uncompressed = wire::serialize(&table, CodecId::None, Parallelism::Auto)?.len() as f64;
    let inner_lz4 = wire::serialize(&table, CodecId::Lz4Frame, Parallelism::Auto)?.len() as f64;
    let inner_zstd = wire::serialize(&table, CodecId::Zstd, Parallelism::Auto)?.len() as f64;
    let outer = |workers: usize| -> Result<f64, WorkbenchError> {
        let cfg = PipelineConfig {
            codec: CodecId::Deflate,
            workers,
            ..PipelineConfig::default()
        };
        Ok(chunkpipe::compress_table_outer(&table, &cfg)?.len() as f64)
    };
    let values = [
        inner_lz4 / uncompressed,
        inner_zstd / uncompressed,
        outer(1)? / uncompressed,
        outer(2)? / uncompressed,
    ];
    for ((metric, codec), value) in entries.into_iter().zip(values) {
        report.push(metric, &dataset, codec, "".to_string(), value, "ratio");
    }
    Ok(report)
}

/// Streams the dataset through an LSM tree and reports transport metrics.
fn flowsim_experiment(config: &BenchConfig) -> Result<ExperimentReport, WorkbenchError> {
    let mut report = ExperimentReport::new("flowsim", config);
    let dataset = config.kind.to_string();
    let table = config.table();
    let codec = config.codecs.first().copied().unwrap_or(CodecId::Zstd);
    let mut tree = LsmTree::new(TreeConfig {
        bits_per_level: config.flow.bits,
        depth: config.flow.depth,
        capacity: config.flow.capacity,
        codec,
    })?;
    let batch = config.flow.batch_rows.max(1);
    let mut start = 0;
    while start < table.nrows() {
        let end = (start + batch).min(table.nrows());
        let mut mask = crate::columnar::Bitmap::all_clear(table.nrows());
        for row in start..end {
            mask.set(row, true);
        }
        tree.ingest(&table.select(&mask)?)?;
        start = end;
    }
    tree.drain()?;
    let metrics = tree.metrics();
    let param = format!(
        "bits={}/depth={}/capacity={}",
        config.flow.bits, config.flow.depth, config.flow.capacity
    );
    report.push(
        "ingested_rows",
        &dataset,
        codec.name(),
        param.clone(),
        tree.ingested_rows() as f64,
        "rows",
    );
    report.push(
        "compactions",
        &dataset,
        codec.name(),
        param.clone(),
        metrics.compactions as f64,
        "count",
    );
    for (level, &bytes) in metrics.bytes_forwarded_per_level.iter().enumerate() {
        report.push(
            "bytes_forwarded",
            &dataset,
            codec.name(),
            format!("level={level}"),
            bytes as f64,
            "bytes",
        );
    }
    for (leaf, &rows) in metrics.rows_per_leaf.iter().enumerate() {
        report.push(
            "leaf_rows",
            &dataset,
            codec.name(),
            format!("leaf={leaf}"),
            rows as f64,
            "rows",
        );
    }
    Ok(report)
}

/// Longest prefix whose codec-`None` envelope fits in `byte_limit`, found by
/// binary search; zero rows when even one row would not fit.
pub fn cap_rows(table: &Table, byte_limit: usize) -> Table {
    let size_of = |n: usize| -> usize {
        wire::serialize(&table.head(n), CodecId::None, Parallelism::Fixed(1))
            .expect("own table")
            .len()
    };
    if size_of(table.nrows()) <= byte_limit {
        return table.clone();
    }
    // invariant: size(lo) <= limit < size(hi)
    if size_of(0) > byte_limit {
        return table.head(0);
    }
    let (mut lo, mut hi) = (0usize, table.nrows());
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if size_of(mid) <= byte_limit {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    table.head(lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> BenchConfig {
        BenchConfig {
            rows: 2_000,
            repetitions: 1,
            threads: vec![1, 2],
            ..BenchConfig::default()
        }
    }

    #[test]
    fn unknown_experiment_is_an_error() {
        let err = run_experiment("nope", &tiny_config()).unwrap_err();
        assert!(matches!(err, WorkbenchError::UnknownExperiment(_)));
    }

    #[test]
    fn every_experiment_produces_rows_and_csv() {
        let config = tiny_config();
        for name in EXPERIMENT_NAMES {
            let report = run_experiment(name, &config).unwrap();
            assert!(!report.rows.is_empty(), "{name} produced no rows");
            let mut csv_bytes = Vec::new();
            report.to_csv(&mut csv_bytes).unwrap();
            let text = String::from_utf8(csv_bytes).unwrap();
            let mut lines = text.lines();
            assert_eq!(
                lines.next().unwrap(),
                "metric,dataset,codec,param,value,unit,config"
            );
            assert_eq!(lines.count(), report.rows.len());
            assert!(report.config_echo.contains(&format!("experiment={name}")));
        }
    }

    #[test]
    fn ratios_on_empty_table_follow_the_convention() {
        let config = BenchConfig {
            rows: 0,
            repetitions: 1,
            ..BenchConfig::default()
        };
        let report = run_experiment("ratios", &config).unwrap();
        assert_eq!(report.rows.len(), 4);
        assert!(report.rows.iter().all(|r| r.value == 1.0));
    }

    #[test]
    fn split_breakdown_unpack_is_faster_without_compression() {
        // needs enough data for the codec cost to dominate timer noise
        let config = BenchConfig {
            rows: 60_000,
            repetitions: 3,
            codecs: vec![CodecId::None, CodecId::Zstd],
            ..BenchConfig::default()
        };
        let report = run_experiment("split-breakdown", &config).unwrap();
        let unpack = |codec: &str| {
            report
                .rows
                .iter()
                .find(|r| r.metric == "unpack_ms" && r.codec == codec)
                .unwrap()
                .value
        };
        assert!(
            unpack("none") < unpack("zstd"),
            "none={} zstd={}",
            unpack("none"),
            unpack("zstd")
        );
    }

    #[test]
    fn planes_partition_sizes_are_balanced() {
        let config = BenchConfig {
            kind: DatasetKind::Planes,
            rows: 100_000,
            repetitions: 1,
            ..BenchConfig::default()
        };
        let report = run_experiment("partition-sizes", &config).unwrap();
        for bits in 1..=4u8 {
            let sizes: Vec<f64> = report
                .rows
                .iter()
                .filter(|r| {
                    r.metric == "partition_size_bytes"
                        && r.param.starts_with(&format!("bits={bits}/"))
                })
                .map(|r| r.value)
                .collect();
            assert_eq!(sizes.len(), 1 << bits);
            let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
            for (j, s) in sizes.iter().enumerate() {
                let deviation = (s - mean).abs() / mean;
                assert!(
                    deviation <= 0.05,
                    "bits={bits} part={j}: {s} vs mean {mean} off by {:.2}%",
                    deviation * 100.0
                );
            }
        }
    }

    #[test]
    fn cap_rows_boundaries() {
        let table = gen_dataset(&GenProfile {
            kind: DatasetKind::Particles,
            rows: 1_000,
            seed: 5,
        });
        let full = wire::serialize(&table, CodecId::None, Parallelism::Fixed(1))
            .unwrap()
            .len();
        assert_eq!(cap_rows(&table, full).nrows(), 1_000);
        assert_eq!(cap_rows(&table, full + 10).nrows(), 1_000);

        let empty = wire::serialize(&table.head(0), CodecId::None, Parallelism::Fixed(1))
            .unwrap()
            .len();
        assert_eq!(cap_rows(&table, empty).nrows(), 0);

        let half = wire::serialize(&table.head(500), CodecId::None, Parallelism::Fixed(1))
            .unwrap()
            .len();
        assert_eq!(cap_rows(&table, half).nrows(), 500);
        assert_eq!(cap_rows(&table, half - 1).nrows(), 499);
    }
}
