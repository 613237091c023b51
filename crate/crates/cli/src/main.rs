//! `pflow`: generate particle tables, split them by ID bits, and run the
//! benchmark experiments.
//!
//! Table files come in two flavours, chosen by extension: `.ptbl` holds one
//! envelope with per-buffer ("inner") compression, `.pchk` holds a chunked
//! container whose payload is an uncompressed envelope ("outer"
//! compression).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use pflow_core::chunkpipe::{self, PipelineConfig};
use pflow_core::partition::{skew, split, NullPolicy, PartitionSpec};
use pflow_core::wire::{self, Parallelism};
use pflow_core::workbench::{
    gen_dataset, run_experiment, BenchConfig, DatasetKind, FlowParams, GenProfile,
    EXPERIMENT_NAMES,
};
use pflow_core::{CodecId, Table};

#[derive(Parser)]
#[command(name = "pflow", version, about = "Particle data-flow workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write it as a table file.
    Gen {
        /// Dataset shape: particles | planes | ships
        #[arg(long)]
        kind: DatasetKind,
        #[arg(long)]
        rows: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Codec for .ptbl output: none | lz4f | zstd | deflate
        #[arg(long, default_value = "none")]
        codec: CodecId,
        /// Output path; .ptbl writes an envelope, .pchk an outer container
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a table file into 2^bits partitions by particle-ID bits.
    Split {
        /// Input table file (.ptbl or .pchk)
        #[arg(long = "in")]
        input: PathBuf,
        /// Number of low ID bits to split on (1-4)
        #[arg(long)]
        bits: u8,
        /// Mix IDs through a 64-bit finalizer before masking
        #[arg(long)]
        hash: bool,
        /// Route rows with null IDs to partition 0 instead of failing
        #[arg(long)]
        route_null_to_zero: bool,
        /// Field holding the particle ID
        #[arg(long, default_value = "id")]
        id_field: String,
        /// Codec for the partition files
        #[arg(long, default_value = "none")]
        codec: CodecId,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run a benchmark experiment and write its CSV report.
    #[command(after_help = format!("Experiments: {}", EXPERIMENT_NAMES.join(", ")))]
    Bench {
        /// One of the experiment names listed below
        experiment: String,
        #[arg(long, default_value = "particles")]
        kind: DatasetKind,
        #[arg(long, default_value_t = 100_000)]
        rows: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Comma-separated codec list
        #[arg(long, default_value = "none,lz4f,zstd,deflate")]
        codecs: String,
        /// Comma-separated worker counts
        #[arg(long, default_value = "1,2")]
        threads: String,
        /// Comma-separated partition bit widths
        #[arg(long, default_value = "1,2,3,4")]
        bits: String,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Report output path
        #[arg(long)]
        csv: PathBuf,
    },
    /// Stream a dataset through the LSM flow simulator and report metrics.
    Flowsim {
        #[arg(long, default_value_t = 100_000)]
        rows: usize,
        #[arg(long, default_value = "particles")]
        kind: DatasetKind,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// ID bits consumed per tree level
        #[arg(long, default_value_t = 1)]
        bits: u8,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        /// Buffered rows per element before compaction
        #[arg(long, default_value_t = 4096)]
        capacity: usize,
        /// Codec for inter-element envelopes
        #[arg(long, default_value = "zstd")]
        codec: CodecId,
        /// Rows per ingested batch
        #[arg(long, default_value_t = 1024)]
        batch: usize,
        #[arg(long)]
        csv: PathBuf,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn read_table(path: &Path) -> Result<Table> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let table = if path.extension().is_some_and(|e| e == "pchk") {
        chunkpipe::read_table_outer(&bytes, 2)?
    } else {
        wire::deserialize(&bytes)?
    };
    Ok(table)
}

fn write_table(table: &Table, codec: CodecId, path: &Path) -> Result<usize> {
    let bytes = if path.extension().is_some_and(|e| e == "pchk") {
        let config = PipelineConfig {
            codec: if codec == CodecId::None { CodecId::Deflate } else { codec },
            ..PipelineConfig::default()
        };
        chunkpipe::compress_table_outer(table, &config)?
    } else {
        wire::serialize(table, codec, Parallelism::Auto)?
    };
    std::fs::write(path, &bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(bytes.len())
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Result<Vec<T>, _> = raw.split(',').map(|s| s.trim().parse::<T>()).collect();
    match items {
        Ok(v) if !v.is_empty() => Ok(v),
        Ok(_) => bail!("empty {what} list"),
        Err(e) => bail!("invalid {what} list `{raw}`: {e}"),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            kind,
            rows,
            seed,
            codec,
            out,
        } => {
            let table = gen_dataset(&GenProfile { kind, rows, seed });
            let bytes = write_table(&table, codec, &out)?;
            println!(
                "wrote {} ({} rows, {} columns, {} bytes)",
                out.display(),
                table.nrows(),
                table.schema().len(),
                bytes
            );
        }
        Command::Split {
            input,
            bits,
            hash,
            route_null_to_zero,
            id_field,
            codec,
            out_dir,
        } => {
            let table = read_table(&input)?;
            let mut spec = PartitionSpec::new(id_field, bits)?.with_hash(hash);
            if route_null_to_zero {
                spec = spec.with_null_policy(NullPolicy::RouteToZero);
            }
            let set = split(&table, &spec)?;
            std::fs::create_dir_all(&out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))?;
            let ext = if input.extension().is_some_and(|e| e == "pchk") {
                "pchk"
            } else {
                "ptbl"
            };
            for (j, part) in set.parts.iter().enumerate() {
                let path = out_dir.join(format!("part-{j:02}.{ext}"));
                let bytes = write_table(part, codec, &path)?;
                println!(
                    "part {j}: {} rows, {} bytes -> {}",
                    part.nrows(),
                    bytes,
                    path.display()
                );
            }
            println!("skew: {:.4}", skew(&set.counts)?);
        }
        Command::Bench {
            experiment,
            kind,
            rows,
            seed,
            codecs,
            threads,
            bits,
            reps,
            csv,
        } => {
            let config = BenchConfig {
                kind,
                rows,
                seed,
                codecs: parse_list(&codecs, "codec")?,
                threads: parse_list(&threads, "thread")?,
                bits: parse_list(&bits, "bits")?,
                repetitions: reps,
                flow: FlowParams::default(),
            };
            let report = run_experiment(&experiment, &config)?;
            let file = std::fs::File::create(&csv)
                .with_context(|| format!("creating {}", csv.display()))?;
            report.to_csv(file)?;
            println!(
                "{}: {} metric rows -> {}",
                report.experiment,
                report.rows.len(),
                csv.display()
            );
        }
        Command::Flowsim {
            rows,
            kind,
            seed,
            bits,
            depth,
            capacity,
            codec,
            batch,
            csv,
        } => {
            let config = BenchConfig {
                kind,
                rows,
                seed,
                codecs: vec![codec],
                flow: FlowParams {
                    bits,
                    depth,
                    capacity,
                    batch_rows: batch,
                },
                ..BenchConfig::default()
            };
            let report = run_experiment("flowsim", &config)?;
            let file = std::fs::File::create(&csv)
                .with_context(|| format!("creating {}", csv.display()))?;
            report.to_csv(file)?;
            println!(
                "flowsim: {} metric rows -> {}",
                report.rows.len(),
                csv.display()
            );
        }
    }
    Ok(())
}
