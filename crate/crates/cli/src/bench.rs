//! The `bench` command: ingest a synthetic stream, sample resident
//! token-storage bytes at a fixed cadence, and compare the sparse memory
//! against a keep-everything dense baseline.
//!
//! "Memory" here is the f32 token payload resident in the two memories, not
//! process or GPU memory: it isolates what the consolidation mechanism
//! itself stores. Every sampled row is checked against the closed-form
//! schedule before anything is written.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use tokmem::config::StreamConfig;
use tokmem::error::Error;
use tokmem::stream::{generate_synthetic, MemoryPipeline, SyntheticSceneSpec};

use crate::args::BenchArgs;
use crate::report_error;

pub const MEASUREMENT_NOTE: &str = "resident memory measured as token-storage bytes \
(float32 payload), not GPU or process memory";

/// One sampled point of the growth comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CheckpointRow {
    pub frames_ingested: u64,
    pub resident_token_bytes_sparse: u64,
    pub resident_token_bytes_dense_baseline: u64,
    pub flush_count: u64,
}

/// The full growth comparison: sampled rows plus amortized per-frame costs.
#[derive(Debug, Clone)]
pub struct MemoryCostReport {
    pub rows: Vec<CheckpointRow>,
    /// Steady-state sparse cost: consolidated bytes per flush divided by the
    /// frames each flush consumes.
    pub amortized_bytes_per_frame_sparse: f64,
    /// Cost of retaining every raw token: N * D * 4 per frame.
    pub bytes_per_frame_dense: u64,
    pub flushes: u64,
}

impl MemoryCostReport {
    pub fn write_csv(
        &self,
        path: &Path,
        config: &StreamConfig,
        args: &BenchArgs,
    ) -> Result<(), Error> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "# {MEASUREMENT_NOTE}")?;
        writeln!(
            out,
            "# tokens_per_frame={} feature_dim={} short_capacity={} consolidated_capacity={} \
             window_size={} frames={} checkpoint_every={} seed={} scenes={} noise={}",
            config.tokens_per_frame,
            config.feature_dim,
            config.short_capacity,
            config.consolidated_capacity,
            config.window_size,
            args.frames,
            args.checkpoint_every,
            args.seed,
            args.scenes,
            args.noise,
        )?;
        writeln!(
            out,
            "frames_ingested,resident_token_bytes_sparse,resident_token_bytes_dense_baseline,flush_count"
        )?;
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                row.frames_ingested,
                row.resident_token_bytes_sparse,
                row.resident_token_bytes_dense_baseline,
                row.flush_count
            )?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_json(
        &self,
        path: &Path,
        config: &StreamConfig,
        args: &BenchArgs,
    ) -> Result<(), Error> {
        let doc = serde_json::json!({
            "note": MEASUREMENT_NOTE,
            "config": {
                "tokens_per_frame": config.tokens_per_frame,
                "feature_dim": config.feature_dim,
                "window_size": config.window_size,
                "short_capacity": config.short_capacity,
                "consolidated_capacity": config.consolidated_capacity,
                "frames": args.frames,
                "checkpoint_every": args.checkpoint_every,
                "seed": args.seed,
                "scenes": args.scenes,
                "noise": args.noise,
            },
            "summary": {
                "flushes": self.flushes,
                "amortized_bytes_per_frame_sparse": self.amortized_bytes_per_frame_sparse,
                "bytes_per_frame_dense": self.bytes_per_frame_dense,
                "reduction_factor_amortized":
                    self.bytes_per_frame_dense as f64 / self.amortized_bytes_per_frame_sparse,
                "final_resident_bytes_sparse":
                    self.rows.last().map(|r| r.resident_token_bytes_sparse),
                "final_total_bytes_dense":
                    self.rows.last().map(|r| r.resident_token_bytes_dense_baseline),
            },
            "checkpoints": self.rows,
        });
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| Error::Malformed {
            detail: e.to_string(),
        })?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }
}

/// Closed-form resident sparse bytes after `frames` pushes: the short buffer
/// holds `frames - K*flushes` raw frames and long-term memory holds
/// `consolidated_capacity` tokens per flush.
fn analytic_sparse_bytes(config: &StreamConfig, frames: u64) -> u64 {
    let k = config.short_capacity as u64;
    let flushes = if frames == 0 { 0 } else { (frames - 1) / k };
    let short_tokens = (frames - k * flushes) * config.tokens_per_frame as u64;
    let long_tokens = flushes * config.consolidated_capacity as u64;
    (short_tokens + long_tokens) * config.feature_dim as u64 * 4
}

fn dense_bytes(config: &StreamConfig, frames: u64) -> u64 {
    frames * config.tokens_per_frame as u64 * config.feature_dim as u64 * 4
}

pub fn cmd_bench(args: BenchArgs) -> i32 {
    let config = args.config.clone();
    let spec = SyntheticSceneSpec {
        scene_count: args.scenes,
        frames_per_scene: (args.frames as usize).div_ceil(args.scenes),
        noise_sigma: args.noise,
        seed: args.seed,
    };
    let mut pipeline = match MemoryPipeline::new(&config) {
        Ok(p) => p,
        Err(e) => return report_error(&e, None),
    };
    let source = match generate_synthetic(&spec, &config) {
        Ok(stream) => stream.take(args.frames as usize),
        Err(e) => return report_error(&e, None),
    };

    let started = Instant::now();
    let mut rows: Vec<CheckpointRow> = Vec::new();
    let mut record = |pipeline: &MemoryPipeline| {
        let frames = pipeline.frames_ingested();
        let measured = pipeline.resident_token_bytes();
        // The measured bytes must match the flush schedule exactly; a
        // mismatch means the mechanism itself misbehaved.
        assert_eq!(
            measured,
            analytic_sparse_bytes(&config, frames),
            "resident bytes diverged from the analytic schedule at frame {frames}"
        );
        rows.push(CheckpointRow {
            frames_ingested: frames,
            resident_token_bytes_sparse: measured,
            resident_token_bytes_dense_baseline: dense_bytes(&config, frames),
            flush_count: pipeline.flushes(),
        });
    };

    for frame in source {
        let ordinal = pipeline.frames_ingested() + 1;
        if let Err(e) = pipeline.ingest(frame) {
            return report_error(&e, Some(ordinal));
        }
        if ordinal % args.checkpoint_every == 0 {
            record(&pipeline);
        }
    }
    if pipeline.frames_ingested() % args.checkpoint_every != 0 {
        record(&pipeline);
    }
    let elapsed = started.elapsed();

    let report = MemoryCostReport {
        rows,
        amortized_bytes_per_frame_sparse: config.consolidated_capacity as f64
            * config.feature_dim as f64
            * 4.0
            / config.short_capacity as f64,
        bytes_per_frame_dense: config.tokens_per_frame as u64 * config.feature_dim as u64 * 4,
        flushes: pipeline.flushes(),
    };
    if let Err(e) = report.write_csv(&args.csv, &config, &args) {
        return report_error(&e, None);
    }
    if let Err(e) = report.write_json(&args.json, &config, &args) {
        return report_error(&e, None);
    }

    let stdout_report = serde_json::json!({
        "frames": pipeline.frames_ingested(),
        "flushes": pipeline.flushes(),
        "merges": pipeline.merges(),
        "elapsed_ms": elapsed.as_secs_f64() * 1e3,
        "amortized_bytes_per_frame_sparse": report.amortized_bytes_per_frame_sparse,
        "bytes_per_frame_dense": report.bytes_per_frame_dense,
        "csv": args.csv.display().to_string(),
        "json": args.json.display().to_string(),
    });
    println!("{stdout_report}");
    0
}
