//! Stream sources and the ingest loop: binary token-stream files, a
//! synthetic generator with controllable scene structure, and the windowed
//! driver that feeds frames through short-term memory into consolidation.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::StreamConfig;
use crate::error::{Error, Result};
use crate::long_memory::{consolidate, LongTermMemory};
use crate::short_memory::{FlushSignal, ShortTermMemory};
use crate::token::{FrameTokens, Token};

/// Magic bytes of the token-stream file format.
pub const STREAM_MAGIC: [u8; 4] = *b"MCTS";
/// Only format version written and understood.
pub const STREAM_VERSION: u32 = 1;
/// Header: magic + version + frame_count + tokens_per_frame + feature_dim.
pub const STREAM_HEADER_BYTES: u64 = 20;

// ── Token-stream files ──────────────────────────────────────────────────────

/// Parsed header of a token-stream file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenStreamHeader {
    pub version: u32,
    pub frame_count: u32,
    pub tokens_per_frame: u32,
    pub feature_dim: u32,
}

/// Streaming reader over a token-stream file. Holds one frame of payload at
/// a time; never materializes the file.
pub struct TokenStreamReader {
    reader: BufReader<File>,
    header: TokenStreamHeader,
    next_frame: u64,
}

impl TokenStreamReader {
    /// Open and validate a stream against the expected shape. The declared
    /// frame count must match the payload length exactly.
    pub fn open(path: impl AsRef<Path>, config: &StreamConfig) -> Result<Self> {
        let file = File::open(&path)?;
        let file_len = file.metadata()?.len();
        let mut reader = BufReader::new(file);
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic)?;
        if magic != STREAM_MAGIC {
            return Err(Error::BadMagic {
                expected: STREAM_MAGIC,
                found: magic,
            });
        }
        let mut word = [0u8; 4];
        let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
            r.read_exact(&mut word)?;
            Ok(u32::from_le_bytes(word))
        };
        let version = read_u32(&mut reader)?;
        if version != STREAM_VERSION {
            return Err(Error::UnsupportedVersion { found: version });
        }
        let frame_count = read_u32(&mut reader)?;
        let tokens_per_frame = read_u32(&mut reader)?;
        let feature_dim = read_u32(&mut reader)?;
        if tokens_per_frame as usize != config.tokens_per_frame {
            return Err(Error::DimensionMismatch {
                expected: config.tokens_per_frame,
                actual: tokens_per_frame as usize,
            });
        }
        if feature_dim as usize != config.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: config.feature_dim,
                actual: feature_dim as usize,
            });
        }
        let expected_len = STREAM_HEADER_BYTES
            + frame_count as u64 * tokens_per_frame as u64 * feature_dim as u64 * 4;
        if file_len != expected_len {
            return Err(Error::TruncatedPayload {
                expected: expected_len,
                actual: file_len,
            });
        }
        Ok(TokenStreamReader {
            reader,
            header: TokenStreamHeader {
                version,
                frame_count,
                tokens_per_frame,
                feature_dim,
            },
            next_frame: 0,
        })
    }

    pub fn header(&self) -> TokenStreamHeader {
        self.header
    }

    fn read_frame(&mut self) -> Result<FrameTokens> {
        let n = self.header.tokens_per_frame as usize;
        let d = self.header.feature_dim as usize;
        let mut buf = vec![0u8; d * 4];
        let mut tokens = Vec::with_capacity(n);
        for _ in 0..n {
            self.reader.read_exact(&mut buf)?;
            let values: Vec<f32> = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tokens.push(Token::new(values)?);
        }
        let frame = FrameTokens::raw(self.next_frame, tokens)?;
        self.next_frame += 1;
        Ok(frame)
    }
}

impl Iterator for TokenStreamReader {
    type Item = Result<FrameTokens>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_frame >= self.header.frame_count as u64 {
            return None;
        }
        Some(self.read_frame())
    }
}

/// Writer counterpart for fixtures and synthetic dumps. The frame count is
/// patched into the header on `finish`, so streams of unknown length can be
/// written in one pass.
pub struct TokenStreamWriter {
    writer: BufWriter<File>,
    tokens_per_frame: usize,
    feature_dim: usize,
    frames_written: u64,
}

impl TokenStreamWriter {
    pub fn create(
        path: impl AsRef<Path>,
        tokens_per_frame: usize,
        feature_dim: usize,
    ) -> Result<Self> {
        let mut writer = BufWriter::new(File::create(path)?);
        writer.write_all(&STREAM_MAGIC)?;
        writer.write_all(&STREAM_VERSION.to_le_bytes())?;
        writer.write_all(&0u32.to_le_bytes())?; // frame count, patched later
        writer.write_all(&(tokens_per_frame as u32).to_le_bytes())?;
        writer.write_all(&(feature_dim as u32).to_le_bytes())?;
        Ok(TokenStreamWriter {
            writer,
            tokens_per_frame,
            feature_dim,
            frames_written: 0,
        })
    }

    /// Append one raw frame's payload.
    pub fn write_frame(&mut self, frame: &FrameTokens) -> Result<()> {
        if frame.weight() != 1 {
            return Err(Error::WeightNotOne {
                weight: frame.weight(),
            });
        }
        if frame.token_count() != self.tokens_per_frame {
            return Err(Error::DimensionMismatch {
                expected: self.tokens_per_frame,
                actual: frame.token_count(),
            });
        }
        if frame.dim() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                actual: frame.dim(),
            });
        }
        for token in frame.tokens() {
            for &v in token.values() {
                self.writer.write_all(&v.to_le_bytes())?;
            }
        }
        self.frames_written += 1;
        Ok(())
    }

    /// Patch the true frame count into the header and flush.
    pub fn finish(mut self) -> Result<u64> {
        let count = u32::try_from(self.frames_written).map_err(|_| Error::InvalidConfig {
            reason: format!("{} frames exceed the u32 header field", self.frames_written),
        })?;
        self.writer.flush()?;
        let file = self.writer.get_mut();
        file.seek(SeekFrom::Start(8))?;
        file.write_all(&count.to_le_bytes())?;
        file.flush()?;
        Ok(self.frames_written)
    }
}

/// Write a whole stream in one call. Returns the frame count.
pub fn write_stream<'a>(
    path: impl AsRef<Path>,
    tokens_per_frame: usize,
    feature_dim: usize,
    frames: impl IntoIterator<Item = &'a FrameTokens>,
) -> Result<u64> {
    let mut writer = TokenStreamWriter::create(path, tokens_per_frame, feature_dim)?;
    for frame in frames {
        writer.write_frame(frame)?;
    }
    writer.finish()
}

/// Open a stream file for iteration. See [`TokenStreamReader::open`].
pub fn read_stream(path: impl AsRef<Path>, config: &StreamConfig) -> Result<TokenStreamReader> {
    TokenStreamReader::open(path, config)
}

// ── Synthetic streams ───────────────────────────────────────────────────────

/// Recipe for a synthetic stream with known scene boundaries: each scene is
/// one random unit-norm base frame repeated with per-token Gaussian jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSceneSpec {
    pub scene_count: usize,
    pub frames_per_scene: usize,
    /// Standard deviation of the additive noise; 0 repeats the base frame
    /// exactly.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.scene_count == 0 || self.frames_per_scene == 0 {
            return Err(Error::InvalidConfig {
                reason: "scene_count and frames_per_scene must be at least 1".into(),
            });
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "noise_sigma {} must be finite and non-negative",
                    self.noise_sigma
                ),
            });
        }
        Ok(())
    }
}

/// Deterministic frame generator: identical spec and config yield
/// bit-identical streams.
pub struct SyntheticStream {
    rng: ChaCha8Rng,
    tokens_per_frame: usize,
    feature_dim: usize,
    noise_sigma: f64,
    frames_per_scene: u64,
    total_frames: u64,
    next_index: u64,
    scene_base: Vec<Vec<f64>>,
}

impl SyntheticStream {
    fn draw_unit_token(&mut self) -> Vec<f64> {
        loop {
            let values: Vec<f64> = (0..self.feature_dim)
                .map(|_| self.rng.sample(StandardNormal))
                .collect();
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-9 {
                return values.iter().map(|v| v / norm).collect();
            }
        }
    }

    fn next_scene_base(&mut self) {
        let base: Vec<Vec<f64>> = (0..self.tokens_per_frame)
            .map(|_| self.draw_unit_token())
            .collect();
        self.scene_base = base;
    }
}

impl Iterator for SyntheticStream {
    type Item = FrameTokens;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_index >= self.total_frames {
            return None;
        }
        if self.next_index.is_multiple_of(self.frames_per_scene) {
            self.next_scene_base();
        }
        let tokens: Vec<Token> = if self.noise_sigma == 0.0 {
            self.scene_base
                .iter()
                .map(|base| Token::new(base.iter().map(|&v| v as f32).collect()).expect("finite"))
                .collect()
        } else {
            let mut tokens = Vec::with_capacity(self.tokens_per_frame);
            for j in 0..self.tokens_per_frame {
                let mut values: Vec<f64> = self.scene_base[j]
                    .iter()
                    .map(|&v| v + self.noise_sigma * self.rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let mut norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
                while norm <= 1e-9 {
                    // Vanishingly unlikely cancellation; jitter again.
                    values = self.scene_base[j]
                        .iter()
                        .map(|&v| v + self.noise_sigma * self.rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
                }
                tokens.push(
                    Token::new(values.iter().map(|&v| (v / norm) as f32).collect())
                        .expect("finite"),
                );
            }
            tokens
        };
        let frame = FrameTokens::raw(self.next_index, tokens).expect("well-formed frame");
        self.next_index += 1;
        Some(frame)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let remaining = (self.total_frames - self.next_index) as usize;
        (remaining, Some(remaining))
    }
}

/// Build the generator described by `spec`, shaped by `config`.
pub fn generate_synthetic(
    spec: &SyntheticSceneSpec,
    config: &StreamConfig,
) -> Result<SyntheticStream> {
    spec.validate()?;
    config.validate()?;
    Ok(SyntheticStream {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        tokens_per_frame: config.tokens_per_frame,
        feature_dim: config.feature_dim,
        noise_sigma: spec.noise_sigma,
        frames_per_scene: spec.frames_per_scene as u64,
        total_frames: (spec.scene_count as u64) * (spec.frames_per_scene as u64),
        next_index: 0,
        scene_base: Vec::new(),
    })
}

// ── Pipeline and drive loop ─────────────────────────────────────────────────

/// Details of one flush-and-consolidate event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlushOutcome {
    pub batch_frames: usize,
    pub batch_tokens: usize,
    pub merges: u64,
    pub consolidated_frames: usize,
    pub consolidated_tokens: usize,
}

/// What one ingest step did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOutcome {
    pub flush: Option<FlushOutcome>,
}

/// Short-term and long-term memory wired together: pushes trigger flushes,
/// flushes are consolidated and appended. Single-writer by contract.
///
/// If an ingest step fails, the pipeline stops tracking the in-flight batch
/// and must be considered poisoned; the driver aborts at that point.
#[derive(Debug, Clone)]
pub struct MemoryPipeline {
    config: StreamConfig,
    short: ShortTermMemory,
    long: LongTermMemory,
    frames_ingested: u64,
    flushes: u64,
    merges: u64,
}

impl MemoryPipeline {
    pub fn new(config: &StreamConfig) -> Result<Self> {
        config.validate()?;
        Ok(MemoryPipeline {
            short: ShortTermMemory::new(config.short_capacity),
            long: LongTermMemory::new(config),
            config: config.clone(),
            frames_ingested: 0,
            flushes: 0,
            merges: 0,
        })
    }

    /// Push one raw frame; consolidate and append on overflow.
    pub fn ingest(&mut self, frame: FrameTokens) -> Result<IngestOutcome> {
        if frame.token_count() != self.config.tokens_per_frame {
            return Err(Error::DimensionMismatch {
                expected: self.config.tokens_per_frame,
                actual: frame.token_count(),
            });
        }
        if frame.dim() != self.config.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.feature_dim,
                actual: frame.dim(),
            });
        }
        let signal = self.short.push_frame(frame)?;
        self.frames_ingested += 1;
        let flush = match signal {
            FlushSignal::NoFlush => None,
            FlushSignal::Flushed(batch) => {
                let batch_frames = batch.len();
                let batch_tokens = batch_frames * self.config.tokens_per_frame;
                let consolidated = consolidate(batch, self.config.consolidated_capacity)?;
                let merges = (batch_frames - consolidated.len()) as u64;
                let outcome = FlushOutcome {
                    batch_frames,
                    batch_tokens,
                    merges,
                    consolidated_frames: consolidated.len(),
                    consolidated_tokens: consolidated.len() * self.config.tokens_per_frame,
                };
                self.long.append_consolidated(consolidated)?;
                self.flushes += 1;
                self.merges += merges;
                Some(outcome)
            }
        };
        Ok(IngestOutcome { flush })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.config
    }

    pub fn short_memory(&self) -> &ShortTermMemory {
        &self.short
    }

    pub fn long_memory(&self) -> &LongTermMemory {
        &self.long
    }

    pub fn frames_ingested(&self) -> u64 {
        self.frames_ingested
    }

    pub fn flushes(&self) -> u64 {
        self.flushes
    }

    pub fn merges(&self) -> u64 {
        self.merges
    }

    /// Tokens currently resident across both memories.
    pub fn resident_tokens(&self) -> usize {
        self.short.len() * self.config.tokens_per_frame + self.long.total_tokens()
    }

    /// Storage bytes of the resident tokens (f32 payload).
    pub fn resident_token_bytes(&self) -> u64 {
        self.resident_tokens() as u64 * self.config.feature_dim as u64 * 4
    }
}

/// Counters and timing returned by a drive run. Counters are cumulative over
/// the pipeline's lifetime; `elapsed` covers this call only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineStats {
    pub frames: u64,
    pub flushes: u64,
    pub merges: u64,
    pub elapsed: Duration,
}

/// A pipeline error tagged with the 1-based ordinal of the frame that
/// triggered it.
#[derive(Debug)]
pub struct DriveError {
    pub frame: u64,
    pub source: Error,
}

impl fmt::Display for DriveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at frame {}: {}", self.frame, self.source)
    }
}

impl std::error::Error for DriveError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// Pull frames in windows of `config.window_size` and ingest each one.
/// Window size affects I/O batching only; results are identical for any
/// window size.
pub fn drive<I>(
    source: I,
    config: &StreamConfig,
    pipeline: &mut MemoryPipeline,
) -> std::result::Result<PipelineStats, DriveError>
where
    I: IntoIterator<Item = Result<FrameTokens>>,
{
    drive_with(source, config, pipeline, |_, _, _| Ok(()))
}

/// `drive` with a hook invoked before each ingest. The hook receives the
/// 1-based ordinal of the frame about to enter the pipeline, the frame
/// itself, and the pipeline state as it stands — which is exactly the state
/// a breakpoint snapshot of that moment needs.
pub fn drive_with<I, F>(
    source: I,
    config: &StreamConfig,
    pipeline: &mut MemoryPipeline,
    mut before_ingest: F,
) -> std::result::Result<PipelineStats, DriveError>
where
    I: IntoIterator<Item = Result<FrameTokens>>,
    F: FnMut(u64, &FrameTokens, &MemoryPipeline) -> Result<()>,
{
    let start = Instant::now();
    let mut iter = source.into_iter();
    let mut pulled: u64 = 0;
    let mut processed: u64 = 0;
    loop {
        let mut window = Vec::with_capacity(config.window_size);
        for _ in 0..config.window_size {
            match iter.next() {
                Some(Ok(frame)) => {
                    pulled += 1;
                    window.push(frame);
                }
                Some(Err(e)) => {
                    return Err(DriveError {
                        frame: pulled + 1,
                        source: e,
                    })
                }
                None => break,
            }
        }
        if window.is_empty() {
            break;
        }
        for frame in window {
            processed += 1;
            before_ingest(processed, &frame, pipeline).map_err(|e| DriveError {
                frame: processed,
                source: e,
            })?;
            pipeline.ingest(frame).map_err(|e| DriveError {
                frame: processed,
                source: e,
            })?;
        }
    }
    Ok(PipelineStats {
        frames: pipeline.frames_ingested(),
        flushes: pipeline.flushes(),
        merges: pipeline.merges(),
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::frame_similarity;

    fn tiny_config() -> StreamConfig {
        StreamConfig {
            tokens_per_frame: 2,
            feature_dim: 3,
            window_size: 4,
            short_capacity: 4,
            consolidated_capacity: 2,
            base_pe_length: 64,
            pe_alpha: 0.4,
        }
    }

    fn synthetic_frames(spec: &SyntheticSceneSpec, config: &StreamConfig) -> Vec<FrameTokens> {
        generate_synthetic(spec, config).unwrap().collect()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let config = tiny_config();
        let spec = SyntheticSceneSpec {
            scene_count: 2,
            frames_per_scene: 5,
            noise_sigma: 0.1,
            seed: 7,
        };
        let frames = synthetic_frames(&spec, &config);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stream.mcts");
        let written =
            write_stream(&path, config.tokens_per_frame, config.feature_dim, &frames).unwrap();
        assert_eq!(written, 10);
        let read: Vec<FrameTokens> = read_stream(&path, &config)
            .unwrap()
            .map(|f| f.unwrap())
            .collect();
        assert_eq!(read.len(), frames.len());
        for (a, b) in read.iter().zip(&frames) {
            assert_eq!(a.source_range(), b.source_range());
            assert_eq!(a.weight(), 1);
            for (ta, tb) in a.tokens().iter().zip(b.tokens()) {
                let bits_a: Vec<u32> = ta.values().iter().map(|v| v.to_bits()).collect();
                let bits_b: Vec<u32> = tb.values().iter().map(|v| v.to_bits()).collect();
                assert_eq!(bits_a, bits_b);
            }
        }
    }

    #[test]
    fn empty_stream_roundtrip() {
        let config = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.mcts");
        write_stream(&path, config.tokens_per_frame, config.feature_dim, []).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), STREAM_HEADER_BYTES);
        let mut reader = read_stream(&path, &config).unwrap();
        assert_eq!(reader.header().frame_count, 0);
        assert!(reader.next().is_none());
    }

    #[test]
    fn file_size_matches_header_arithmetic() {
        let config = StreamConfig::default();
        let spec = SyntheticSceneSpec {
            scene_count: 1,
            frames_per_scene: 100,
            noise_sigma: 0.0,
            seed: 1,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("big.mcts");
        let stream = generate_synthetic(&spec, &config).unwrap();
        let mut writer =
            TokenStreamWriter::create(&path, config.tokens_per_frame, config.feature_dim).unwrap();
        for frame in stream {
            writer.write_frame(&frame).unwrap();
        }
        writer.finish().unwrap();
        let expected = STREAM_HEADER_BYTES + 100 * 32 * 768 * 4;
        assert_eq!(std::fs::metadata(&path).unwrap().len(), expected);
        let reader = read_stream(&path, &config).unwrap();
        assert_eq!(reader.header().frame_count, 100);
        assert_eq!(reader.count(), 100);
    }

    #[test]
    fn open_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mcts");
        std::fs::write(
            &path,
            b"XXXX\x01\x00\x00\x00\x00\x00\x00\x00\x02\x00\x00\x00\x03\x00\x00\x00",
        )
        .unwrap();
        assert!(matches!(
            read_stream(&path, &tiny_config()),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn open_rejects_truncated_payload() {
        let config = tiny_config();
        let frames = synthetic_frames(
            &SyntheticSceneSpec {
                scene_count: 1,
                frames_per_scene: 3,
                noise_sigma: 0.0,
                seed: 0,
            },
            &config,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.mcts");
        write_stream(&path, config.tokens_per_frame, config.feature_dim, &frames).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(
            read_stream(&path, &config),
            Err(Error::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn open_rejects_shape_mismatch_with_config() {
        let config = tiny_config();
        let frames = synthetic_frames(
            &SyntheticSceneSpec {
                scene_count: 1,
                frames_per_scene: 2,
                noise_sigma: 0.0,
                seed: 0,
            },
            &config,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shape.mcts");
        write_stream(&path, config.tokens_per_frame, config.feature_dim, &frames).unwrap();
        let mut other = config.clone();
        other.feature_dim = 4;
        assert!(matches!(
            read_stream(&path, &other),
            Err(Error::DimensionMismatch {
                expected: 4,
                actual: 3
            })
        ));
    }

    #[test]
    fn zero_noise_frames_are_identical() {
        let config = tiny_config();
        let spec = SyntheticSceneSpec {
            scene_count: 1,
            frames_per_scene: 6,
            noise_sigma: 0.0,
            seed: 11,
        };
        let frames = synthetic_frames(&spec, &config);
        assert_eq!(frames.len(), 6);
        for pair in frames.windows(2) {
            assert_eq!(pair[0].tokens(), pair[1].tokens());
            let s = frame_similarity(&pair[0], &pair[1]).unwrap();
            assert!((s - 1.0).abs() < 1e-12, "adjacent similarity {s}");
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let config = tiny_config();
        let spec = SyntheticSceneSpec {
            scene_count: 3,
            frames_per_scene: 4,
            noise_sigma: 0.25,
            seed: 99,
        };
        let a = synthetic_frames(&spec, &config);
        let b = synthetic_frames(&spec, &config);
        assert_eq!(a, b);
        let other = SyntheticSceneSpec { seed: 100, ..spec };
        assert_ne!(synthetic_frames(&other, &config), a);
    }

    #[test]
    fn cross_scene_similarity_concentrates_near_zero() {
        // Independent unit vectors in dimension D have |cos| on the order
        // of 1/sqrt(D); average over seeds must sit well under 3/sqrt(D).
        let mut config = tiny_config();
        config.feature_dim = 64;
        let mut total = 0.0f64;
        let seeds = 20;
        for seed in 0..seeds {
            let spec = SyntheticSceneSpec {
                scene_count: 2,
                frames_per_scene: 3,
                noise_sigma: 0.0,
                seed,
            };
            let frames = synthetic_frames(&spec, &config);
            let boundary = frame_similarity(&frames[2], &frames[3]).unwrap();
            total += boundary.abs();
        }
        let mean = total / seeds as f64;
        assert!(
            mean < 3.0 / (config.feature_dim as f64).sqrt(),
            "mean |sim| {mean}"
        );
    }

    #[test]
    fn drive_nine_frames_defaults_flushes_once() {
        let config = StreamConfig::default();
        let spec = SyntheticSceneSpec {
            scene_count: 1,
            frames_per_scene: 9,
            noise_sigma: 0.01,
            seed: 5,
        };
        let mut pipeline = MemoryPipeline::new(&config).unwrap();
        let stats = drive(
            generate_synthetic(&spec, &config).unwrap().map(Ok),
            &config,
            &mut pipeline,
        )
        .unwrap();
        assert_eq!(stats.frames, 9);
        assert_eq!(stats.flushes, 1);
        assert_eq!(stats.merges, 6);
        assert_eq!(pipeline.long_memory().total_tokens(), 64);
        assert_eq!(pipeline.short_memory().len(), 1);
    }

    #[test]
    fn drive_flush_count_matches_closed_form() {
        let config = tiny_config();
        for frames in [0u64, 1, 3, 4, 5, 8, 9, 17, 40, 41] {
            let mut pipeline = MemoryPipeline::new(&config).unwrap();
            let spec = SyntheticSceneSpec {
                scene_count: 1,
                frames_per_scene: frames.max(1) as usize,
                noise_sigma: 0.1,
                seed: frames,
            };
            let source = generate_synthetic(&spec, &config)
                .unwrap()
                .take(frames as usize);
            let stats = drive(source.map(Ok), &config, &mut pipeline).unwrap();
            let expected = if frames == 0 {
                0
            } else {
                (frames - 1) / config.short_capacity as u64
            };
            assert_eq!(stats.flushes, expected, "frames {frames}");
            // Conservation: resident raw frames + consolidated weights.
            let resident = pipeline.short_memory().len() as u64;
            assert_eq!(resident + pipeline.long_memory().total_weight(), frames);
        }
    }

    #[test]
    fn drive_empty_source() {
        let config = tiny_config();
        let mut pipeline = MemoryPipeline::new(&config).unwrap();
        let stats = drive(std::iter::empty(), &config, &mut pipeline).unwrap();
        assert_eq!(stats.frames, 0);
        assert_eq!(stats.flushes, 0);
        assert!(pipeline.long_memory().is_empty());
    }

    #[test]
    fn window_size_never_changes_results() {
        let spec = SyntheticSceneSpec {
            scene_count: 3,
            frames_per_scene: 11,
            noise_sigma: 0.2,
            seed: 21,
        };
        let mut results = Vec::new();
        for window in [1usize, 10] {
            let mut config = tiny_config();
            config.window_size = window;
            let mut pipeline = MemoryPipeline::new(&config).unwrap();
            drive(
                generate_synthetic(&spec, &config).unwrap().map(Ok),
                &config,
                &mut pipeline,
            )
            .unwrap();
            let long: Vec<Vec<u32>> = pipeline
                .long_memory()
                .frames()
                .iter()
                .flat_map(|f| f.tokens().iter())
                .map(|t| t.values().iter().map(|v| v.to_bits()).collect())
                .collect();
            let short: Vec<u64> = pipeline
                .short_memory()
                .contents()
                .map(|f| f.source_range().first)
                .collect();
            results.push((long, short));
        }
        assert_eq!(results[0], results[1]);
    }

    #[test]
    fn drive_reports_failing_frame_position() {
        let config = tiny_config();
        let spec = SyntheticSceneSpec {
            scene_count: 1,
            frames_per_scene: 6,
            noise_sigma: 0.0,
            seed: 2,
        };
        let frames = synthetic_frames(&spec, &config);
        // Frame 4 (1-based) decodes to an error.
        let source =
            frames.into_iter().enumerate().map(
                |(i, f)| {
                    if i == 3 {
                        Err(Error::NonFinite)
                    } else {
                        Ok(f)
                    }
                },
            );
        let mut pipeline = MemoryPipeline::new(&config).unwrap();
        let err = drive(source, &config, &mut pipeline).unwrap_err();
        assert_eq!(err.frame, 4);
        assert!(matches!(err.source, Error::NonFinite));
    }

    #[test]
    fn before_ingest_hook_sees_pre_push_state() {
        let config = tiny_config();
        let spec = SyntheticSceneSpec {
            scene_count: 1,
            frames_per_scene: 10,
            noise_sigma: 0.0,
            seed: 3,
        };
        let mut pipeline = MemoryPipeline::new(&config).unwrap();
        let mut observed = Vec::new();
        drive_with(
            generate_synthetic(&spec, &config).unwrap().map(Ok),
            &config,
            &mut pipeline,
            |ordinal, frame, state| {
                observed.push((
                    ordinal,
                    frame.source_range().first,
                    state.short_memory().len(),
                    state.long_memory().total_tokens(),
                ));
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(observed.len(), 10);
        // Ordinal b sees b-1 pushes' worth of state (K=4, 2 tokens/frame,
        // 2 consolidated tokens per flush here).
        assert_eq!(observed[0], (1, 0, 0, 0));
        assert_eq!(observed[4], (5, 4, 4, 0)); // before push 5: buffer full, no flush yet
        assert_eq!(observed[5], (6, 5, 1, 2)); // push 5 flushed to 1 consolidated frame
    }
}
