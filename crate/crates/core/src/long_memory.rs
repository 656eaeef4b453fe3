//! Consolidation of flushed frame batches into sparse long-term memory, and
//! the two-level positional index extension that keeps the grown store
//! addressable.
//!
//! Consolidation repeatedly merges the most similar adjacent frame pair
//! until the batch shrinks to its token budget. Similarities are updated
//! incrementally — merging pair m only invalidates pairs m-1 and m — which
//! keeps each iteration O(F) while staying equivalent to recomputing every
//! pair from scratch.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::config::StreamConfig;
use crate::error::{Error, Result};
use crate::token::{frame_similarity, merge_frames, FrameTokens};

/// Magic bytes of the positional base-table file format.
pub const PE_TABLE_MAGIC: [u8; 4] = *b"PETB";

// ── Consolidation ───────────────────────────────────────────────────────────

/// Greedily merge the most similar adjacent frames until `target_tokens`
/// remain. Ties go to the lowest pair index, so output is deterministic.
/// Each iteration removes exactly one frame; order and coverage are
/// preserved.
pub fn consolidate(batch: Vec<FrameTokens>, target_tokens: usize) -> Result<Vec<FrameTokens>> {
    if batch.is_empty() {
        if target_tokens == 0 {
            return Ok(batch);
        }
        return Err(Error::TargetTooLarge {
            target: target_tokens,
            available: 0,
        });
    }
    let tokens_per_frame = batch[0].token_count();
    let dim = batch[0].dim();
    let mut total_tokens = 0usize;
    for (i, frame) in batch.iter().enumerate() {
        if frame.token_count() != tokens_per_frame {
            return Err(Error::DimensionMismatch {
                expected: tokens_per_frame,
                actual: frame.token_count(),
            });
        }
        if frame.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: frame.dim(),
            });
        }
        if i > 0 {
            let prev = batch[i - 1].source_range().last;
            let cur = frame.source_range().first;
            if prev + 1 != cur {
                return Err(Error::NonAdjacent {
                    left_last: prev,
                    right_first: cur,
                });
            }
        }
        total_tokens += frame.token_count();
    }
    if !target_tokens.is_multiple_of(tokens_per_frame) {
        return Err(Error::TargetNotMultiple {
            target: target_tokens,
            tokens_per_frame,
        });
    }
    if target_tokens > total_tokens {
        return Err(Error::TargetTooLarge {
            target: target_tokens,
            available: total_tokens,
        });
    }
    if target_tokens < tokens_per_frame {
        return Err(Error::TargetTooSmall {
            target: target_tokens,
            minimum: tokens_per_frame,
        });
    }

    let target_frames = target_tokens / tokens_per_frame;
    let mut frames = batch;
    let mut sims: Vec<f64> = Vec::with_capacity(frames.len().saturating_sub(1));
    for pair in frames.windows(2) {
        sims.push(frame_similarity(&pair[0], &pair[1])?);
    }

    while frames.len() > target_frames {
        // Argmax with lowest-index tie-break: strict greater-than scan.
        let mut best = 0usize;
        for (i, &s) in sims.iter().enumerate().skip(1) {
            if s > sims[best] {
                best = i;
            }
        }
        let merged = merge_frames(&frames[best], &frames[best + 1])?;
        frames[best] = merged;
        frames.remove(best + 1);
        sims.remove(best);
        if best > 0 {
            sims[best - 1] = frame_similarity(&frames[best - 1], &frames[best])?;
        }
        if best < sims.len() {
            sims[best] = frame_similarity(&frames[best], &frames[best + 1])?;
        }
        debug_assert_eq!(sims.len() + 1, frames.len());
    }
    Ok(frames)
}

// ── Long-term store ─────────────────────────────────────────────────────────

/// Append-only store of consolidated frames. Every stored token carries a
/// positional index assigned in append order; the index space is capped at
/// n^2 where n is the configured base positional length.
#[derive(Debug, Clone)]
pub struct LongTermMemory {
    frames: Vec<FrameTokens>,
    positional_indices: Vec<u32>,
    tokens_per_frame: usize,
    feature_dim: usize,
    max_positions: usize,
}

impl LongTermMemory {
    pub fn new(config: &StreamConfig) -> Self {
        LongTermMemory {
            frames: Vec::new(),
            positional_indices: Vec::new(),
            tokens_per_frame: config.tokens_per_frame,
            feature_dim: config.feature_dim,
            max_positions: config.positional_range(),
        }
    }

    /// Append consolidated frames that continue the stored coverage. Each
    /// new token receives the next positional index; nothing is written if
    /// any check fails.
    pub fn append_consolidated(&mut self, frames: Vec<FrameTokens>) -> Result<()> {
        if frames.is_empty() {
            return Ok(());
        }
        let mut expected_next = self.coverage_end().map(|last| last + 1);
        let mut new_tokens = 0usize;
        for frame in &frames {
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
            if let Some(expected) = expected_next {
                if frame.source_range().first != expected {
                    return Err(Error::CoverageGap {
                        expected,
                        actual: frame.source_range().first,
                    });
                }
            }
            expected_next = Some(frame.source_range().last + 1);
            new_tokens += frame.token_count();
        }
        let requested = self.total_tokens() + new_tokens;
        if requested > self.max_positions {
            return Err(Error::PositionalOverflow {
                requested,
                max: self.max_positions,
            });
        }
        let mut next = self.positional_indices.len() as u32;
        for frame in frames {
            for _ in 0..frame.token_count() {
                self.positional_indices.push(next);
                next += 1;
            }
            self.frames.push(frame);
        }
        Ok(())
    }

    pub fn frames(&self) -> &[FrameTokens] {
        &self.frames
    }

    pub fn positional_indices(&self) -> &[u32] {
        &self.positional_indices
    }

    pub fn total_tokens(&self) -> usize {
        self.frames.len() * self.tokens_per_frame
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.tokens_per_frame
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Last raw index covered so far.
    pub fn coverage_end(&self) -> Option<u64> {
        self.frames.last().map(|f| f.source_range().last)
    }

    /// Total raw frames summarized (sum of weights).
    pub fn total_weight(&self) -> u64 {
        self.frames.iter().map(|f| f.weight()).sum()
    }
}

// ── Positional encoding ─────────────────────────────────────────────────────

/// Absolute positional table of length n, extended to n^2 addressable
/// positions by a two-level decomposition: positions below n read the table
/// directly; above, the encoding is a fixed blend of the quotient and
/// remainder rows, `alpha * table[p / n] + (1 - alpha) * table[p % n]`.
#[derive(Debug, Clone)]
pub struct PositionalEncoder {
    base_table: Vec<Vec<f32>>,
    encoding_dim: usize,
    alpha: f64,
}

impl PositionalEncoder {
    /// Wrap an explicit base table (e.g. one loaded from a trained model).
    pub fn from_table(base_table: Vec<Vec<f32>>, alpha: f64) -> Result<Self> {
        if base_table.is_empty() {
            return Err(Error::InvalidConfig {
                reason: "positional table is empty".into(),
            });
        }
        let encoding_dim = base_table[0].len();
        if encoding_dim == 0 {
            return Err(Error::InvalidConfig {
                reason: "positional rows are empty".into(),
            });
        }
        for row in &base_table {
            if row.len() != encoding_dim {
                return Err(Error::DimensionMismatch {
                    expected: encoding_dim,
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        if !(alpha > 0.0 && alpha < 1.0) || alpha == 0.5 {
            return Err(Error::InvalidConfig {
                reason: format!("alpha {alpha} must lie in (0, 1) and differ from 0.5"),
            });
        }
        Ok(PositionalEncoder {
            base_table,
            encoding_dim,
            alpha,
        })
    }

    /// Deterministic sinusoidal stand-in for a learned table: row p holds
    /// interleaved sin/cos at geometrically spaced frequencies.
    pub fn sinusoidal(base_length: usize, encoding_dim: usize, alpha: f64) -> Result<Self> {
        let mut table = Vec::with_capacity(base_length);
        for p in 0..base_length {
            let mut row = Vec::with_capacity(encoding_dim);
            for d in 0..encoding_dim {
                let pair = (d / 2) as f64;
                let angle = p as f64 / 10_000f64.powf(2.0 * pair / encoding_dim as f64);
                row.push(if d % 2 == 0 {
                    angle.sin() as f32
                } else {
                    angle.cos() as f32
                });
            }
            table.push(row);
        }
        Self::from_table(table, alpha)
    }

    /// Build the encoder a config describes: sinusoidal table of length
    /// `base_pe_length` and width `feature_dim`.
    pub fn from_config(config: &StreamConfig) -> Result<Self> {
        Self::sinusoidal(config.base_pe_length, config.feature_dim, config.pe_alpha)
    }

    pub fn base_length(&self) -> usize {
        self.base_table.len()
    }

    pub fn encoding_dim(&self) -> usize {
        self.encoding_dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Addressable positions: n^2.
    pub fn max_positions(&self) -> usize {
        self.base_length() * self.base_length()
    }

    /// Encode position p. Below n the base row is reproduced exactly
    /// (lossless f32 -> f64 widening); otherwise the two-level blend is
    /// computed in f64.
    pub fn encode(&self, position: usize) -> Result<Vec<f64>> {
        let n = self.base_length();
        if position >= self.max_positions() {
            return Err(Error::IndexOutOfRange {
                index: position,
                max: self.max_positions(),
            });
        }
        if position < n {
            return Ok(self.base_table[position]
                .iter()
                .map(|&v| v as f64)
                .collect());
        }
        let coarse = &self.base_table[position / n];
        let fine = &self.base_table[position % n];
        Ok(coarse
            .iter()
            .zip(fine)
            .map(|(&c, &f)| self.alpha * c as f64 + (1.0 - self.alpha) * f as f64)
            .collect())
    }

    /// Write the base table as a PETB file: magic, u32 n, u32 dim, then
    /// n*dim little-endian f32 row-major.
    pub fn save_table(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&PE_TABLE_MAGIC)?;
        out.write_all(&(self.base_length() as u32).to_le_bytes())?;
        out.write_all(&(self.encoding_dim as u32).to_le_bytes())?;
        for row in &self.base_table {
            for &v in row {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Load a PETB base table.
    pub fn load_table(path: impl AsRef<Path>, alpha: f64) -> Result<Self> {
        let file = File::open(&path)?;
        let declared_len = file.metadata()?.len();
        let mut reader = BufReader::new(file);
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic)?;
        if magic != PE_TABLE_MAGIC {
            return Err(Error::BadMagic {
                expected: PE_TABLE_MAGIC,
                found: magic,
            });
        }
        let mut word = [0u8; 4];
        reader.read_exact(&mut word)?;
        let n = u32::from_le_bytes(word) as usize;
        reader.read_exact(&mut word)?;
        let dim = u32::from_le_bytes(word) as usize;
        let expected = 12 + (n as u64) * (dim as u64) * 4;
        if declared_len != expected {
            return Err(Error::TruncatedPayload {
                expected,
                actual: declared_len,
            });
        }
        let mut table = Vec::with_capacity(n);
        let mut row_bytes = vec![0u8; dim * 4];
        for _ in 0..n {
            reader.read_exact(&mut row_bytes)?;
            let row: Vec<f32> = row_bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            table.push(row);
        }
        Self::from_table(table, alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::Token;

    fn frame(index: u64, tokens: &[&[f32]]) -> FrameTokens {
        FrameTokens::raw(
            index,
            tokens
                .iter()
                .map(|t| Token::new(t.to_vec()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn small_config(n_tokens: usize, dim: usize) -> StreamConfig {
        StreamConfig {
            tokens_per_frame: n_tokens,
            feature_dim: dim,
            window_size: 4,
            short_capacity: 4,
            consolidated_capacity: n_tokens * 2,
            base_pe_length: 16,
            pe_alpha: 0.4,
        }
    }

    // Reference implementation: recompute every adjacent similarity from
    // scratch each iteration. Kept independent of the incremental path.
    fn consolidate_reference(
        mut frames: Vec<FrameTokens>,
        target_frames: usize,
    ) -> Vec<FrameTokens> {
        while frames.len() > target_frames {
            let sims: Vec<f64> = frames
                .windows(2)
                .map(|p| frame_similarity(&p[0], &p[1]).unwrap())
                .collect();
            let mut best = 0;
            for (i, &s) in sims.iter().enumerate().skip(1) {
                if s > sims[best] {
                    best = i;
                }
            }
            frames[best] = merge_frames(&frames[best], &frames[best + 1]).unwrap();
            frames.remove(best + 1);
        }
        frames
    }

    #[test]
    fn already_at_target_returns_unchanged() {
        let batch = vec![frame(0, &[&[1.0, 0.0]]), frame(1, &[&[0.0, 1.0]])];
        let out = consolidate(batch.clone(), 2).unwrap();
        assert_eq!(out, batch);
    }

    #[test]
    fn default_shape_eight_frames_to_two() {
        // 8 frames x 32 tokens in, 64 tokens out: 2 frames, combined
        // weight 8, in exactly 6 iterations (frame count drops by 1 each).
        let mut batch = Vec::new();
        for i in 0..8u64 {
            let tokens: Vec<Token> = (0..32)
                .map(|j| {
                    Token::new(
                        (0..16)
                            .map(|d| ((i + 1) as f32) * 0.1 + (j * 16 + d) as f32 * 0.01)
                            .collect(),
                    )
                    .unwrap()
                })
                .collect();
            batch.push(FrameTokens::raw(i, tokens).unwrap());
        }
        let out = consolidate(batch, 64).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out.iter().map(|f| f.token_count()).sum::<usize>(), 64);
        assert_eq!(out.iter().map(|f| f.weight()).sum::<u64>(), 8);
        assert_eq!(out[0].source_range().first, 0);
        assert_eq!(out[1].source_range().last, 7);
        assert_eq!(out[0].source_range().last + 1, out[1].source_range().first);
    }

    #[test]
    fn greedy_picks_most_similar_pair_first() {
        // f1 == f2 (similarity exactly 1.0 wins), f3 orthogonal, f4 nearby.
        let norm = (0.81f32 + 0.01).sqrt();
        let batch = vec![
            frame(0, &[&[1.0, 0.0]]),
            frame(1, &[&[1.0, 0.0]]),
            frame(2, &[&[0.0, 1.0]]),
            frame(3, &[&[0.9 / norm, 0.1 / norm]]),
        ];
        let out = consolidate(batch.clone(), 2).unwrap();
        // First merge must be (f1, f2); the reference oracle replays the
        // whole greedy schedule and must agree token-for-token.
        assert_eq!(
            out[0].source_range(),
            crate::token::SourceRange { first: 0, last: 1 }
        );
        let reference = consolidate_reference(batch, 2);
        assert_eq!(out.len(), reference.len());
        for (a, b) in out.iter().zip(&reference) {
            assert_eq!(a.source_range(), b.source_range());
            assert_eq!(a.tokens(), b.tokens());
        }
    }

    #[test]
    fn rejects_bad_targets() {
        // Two frames of two tokens each: 4 tokens available, N = 2.
        let batch = vec![
            frame(0, &[&[1.0, 0.0], &[0.0, 1.0]]),
            frame(1, &[&[0.0, 1.0], &[1.0, 0.0]]),
        ];
        assert!(matches!(
            consolidate(batch.clone(), 3),
            Err(Error::TargetNotMultiple {
                target: 3,
                tokens_per_frame: 2
            })
        ));
        assert!(matches!(
            consolidate(batch.clone(), 6),
            Err(Error::TargetTooLarge {
                target: 6,
                available: 4
            })
        ));
        assert!(matches!(
            consolidate(batch, 0),
            Err(Error::TargetTooSmall { .. })
        ));
    }

    #[test]
    fn rejects_gapped_batch() {
        let batch = vec![frame(0, &[&[1.0, 0.0]]), frame(2, &[&[0.0, 1.0]])];
        assert!(matches!(
            consolidate(batch, 1),
            Err(Error::NonAdjacent { .. })
        ));
    }

    #[test]
    fn propagates_zero_vector() {
        let batch = vec![frame(0, &[&[0.0, 0.0]]), frame(1, &[&[0.0, 1.0]])];
        assert!(matches!(
            consolidate(batch, 1),
            Err(Error::ZeroVector { .. })
        ));
    }

    #[test]
    fn append_assigns_sequential_indices() {
        let config = small_config(32, 4);
        let mut ltm = LongTermMemory::new(&config);
        let consolidated = |first: u64, last: u64| {
            let tokens: Vec<Token> = (0..32)
                .map(|j| Token::new(vec![j as f32, 1.0, 2.0, 3.0]).unwrap())
                .collect();
            FrameTokens::from_parts(tokens, crate::token::SourceRange { first, last }).unwrap()
        };
        ltm.append_consolidated(vec![consolidated(0, 3), consolidated(4, 7)])
            .unwrap();
        assert_eq!(
            ltm.positional_indices(),
            (0..64).collect::<Vec<u32>>().as_slice()
        );
        ltm.append_consolidated(vec![consolidated(8, 11), consolidated(12, 15)])
            .unwrap();
        assert_eq!(
            ltm.positional_indices()[64..],
            (64..128).collect::<Vec<u32>>()[..]
        );
        assert_eq!(ltm.total_tokens(), 128);
        assert_eq!(ltm.total_weight(), 16);
    }

    #[test]
    fn append_rejects_coverage_gap() {
        let config = small_config(1, 2);
        let mut ltm = LongTermMemory::new(&config);
        ltm.append_consolidated(vec![frame(0, &[&[1.0, 0.0]])])
            .unwrap();
        let err = ltm
            .append_consolidated(vec![frame(2, &[&[1.0, 0.0]])])
            .unwrap_err();
        assert!(matches!(
            err,
            Error::CoverageGap {
                expected: 1,
                actual: 2
            }
        ));
        // Store unchanged after the failed append.
        assert_eq!(ltm.total_tokens(), 1);
    }

    #[test]
    fn append_rejects_positional_overflow() {
        let mut config = small_config(1, 2);
        config.base_pe_length = 2; // 4 addressable positions
        let mut ltm = LongTermMemory::new(&config);
        let frames: Vec<FrameTokens> = (0..4).map(|i| frame(i, &[&[1.0, 0.0]])).collect();
        ltm.append_consolidated(frames).unwrap();
        let err = ltm
            .append_consolidated(vec![frame(4, &[&[1.0, 0.0]])])
            .unwrap_err();
        assert!(matches!(
            err,
            Error::PositionalOverflow {
                requested: 5,
                max: 4
            }
        ));
    }

    #[test]
    fn consolidation_conserves_mass_and_mean() {
        let batch: Vec<FrameTokens> = (0..6u64)
            .map(|i| {
                frame(
                    i,
                    &[
                        &[0.2 + i as f32 * 0.31, -1.0 + i as f32 * 0.11],
                        &[1.0, 0.5 - i as f32 * 0.07],
                    ],
                )
            })
            .collect();
        let out = consolidate(batch.clone(), 4).unwrap();
        assert_eq!(out.iter().map(|f| f.weight()).sum::<u64>(), 6);
        // Output ranges tile the input range exactly.
        assert_eq!(out[0].source_range().first, 0);
        assert_eq!(out.last().unwrap().source_range().last, 5);
        for pair in out.windows(2) {
            assert_eq!(
                pair[0].source_range().last + 1,
                pair[1].source_range().first
            );
        }
        // Weight-weighted output mean equals the raw input mean.
        for j in 0..2 {
            for d in 0..2 {
                let raw_mean: f64 = batch
                    .iter()
                    .map(|f| f.tokens()[j].values()[d] as f64)
                    .sum::<f64>()
                    / 6.0;
                let weighted: f64 = out
                    .iter()
                    .map(|f| f.weight() as f64 * f.tokens()[j].values()[d] as f64)
                    .sum::<f64>()
                    / 6.0;
                assert!((raw_mean - weighted).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn encoder_identity_below_base_length() {
        let pe = PositionalEncoder::sinusoidal(8, 6, 0.4).unwrap();
        for p in 0..8 {
            let row = pe.encode(p).unwrap();
            for (d, &v) in row.iter().enumerate() {
                // Bit-exact reproduction: widening is lossless.
                assert_eq!(v, pe.base_table[p][d] as f64);
            }
        }
    }

    #[test]
    fn encoder_decomposition_formula() {
        // n=4, alpha=0.4, p=6 -> 0.4*table[1] + 0.6*table[2].
        let table = vec![
            vec![1.0f32, 10.0],
            vec![2.0, 20.0],
            vec![3.0, 30.0],
            vec![4.0, 40.0],
        ];
        let pe = PositionalEncoder::from_table(table.clone(), 0.4).unwrap();
        let got = pe.encode(6).unwrap();
        for d in 0..2 {
            let want = 0.4 * table[1][d] as f64 + 0.6 * table[2][d] as f64;
            assert!(
                (got[d] - want).abs() < 1e-12,
                "dim {d}: {} vs {want}",
                got[d]
            );
        }
    }

    #[test]
    fn encoder_rejects_out_of_range() {
        let pe = PositionalEncoder::sinusoidal(4, 2, 0.4).unwrap();
        assert!(pe.encode(15).is_ok());
        assert!(matches!(
            pe.encode(16),
            Err(Error::IndexOutOfRange { index: 16, max: 16 })
        ));
    }

    #[test]
    fn table_roundtrip_through_file() {
        let pe = PositionalEncoder::sinusoidal(16, 8, 0.25).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.petb");
        pe.save_table(&path).unwrap();
        let loaded = PositionalEncoder::load_table(&path, 0.25).unwrap();
        assert_eq!(loaded.base_table, pe.base_table);
        for p in [0usize, 3, 15, 16, 200, 255] {
            assert_eq!(loaded.encode(p).unwrap(), pe.encode(p).unwrap());
        }
    }

    #[test]
    fn table_load_rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.petb");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(
            PositionalEncoder::load_table(&path, 0.4),
            Err(Error::Io(_)) | Err(Error::BadMagic { .. })
        ));
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&PE_TABLE_MAGIC);
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 8]); // half the declared payload
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            PositionalEncoder::load_table(&path, 0.4),
            Err(Error::TruncatedPayload { .. })
        ));
    }

    mod proptests {
        use super::*;
        use proptest::prelude::*;

        fn arb_batch() -> impl Strategy<Value = (Vec<FrameTokens>, usize)> {
            (1usize..=6, 1usize..=4, 1usize..=8)
                .prop_flat_map(|(frames, n, d)| {
                    let values = proptest::collection::vec(
                        proptest::collection::vec(proptest::collection::vec(-2.0f32..2.0, d), n),
                        frames,
                    );
                    (values, Just(n), 1usize..=frames)
                })
                .prop_map(|(values, n, target_frames)| {
                    let batch: Vec<FrameTokens> = values
                        .into_iter()
                        .enumerate()
                        .map(|(i, toks)| {
                            FrameTokens::raw(
                                i as u64,
                                toks.into_iter().map(|v| Token::new(v).unwrap()).collect(),
                            )
                            .unwrap()
                        })
                        .collect();
                    (batch, target_frames * n)
                })
                .prop_filter("batch must have no near-zero tokens", |(batch, _)| {
                    batch
                        .iter()
                        .all(|f| f.tokens().iter().all(|t| t.norm() > 1e-6))
                })
        }

        proptest! {
            /// The incremental implementation matches the full-recompute
            /// reference on every greedy schedule.
            #[test]
            fn matches_reference_consolidation((batch, target_tokens) in arb_batch()) {
                let n = batch[0].token_count();
                let out = consolidate(batch.clone(), target_tokens).unwrap();
                let reference = consolidate_reference(batch, target_tokens / n);
                prop_assert_eq!(out.len(), reference.len());
                for (a, b) in out.iter().zip(&reference) {
                    prop_assert_eq!(a.source_range(), b.source_range());
                    prop_assert_eq!(a.weight(), b.weight());
                    for (ta, tb) in a.tokens().iter().zip(b.tokens()) {
                        for (&x, &y) in ta.values().iter().zip(tb.values()) {
                            prop_assert!((x as f64 - y as f64).abs() < 1e-6);
                        }
                    }
                }
            }

            #[test]
            fn output_frame_count_is_exact((batch, target_tokens) in arb_batch()) {
                let n = batch[0].token_count();
                let input_frames = batch.len();
                let out = consolidate(batch, target_tokens).unwrap();
                prop_assert_eq!(out.len(), target_tokens / n);
                prop_assert_eq!(out.iter().map(|f| f.weight()).sum::<u64>() as usize, input_frames);
            }
        }
    }
}
