//! Token and frame types plus the two numeric kernels everything else is
//! built on: position-aligned frame cosine similarity and weighted frame
//! merging.
//!
//! Values are stored as `f32` (storage bytes are what the memory accounting
//! measures) while similarity and merge arithmetic accumulates in `f64`,
//! which keeps iterated merges equal to the exact mean of their source
//! frames to well under 1e-6.

use crate::error::{Error, Result};

/// L2 norms below this are treated as degenerate input.
pub const ZERO_NORM_EPSILON: f64 = 1e-12;

/// A D-dimensional feature vector, the atomic unit of memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    values: Vec<f32>,
}

impl Token {
    /// Build a token, rejecting NaN/infinite entries and empty vectors.
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Token { values })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// L2 norm, accumulated in f64.
    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| {
                let v = v as f64;
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Inclusive range of raw stream indices a frame covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceRange {
    pub first: u64,
    pub last: u64,
}

impl SourceRange {
    pub fn single(index: u64) -> Self {
        SourceRange {
            first: index,
            last: index,
        }
    }

    /// Number of raw frames covered; at least 1.
    pub fn frame_count(&self) -> u64 {
        self.last - self.first + 1
    }
}

/// The N tokens of one (possibly merged) frame, together with how many raw
/// frames it summarizes. `weight == source_range.len()` always, so iterated
/// merges remain exact means of the original frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTokens {
    tokens: Vec<Token>,
    weight: u64,
    source_range: SourceRange,
}

impl FrameTokens {
    /// A raw frame straight off the stream: weight 1, covering one index.
    pub fn raw(index: u64, tokens: Vec<Token>) -> Result<Self> {
        Self::from_parts(tokens, SourceRange::single(index))
    }

    /// Build a frame covering an arbitrary contiguous range; the weight is
    /// the range length.
    pub fn from_parts(tokens: Vec<Token>, source_range: SourceRange) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        let dim = tokens[0].dim();
        for t in &tokens[1..] {
            if t.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: t.dim(),
                });
            }
        }
        if source_range.last < source_range.first {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "source range [{}, {}] is reversed",
                    source_range.first, source_range.last
                ),
            });
        }
        Ok(FrameTokens {
            weight: source_range.frame_count(),
            tokens,
            source_range,
        })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Count of raw frames this frame summarizes (1 for raw frames).
    pub fn weight(&self) -> u64 {
        self.weight
    }

    pub fn source_range(&self) -> SourceRange {
        self.source_range
    }

    /// N: tokens in this frame.
    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    /// D: feature dimension.
    pub fn dim(&self) -> usize {
        self.tokens[0].dim()
    }
}

/// Cosine similarity between two tokens, accumulated in f64 and clamped to
/// [-1, 1]. A near-zero norm on either side is an error: defaulting it to 0
/// would silently corrupt the greedy merge argmax.
pub fn token_cosine(a: &Token, b: &Token) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let mut dot = 0.0f64;
    let mut norm_a = 0.0f64;
    let mut norm_b = 0.0f64;
    for (&x, &y) in a.values.iter().zip(&b.values) {
        let x = x as f64;
        let y = y as f64;
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    let norm_a = norm_a.sqrt();
    let norm_b = norm_b.sqrt();
    if norm_a < ZERO_NORM_EPSILON {
        return Err(Error::ZeroVector { token_index: 0 });
    }
    if norm_b < ZERO_NORM_EPSILON {
        return Err(Error::ZeroVector { token_index: 0 });
    }
    Ok((dot / (norm_a * norm_b)).clamp(-1.0, 1.0))
}

/// Mean cosine similarity over aligned token positions j = 0..N. Symmetric in
/// its arguments bit-for-bit: the summation order is position-major for both.
pub fn frame_similarity(a: &FrameTokens, b: &FrameTokens) -> Result<f64> {
    if a.token_count() != b.token_count() {
        return Err(Error::DimensionMismatch {
            expected: a.token_count(),
            actual: b.token_count(),
        });
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let mut sum = 0.0f64;
    for (j, (ta, tb)) in a.tokens.iter().zip(&b.tokens).enumerate() {
        sum += token_cosine(ta, tb).map_err(|e| match e {
            Error::ZeroVector { .. } => Error::ZeroVector { token_index: j },
            other => other,
        })?;
    }
    Ok(sum / a.token_count() as f64)
}

/// Merge two stream-adjacent frames into one. Each output token is the
/// weight-weighted mean of the aligned input tokens, so the result is exactly
/// the arithmetic mean of every raw frame the pair covers. Weights add and
/// the source ranges concatenate.
pub fn merge_frames(a: &FrameTokens, b: &FrameTokens) -> Result<FrameTokens> {
    if a.token_count() != b.token_count() {
        return Err(Error::DimensionMismatch {
            expected: a.token_count(),
            actual: b.token_count(),
        });
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    if a.source_range.last + 1 != b.source_range.first {
        return Err(Error::NonAdjacent {
            left_last: a.source_range.last,
            right_first: b.source_range.first,
        });
    }
    let wa = a.weight as f64;
    let wb = b.weight as f64;
    let total = wa + wb;
    let tokens = a
        .tokens
        .iter()
        .zip(&b.tokens)
        .map(|(ta, tb)| {
            let values = ta
                .values
                .iter()
                .zip(&tb.values)
                .map(|(&x, &y)| ((wa * x as f64 + wb * y as f64) / total) as f32)
                .collect();
            // Finite inputs and positive weights keep the mean finite.
            Token { values }
        })
        .collect();
    Ok(FrameTokens {
        tokens,
        weight: a.weight + b.weight,
        source_range: SourceRange {
            first: a.source_range.first,
            last: b.source_range.last,
        },
    })
}
