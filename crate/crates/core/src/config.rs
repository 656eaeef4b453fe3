//! Stream-wide configuration shared by every pipeline stage.

use crate::error::{Error, Result};

/// Shape and capacity parameters for one token stream.
///
/// Defaults follow the reference operating point: 32 tokens per frame, a
/// 10-frame ingest window, an 8-frame short-term buffer, and 64 consolidated
/// tokens per flush.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    /// Tokens per frame (N).
    pub tokens_per_frame: usize,
    /// Feature dimension of each token (D).
    pub feature_dim: usize,
    /// Ingest window size in frames (C). Affects I/O batching only.
    pub window_size: usize,
    /// Short-term memory capacity in frames (K).
    pub short_capacity: usize,
    /// Token budget each flushed batch is consolidated down to. Must be a
    /// multiple of `tokens_per_frame` and strictly fewer frames than
    /// `short_capacity`.
    pub consolidated_capacity: usize,
    /// Base positional-encoding table length (n). Indices are addressable
    /// up to n^2.
    pub base_pe_length: usize,
    /// Weight of the coarse component in the two-level positional
    /// decomposition. Must lie in (0, 1) and differ from 0.5 so the two
    /// levels stay distinguishable.
    pub pe_alpha: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            tokens_per_frame: 32,
            feature_dim: 768,
            window_size: 10,
            short_capacity: 8,
            consolidated_capacity: 64,
            base_pe_length: 512,
            pe_alpha: 0.4,
        }
    }
}

impl StreamConfig {
    /// Check every field against its documented constraints.
    pub fn validate(&self) -> Result<()> {
        fn positive(value: usize, name: &str) -> Result<()> {
            if value == 0 {
                return Err(Error::InvalidConfig {
                    reason: format!("{name} must be positive"),
                });
            }
            Ok(())
        }
        positive(self.tokens_per_frame, "tokens_per_frame")?;
        positive(self.feature_dim, "feature_dim")?;
        positive(self.window_size, "window_size")?;
        positive(self.short_capacity, "short_capacity")?;
        positive(self.consolidated_capacity, "consolidated_capacity")?;
        positive(self.base_pe_length, "base_pe_length")?;
        if !self
            .consolidated_capacity
            .is_multiple_of(self.tokens_per_frame)
        {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "consolidated_capacity {} is not a multiple of tokens_per_frame {}",
                    self.consolidated_capacity, self.tokens_per_frame
                ),
            });
        }
        if self.consolidated_capacity / self.tokens_per_frame >= self.short_capacity {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "consolidated_capacity {} must span fewer than short_capacity {} frames",
                    self.consolidated_capacity, self.short_capacity
                ),
            });
        }
        // Positional indices are serialized as u32; n^2 must stay addressable.
        if self.base_pe_length > 65_535 {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "base_pe_length {} exceeds 65535; squared range must fit u32",
                    self.base_pe_length
                ),
            });
        }
        if !(self.pe_alpha > 0.0 && self.pe_alpha < 1.0) || self.pe_alpha == 0.5 {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "pe_alpha {} must lie in (0, 1) and differ from 0.5",
                    self.pe_alpha
                ),
            });
        }
        Ok(())
    }

    /// Consolidated frames produced per flush.
    pub fn consolidated_frames(&self) -> usize {
        self.consolidated_capacity / self.tokens_per_frame
    }

    /// Maximum addressable positional index plus one (n^2).
    pub fn positional_range(&self) -> usize {
        self.base_pe_length * self.base_pe_length
    }
}
