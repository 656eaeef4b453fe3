//! Fixed-capacity FIFO buffer of raw frames and the overflow signal that
//! feeds consolidation.
//!
//! The buffer flushes in whole batches: when a push would exceed capacity,
//! the entire K-frame window is handed back for consolidation and the buffer
//! restarts from the overflowing frame. Every consolidation input is
//! therefore exactly K frames.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::token::FrameTokens;

/// How the buffer evicts when full. Only whole-window flushing is
/// implemented; the variant exists so a per-frame eviction mode has a slot
/// to land in later.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvictionPolicy {
    #[default]
    BatchFlush,
}

/// Outcome of a push: either the buffer absorbed the frame, or it overflowed
/// and hands back the full window (oldest first) for consolidation.
#[derive(Debug, Clone, PartialEq)]
pub enum FlushSignal {
    NoFlush,
    Flushed(Vec<FrameTokens>),
}

/// FIFO short-term memory of raw frames, capacity K.
#[derive(Debug, Clone)]
pub struct ShortTermMemory {
    frames: VecDeque<FrameTokens>,
    capacity: usize,
    policy: EvictionPolicy,
    /// Next raw index the stream must supply; survives flushes.
    next_index: Option<u64>,
}

impl ShortTermMemory {
    pub fn new(capacity: usize) -> Self {
        Self::with_policy(capacity, EvictionPolicy::BatchFlush)
    }

    pub fn with_policy(capacity: usize, policy: EvictionPolicy) -> Self {
        assert!(capacity >= 1, "short-term capacity must be at least 1");
        ShortTermMemory {
            frames: VecDeque::with_capacity(capacity + 1),
            capacity,
            policy,
            next_index: None,
        }
    }

    /// Append a raw frame. Returns the flushed window when the push
    /// overflows capacity; the buffer then contains only the new frame.
    pub fn push_frame(&mut self, frame: FrameTokens) -> Result<FlushSignal> {
        if frame.weight() != 1 {
            return Err(Error::WeightNotOne {
                weight: frame.weight(),
            });
        }
        let index = frame.source_range().first;
        if let Some(expected) = self.next_index {
            if index != expected {
                return Err(Error::OutOfOrder {
                    expected,
                    actual: index,
                });
            }
        }
        self.next_index = Some(index + 1);

        let EvictionPolicy::BatchFlush = self.policy;
        if self.frames.len() == self.capacity {
            let flushed = self.frames.drain(..).collect();
            self.frames.push_back(frame);
            Ok(FlushSignal::Flushed(flushed))
        } else {
            self.frames.push_back(frame);
            Ok(FlushSignal::NoFlush)
        }
    }

    /// Stored frames, oldest first. Never mutates.
    pub fn contents(&self) -> impl Iterator<Item = &FrameTokens> + '_ {
        self.frames.iter()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Newest stored frame, if any.
    pub fn newest(&self) -> Option<&FrameTokens> {
        self.frames.back()
    }
}
