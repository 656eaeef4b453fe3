//! Streaming hierarchical token memory for long feature streams.
//!
//! Dense per-frame token grids are ingested through a sliding window into a
//! fixed-capacity FIFO short-term buffer. When the buffer overflows, the
//! whole window is consolidated — the most similar adjacent frames are
//! greedily merged until a fixed token budget remains — and appended to a
//! sparse, append-only long-term store. The result is bounded per-frame
//! memory growth regardless of stream length, with two export modes:
//!
//! * **global** — the long-term store alone, summarizing the whole stream;
//! * **breakpoint** — long-term store + short-term buffer + the current
//!   frame, for reasoning about a specific moment.
//!
//! Merged frames track how many raw frames they cover, so every consolidated
//! token is exactly the mean of the originals it summarizes. Positional
//! indices are assigned in append order and stay addressable beyond the base
//! table length via a two-level index decomposition.

pub mod config;
pub mod error;
pub mod long_memory;
pub mod short_memory;
pub mod snapshot;
pub mod stream;
pub mod token;

pub use config::StreamConfig;
pub use error::{Error, Result};
pub use long_memory::{consolidate, LongTermMemory, PositionalEncoder};
pub use short_memory::{EvictionPolicy, FlushSignal, ShortTermMemory};
pub use snapshot::{
    assemble_breakpoint, assemble_global, export_snapshot, export_snapshot_json, read_snapshot,
    read_snapshot_json, MemorySnapshot, SnapshotMode, TokenOrigin, TokenProvenance,
};
pub use stream::{
    drive, drive_with, generate_synthetic, read_stream, write_stream, DriveError, MemoryPipeline,
    PipelineStats, SyntheticSceneSpec, TokenStreamReader, TokenStreamWriter,
};
pub use token::{frame_similarity, merge_frames, token_cosine, FrameTokens, SourceRange, Token};
