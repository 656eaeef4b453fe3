//! Exported video representations: the flattened token sequences handed to
//! whatever consumes the memory, with positional indices, per-token
//! provenance, and byte-cost accounting.
//!
//! Global mode exports long-term memory alone; breakpoint mode concatenates
//! long-term memory, the short-term buffer, and the current frame, in that
//! order, with positional indices continuing sequentially across the three
//! sections.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::long_memory::LongTermMemory;
use crate::short_memory::ShortTermMemory;
use crate::token::{FrameTokens, SourceRange, Token};

/// Magic bytes of the snapshot file format.
pub const SNAPSHOT_MAGIC: [u8; 4] = *b"MCSS";
/// Fixed header: magic + mode byte + token count + feature dim.
pub const SNAPSHOT_HEADER_BYTES: u64 = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotMode {
    Global,
    Breakpoint,
}

impl SnapshotMode {
    fn tag(self) -> u8 {
        match self {
            SnapshotMode::Global => 0,
            SnapshotMode::Breakpoint => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            SnapshotMode::Global => "global",
            SnapshotMode::Breakpoint => "breakpoint",
        }
    }
}

/// Which memory a snapshot token came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenOrigin {
    LongTerm,
    ShortTerm,
    Current,
}

impl TokenOrigin {
    fn tag(self) -> u8 {
        match self {
            TokenOrigin::LongTerm => 0,
            TokenOrigin::ShortTerm => 1,
            TokenOrigin::Current => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            TokenOrigin::LongTerm => "long_term",
            TokenOrigin::ShortTerm => "short_term",
            TokenOrigin::Current => "current",
        }
    }
}

/// Origin and raw source coverage of one exported token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenProvenance {
    pub origin: TokenOrigin,
    pub source_range: SourceRange,
}

/// A fully assembled video representation. `tokens`, `positional_indices`
/// and `provenance` are always the same length; `byte_cost` is the f32
/// storage size of the token payload.
#[derive(Debug, Clone, PartialEq)]
pub struct MemorySnapshot {
    mode: SnapshotMode,
    feature_dim: usize,
    tokens: Vec<Token>,
    positional_indices: Vec<u32>,
    provenance: Vec<TokenProvenance>,
    byte_cost: u64,
}

impl MemorySnapshot {
    fn assemble(
        mode: SnapshotMode,
        feature_dim: usize,
        tokens: Vec<Token>,
        positional_indices: Vec<u32>,
        provenance: Vec<TokenProvenance>,
    ) -> Self {
        debug_assert_eq!(tokens.len(), positional_indices.len());
        debug_assert_eq!(tokens.len(), provenance.len());
        let byte_cost = tokens.len() as u64 * feature_dim as u64 * 4;
        MemorySnapshot {
            mode,
            feature_dim,
            tokens,
            positional_indices,
            provenance,
            byte_cost,
        }
    }

    pub fn mode(&self) -> SnapshotMode {
        self.mode
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn positional_indices(&self) -> &[u32] {
        &self.positional_indices
    }

    pub fn provenance(&self) -> &[TokenProvenance] {
        &self.provenance
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    /// Token payload bytes: count x D x 4.
    pub fn byte_cost(&self) -> u64 {
        self.byte_cost
    }

    /// Tokens per origin label: (long_term, short_term, current).
    pub fn origin_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for p in &self.provenance {
            match p.origin {
                TokenOrigin::LongTerm => counts.0 += 1,
                TokenOrigin::ShortTerm => counts.1 += 1,
                TokenOrigin::Current => counts.2 += 1,
            }
        }
        counts
    }
}

// ── Assembly ────────────────────────────────────────────────────────────────

fn push_frame_tokens(
    frame: &FrameTokens,
    origin: TokenOrigin,
    next_index: &mut u32,
    tokens: &mut Vec<Token>,
    indices: &mut Vec<u32>,
    provenance: &mut Vec<TokenProvenance>,
) {
    for token in frame.tokens() {
        tokens.push(token.clone());
        indices.push(*next_index);
        *next_index += 1;
        provenance.push(TokenProvenance {
            origin,
            source_range: frame.source_range(),
        });
    }
}

/// Whole-stream representation: exactly the long-term tokens with their
/// stored positional indices. Never mutates the memory.
pub fn assemble_global(ltm: &LongTermMemory) -> MemorySnapshot {
    let mut tokens = Vec::with_capacity(ltm.total_tokens());
    let mut provenance = Vec::with_capacity(ltm.total_tokens());
    for frame in ltm.frames() {
        for token in frame.tokens() {
            tokens.push(token.clone());
            provenance.push(TokenProvenance {
                origin: TokenOrigin::LongTerm,
                source_range: frame.source_range(),
            });
        }
    }
    MemorySnapshot::assemble(
        SnapshotMode::Global,
        ltm.feature_dim(),
        tokens,
        ltm.positional_indices().to_vec(),
        provenance,
    )
}

/// Moment-in-time representation: long-term memory, then the short-term
/// buffer, then the current (not yet ingested) frame. Positional indices for
/// the short-term and current sections continue past the long-term indices.
pub fn assemble_breakpoint(
    ltm: &LongTermMemory,
    stm: &ShortTermMemory,
    current: &FrameTokens,
) -> Result<MemorySnapshot> {
    if current.token_count() != ltm.tokens_per_frame() {
        return Err(Error::DimensionMismatch {
            expected: ltm.tokens_per_frame(),
            actual: current.token_count(),
        });
    }
    if current.dim() != ltm.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: ltm.feature_dim(),
            actual: current.dim(),
        });
    }
    if let Some(newest) = stm.newest() {
        if current.source_range().first != newest.source_range().last + 1 {
            return Err(Error::StaleCurrent {
                newest: newest.source_range().last,
                current: current.source_range().first,
            });
        }
    }
    let capacity = ltm.total_tokens() + (stm.len() + 1) * ltm.tokens_per_frame();
    let mut tokens = Vec::with_capacity(capacity);
    let mut indices = Vec::with_capacity(capacity);
    let mut provenance = Vec::with_capacity(capacity);
    for frame in ltm.frames() {
        for token in frame.tokens() {
            tokens.push(token.clone());
            provenance.push(TokenProvenance {
                origin: TokenOrigin::LongTerm,
                source_range: frame.source_range(),
            });
        }
    }
    indices.extend_from_slice(ltm.positional_indices());
    let mut next_index = ltm.total_tokens() as u32;
    for frame in stm.contents() {
        push_frame_tokens(
            frame,
            TokenOrigin::ShortTerm,
            &mut next_index,
            &mut tokens,
            &mut indices,
            &mut provenance,
        );
    }
    push_frame_tokens(
        current,
        TokenOrigin::Current,
        &mut next_index,
        &mut tokens,
        &mut indices,
        &mut provenance,
    );
    Ok(MemorySnapshot::assemble(
        SnapshotMode::Breakpoint,
        ltm.feature_dim(),
        tokens,
        indices,
        provenance,
    ))
}

// ── Binary export ───────────────────────────────────────────────────────────

/// Write the snapshot as an MCSS file: magic, mode u8, token count u32,
/// feature dim u32, then `count` u32 positional indices, `count x dim` f32
/// values, and `count` provenance records (origin u8, first u64, last u64).
/// All integers and floats little-endian.
pub fn export_snapshot(snapshot: &MemorySnapshot, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&SNAPSHOT_MAGIC)?;
    out.write_all(&[snapshot.mode.tag()])?;
    out.write_all(&(snapshot.token_count() as u32).to_le_bytes())?;
    out.write_all(&(snapshot.feature_dim as u32).to_le_bytes())?;
    for &index in &snapshot.positional_indices {
        out.write_all(&index.to_le_bytes())?;
    }
    for token in &snapshot.tokens {
        for &v in token.values() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    for p in &snapshot.provenance {
        out.write_all(&[p.origin.tag()])?;
        out.write_all(&p.source_range.first.to_le_bytes())?;
        out.write_all(&p.source_range.last.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Read an MCSS file back; inverts [`export_snapshot`] bit-exactly.
pub fn read_snapshot(path: impl AsRef<Path>) -> Result<MemorySnapshot> {
    let file = File::open(&path)?;
    let file_len = file.metadata()?.len();
    let mut reader = BufReader::new(file);
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if magic != SNAPSHOT_MAGIC {
        return Err(Error::BadMagic {
            expected: SNAPSHOT_MAGIC,
            found: magic,
        });
    }
    let mut byte = [0u8; 1];
    reader.read_exact(&mut byte)?;
    let mode = match byte[0] {
        0 => SnapshotMode::Global,
        1 => SnapshotMode::Breakpoint,
        other => {
            return Err(Error::InvalidMode {
                found: other.to_string(),
            })
        }
    };
    let mut word = [0u8; 4];
    reader.read_exact(&mut word)?;
    let count = u32::from_le_bytes(word) as usize;
    reader.read_exact(&mut word)?;
    let dim = u32::from_le_bytes(word) as usize;
    let expected_len = SNAPSHOT_HEADER_BYTES
        + count as u64 * 4
        + count as u64 * dim as u64 * 4
        + count as u64 * 17;
    if file_len != expected_len {
        return Err(Error::TruncatedPayload {
            expected: expected_len,
            actual: file_len,
        });
    }
    let mut indices = Vec::with_capacity(count);
    for _ in 0..count {
        reader.read_exact(&mut word)?;
        indices.push(u32::from_le_bytes(word));
    }
    let mut tokens = Vec::with_capacity(count);
    let mut value_bytes = vec![0u8; dim * 4];
    for _ in 0..count {
        reader.read_exact(&mut value_bytes)?;
        let values: Vec<f32> = value_bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tokens.push(Token::new(values)?);
    }
    let mut provenance = Vec::with_capacity(count);
    let mut record = [0u8; 17];
    for _ in 0..count {
        reader.read_exact(&mut record)?;
        let origin = match record[0] {
            0 => TokenOrigin::LongTerm,
            1 => TokenOrigin::ShortTerm,
            2 => TokenOrigin::Current,
            other => {
                return Err(Error::InvalidProvenance {
                    found: other.to_string(),
                })
            }
        };
        let first = u64::from_le_bytes(record[1..9].try_into().unwrap());
        let last = u64::from_le_bytes(record[9..17].try_into().unwrap());
        if last < first {
            return Err(Error::Malformed {
                detail: format!("provenance range [{first}, {last}] is reversed"),
            });
        }
        provenance.push(TokenProvenance {
            origin,
            source_range: SourceRange { first, last },
        });
    }
    Ok(MemorySnapshot::assemble(
        mode, dim, tokens, indices, provenance,
    ))
}

// ── JSON export ─────────────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct ProvenanceDoc {
    origin: String,
    first: u64,
    last: u64,
}

#[derive(Serialize, Deserialize)]
struct SnapshotDoc {
    mode: String,
    feature_dim: usize,
    token_count: usize,
    byte_cost: u64,
    positional_indices: Vec<u32>,
    provenance: Vec<ProvenanceDoc>,
    tokens: Vec<Vec<f32>>,
}

/// Write the snapshot as JSON with the same fields as the binary format.
/// Floats serialize at full round-trip precision.
pub fn export_snapshot_json(snapshot: &MemorySnapshot, path: impl AsRef<Path>) -> Result<()> {
    let doc = SnapshotDoc {
        mode: snapshot.mode.name().to_string(),
        feature_dim: snapshot.feature_dim,
        token_count: snapshot.token_count(),
        byte_cost: snapshot.byte_cost,
        positional_indices: snapshot.positional_indices.clone(),
        provenance: snapshot
            .provenance
            .iter()
            .map(|p| ProvenanceDoc {
                origin: p.origin.name().to_string(),
                first: p.source_range.first,
                last: p.source_range.last,
            })
            .collect(),
        tokens: snapshot
            .tokens
            .iter()
            .map(|t| t.values().to_vec())
            .collect(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| Error::Malformed {
        detail: e.to_string(),
    })?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Read a JSON snapshot back, revalidating every invariant.
pub fn read_snapshot_json(path: impl AsRef<Path>) -> Result<MemorySnapshot> {
    let reader = BufReader::new(File::open(path)?);
    let doc: SnapshotDoc = serde_json::from_reader(reader).map_err(|e| Error::Malformed {
        detail: e.to_string(),
    })?;
    let mode = match doc.mode.as_str() {
        "global" => SnapshotMode::Global,
        "breakpoint" => SnapshotMode::Breakpoint,
        other => {
            return Err(Error::InvalidMode {
                found: other.to_string(),
            })
        }
    };
    if doc.tokens.len() != doc.token_count
        || doc.positional_indices.len() != doc.token_count
        || doc.provenance.len() != doc.token_count
    {
        return Err(Error::Malformed {
            detail: format!(
                "token_count {} disagrees with array lengths {}/{}/{}",
                doc.token_count,
                doc.tokens.len(),
                doc.positional_indices.len(),
                doc.provenance.len()
            ),
        });
    }
    let mut tokens = Vec::with_capacity(doc.token_count);
    for values in doc.tokens {
        if values.len() != doc.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: doc.feature_dim,
                actual: values.len(),
            });
        }
        tokens.push(Token::new(values)?);
    }
    let mut provenance = Vec::with_capacity(doc.token_count);
    for p in doc.provenance {
        let origin = match p.origin.as_str() {
            "long_term" => TokenOrigin::LongTerm,
            "short_term" => TokenOrigin::ShortTerm,
            "current" => TokenOrigin::Current,
            other => {
                return Err(Error::InvalidProvenance {
                    found: other.to_string(),
                })
            }
        };
        if p.last < p.first {
            return Err(Error::Malformed {
                detail: format!("provenance range [{}, {}] is reversed", p.first, p.last),
            });
        }
        provenance.push(TokenProvenance {
            origin,
            source_range: SourceRange {
                first: p.first,
                last: p.last,
            },
        });
    }
    let snapshot = MemorySnapshot::assemble(
        mode,
        doc.feature_dim,
        tokens,
        doc.positional_indices,
        provenance,
    );
    if snapshot.byte_cost != doc.byte_cost {
        return Err(Error::Malformed {
            detail: format!(
                "byte_cost {} disagrees with token payload {}",
                doc.byte_cost, snapshot.byte_cost
            ),
        });
    }
    Ok(snapshot)
}
