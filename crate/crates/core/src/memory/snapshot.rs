//! Memory snapshots on disk.
//!
//! A snapshot directory holds `index.json` (budget, class count, and per-entry
//! metadata) and `frames.bin`, laid out as:
//!
//! ```text
//! magic  b"VCMF"
//! u32    format version (1)
//! u32    entry count
//! per entry, in index order:
//!   u32  k (frames), u32 h, u32 w
//!   k*h*w bytes, frame-major then row-major
//! ```
//!
//! All integers are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpisodicMemory, MemoryBudget, MemoryEntry};
use crate::dataset::Video;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VCMF";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Index {
    budget: MemoryBudget,
    classes_seen: usize,
    entries: Vec<IndexEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexEntry {
    video_id: String,
    class_id: usize,
    selection_rank: usize,
    frame_indices: Vec<usize>,
}

pub fn save_snapshot(memory: &EpisodicMemory, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let entries: Vec<&MemoryEntry> = memory.entries().collect();
    let index = Index {
        budget: *memory.budget(),
        classes_seen: memory.classes_seen(),
        entries: entries
            .iter()
            .map(|e| IndexEntry {
                video_id: e.video_id.clone(),
                class_id: e.class_id,
                selection_rank: e.selection_rank,
                frame_indices: e.frame_indices.clone(),
            })
            .collect(),
    };
    let index_path = dir.join("index.json");
    std::fs::write(&index_path, serde_json::to_string_pretty(&index)?)
        .map_err(|e| Error::io(&index_path, e))?;

    let mut blob = Vec::new();
    blob.extend_from_slice(MAGIC);
    blob.extend_from_slice(&VERSION.to_le_bytes());
    blob.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in &entries {
        for d in [e.frames.frames, e.frames.height, e.frames.width] {
            blob.extend_from_slice(&(d as u32).to_le_bytes());
        }
        blob.extend_from_slice(&e.frames.data);
    }
    let blob_path = dir.join("frames.bin");
    std::fs::write(&blob_path, blob).map_err(|e| Error::io(&blob_path, e))
}

pub fn load_snapshot(dir: &Path) -> Result<EpisodicMemory> {
    let index_path = dir.join("index.json");
    let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let index: Index = serde_json::from_str(&text)?;
    let blob_path = dir.join("frames.bin");
    let blob = std::fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    let corrupt = |message: &str| Error::Corrupt {
        path: blob_path.clone(),
        message: message.to_string(),
    };

    let mut cur = Cursor { buf: &blob, pos: 0 };
    if cur.take(4).ok_or_else(|| corrupt("truncated header"))? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    if cur.u32().ok_or_else(|| corrupt("truncated header"))? != VERSION {
        return Err(corrupt("unsupported version"));
    }
    let count = cur.u32().ok_or_else(|| corrupt("truncated header"))? as usize;
    if count != index.entries.len() {
        return Err(corrupt("entry count disagrees with index.json"));
    }
    let mut entries = Vec::with_capacity(count);
    for meta in index.entries {
        let k = cur.u32().ok_or_else(|| corrupt("truncated entry header"))? as usize;
        let h = cur.u32().ok_or_else(|| corrupt("truncated entry header"))? as usize;
        let w = cur.u32().ok_or_else(|| corrupt("truncated entry header"))? as usize;
        let data = cur.take(k * h * w).ok_or_else(|| corrupt("truncated frame data"))?;
        if meta.frame_indices.len() != k {
            return Err(corrupt("frame index count disagrees with frame data"));
        }
        entries.push(MemoryEntry {
            video_id: meta.video_id,
            class_id: meta.class_id,
            frame_indices: meta.frame_indices,
            frames: Video::new(k, h, w, data.to_vec())?,
            selection_rank: meta.selection_rank,
        });
    }
    if cur.pos != blob.len() {
        return Err(corrupt("trailing bytes"));
    }
    EpisodicMemory::from_parts(index.budget, index.classes_seen, entries)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let out = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}
