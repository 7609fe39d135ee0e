//! Task-boundary checkpoints.
//!
//! `task_NNN/` holds `model.bin`, `memory/` (snapshot), `importance.bin` and
//! `state.json`; `state.json` is written last and marks the folder complete.
//!
//! `model.bin` layout (little-endian): magic `b"VCRN"`, `u32` version,
//! `u32` height, width, conv1 channels, conv2 channels, classes, `u64`
//! parameter count `n`, then `n` × `f64`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::methods::BiasCorrectionLayer;
use crate::metrics::ClassAccuracy;
use crate::model::{ReferenceNet, ReferenceNetConfig, VideoClassifier};

const MAGIC: &[u8; 4] = b"VCRN";
const VERSION: u32 = 1;

pub fn model_to_bytes(net: &ReferenceNet) -> Vec<u8> {
    let c = net.config();
    let params = net.params();
    let mut out = Vec::with_capacity(36 + 8 * params.len());
    out.extend_from_slice(MAGIC);
    for v in [VERSION as usize, c.height, c.width, c.conv1_channels, c.conv2_channels, net.num_classes()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> std::result::Result<ReferenceNet, String> {
    if bytes.len() < 36 || &bytes[..4] != MAGIC {
        return Err("not a model checkpoint".into());
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    if word(0) != VERSION as usize {
        return Err("unsupported model checkpoint version".into());
    }
    let config = ReferenceNetConfig {
        height: word(1),
        width: word(2),
        conv1_channels: word(3),
        conv2_channels: word(4),
    };
    let classes = word(5);
    let n = u64::from_le_bytes(bytes[28..36].try_into().unwrap()) as usize;
    if bytes.len() != 36 + 8 * n {
        return Err(format!("expected {} bytes, found {}", 36 + 8 * n, bytes.len()));
    }
    let params = bytes[36..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ReferenceNet::from_params(config, classes, params).ok_or_else(|| "parameter count disagrees with shape".into())
}

pub fn save_model(net: &ReferenceNet, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ReferenceNet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes).map_err(|message| Error::Corrupt {
        path: path.to_path_buf(),
        message,
    })
}

/// Loop bookkeeping saved next to the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct Progress {
    pub next_task: usize,
    /// Head slot → class id.
    pub slots: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
    pub memory_trace: Vec<usize>,
    pub memory_class_counts: Vec<BTreeMap<usize, usize>>,
    pub wall_clock: Vec<f64>,
    pub bias: Option<BiasCorrectionLayer>,
    pub per_class: Vec<ClassAccuracy>,
}

pub(crate) fn task_dir(root: &Path, task: usize) -> PathBuf {
    root.join(format!("task_{task:03}"))
}

/// The most recent complete task folder, if any.
pub(crate) fn latest(root: &Path) -> Option<(usize, PathBuf)> {
    let entries = std::fs::read_dir(root).ok()?;
    entries
        .filter_map(|e| {
            let e = e.ok()?;
            let name = e.file_name().into_string().ok()?;
            let t: usize = name.strip_prefix("task_")?.parse().ok()?;
            e.path().join("state.json").is_file().then(|| (t, e.path()))
        })
        .max_by_key(|(t, _)| *t)
}
