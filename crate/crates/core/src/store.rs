//! On-disk experiment store: one folder per run.
//!
//! ```text
//! <root>/<run id>/
//!   config.json           experiment config as run
//!   split.json            task sequence used
//!   accuracy_matrix.csv
//!   per_class.csv         class_id,class_name,correct,total,accuracy
//!   metrics.json          {acc, bwf, curve, per_class}
//!   run.json              run manifest: config, seeds, traces, file digests
//!   checkpoints/task_NNN/
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::{ExperimentConfig, Method, RunConfig};
use crate::memory::FramesPerVideo;
use crate::metrics::ClassAccuracy;

/// Environment variable naming the store root.
pub const STORE_ENV: &str = "VCIL_STORE";
pub const DEFAULT_ROOT: &str = "runs";

pub const MATRIX_FILE: &str = "accuracy_matrix.csv";
pub const PER_CLASS_FILE: &str = "per_class.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const RUN_FILE: &str = "run.json";
pub const CONFIG_FILE: &str = "config.json";
pub const SPLIT_FILE: &str = "split.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Clone, Debug)]
pub struct ExperimentStore {
    root: PathBuf,
}

impl ExperimentStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// `explicit`, else `$VCIL_STORE`, else `./runs`.
    pub fn locate(explicit: Option<&Path>) -> Self {
        match explicit {
            Some(p) => Self::new(p),
            None => Self::new(std::env::var_os(STORE_ENV).map_or_else(|| PathBuf::from(DEFAULT_ROOT), PathBuf::from)),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    /// Creates the run folder. An existing folder is refused unless `force`
    /// (wipe it) or `resume` (keep it, checkpoints included).
    pub fn open_run(&self, run_id: &str, force: bool, resume: bool) -> Result<PathBuf> {
        let dir = self.run_dir(run_id);
        if dir.exists() {
            if force {
                std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            } else if !resume {
                return Err(Error::RunExists(dir.display().to_string()));
            }
        }
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }
}

/// `<method>_<dataset>_t<tasks>_f<frames per video>_s<seed>`; methods without
/// memory use `fnone`.
pub fn run_id(method: Method, dataset: &str, num_tasks: usize, fpv: Option<FramesPerVideo>, seed: u64) -> String {
    let fpv = match fpv {
        Some(FramesPerVideo::Count(k)) => k.to_string(),
        Some(FramesPerVideo::All) => "all".to_string(),
        None => "none".to_string(),
    };
    let dataset: String = dataset
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '-' })
        .collect();
    format!("{method}_{dataset}_t{num_tasks}_f{fpv}_s{seed}")
}

/// Provenance written next to the results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub run_id: String,
    pub dataset: String,
    pub experiment: ExperimentConfig,
    pub run: RunConfig,
    pub split_seed: u64,
    pub num_tasks: usize,
    pub frame_capacity: Option<usize>,
    pub memory_trace: Vec<usize>,
    pub memory_class_counts: Vec<BTreeMap<usize, usize>>,
    pub wall_clock_seconds: Vec<f64>,
    /// SHA-256 of each artifact, by file name.
    pub digests: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(RUN_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Corrupt {
            path,
            message: e.to_string(),
        })
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub fn per_class_csv(rows: &[ClassAccuracy], class_names: &[String]) -> String {
    let mut out = String::from("class_id,class_name,correct,total,accuracy\n");
    for r in rows {
        let name = class_names.get(r.class_id).map_or("", String::as_str);
        out.push_str(&format!("{},{},{},{},{}\n", r.class_id, name.replace(',', ";"), r.correct, r.total, r.accuracy));
    }
    out
}

/// Parses [`per_class_csv`] output; returns rows and class names.
pub fn parse_per_class_csv(text: &str) -> std::result::Result<Vec<(ClassAccuracy, String)>, String> {
    let mut lines = text.lines();
    if lines.next() != Some("class_id,class_name,correct,total,accuracy") {
        return Err("unexpected per-class header".into());
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 5 {
                return Err(format!("row {i}: expected 5 cells"));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|e| format!("row {i}: {e}"));
            Ok((
                ClassAccuracy {
                    class_id: num(cells[0])?,
                    correct: num(cells[2])?,
                    total: num(cells[3])?,
                    accuracy: cells[4].parse().map_err(|e| format!("row {i}: {e}"))?,
                },
                cells[1].to_string(),
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_ids_embed_the_run_coordinates() {
        let id = run_id("icarl+tc".parse().unwrap(), "synthetic10", 5, Some(FramesPerVideo::Count(8)), 3);
        assert_eq!(id, "icarl+tc_synthetic10_t5_f8_s3");
        let id = run_id("ewc".parse().unwrap(), "ucf/101", 10, None, 0);
        assert_eq!(id, "ewc_ucf-101_t10_fnone_s0");
    }

    #[test]
    fn existing_runs_need_force() {
        let dir = tempfile::tempdir().unwrap();
        let store = ExperimentStore::new(dir.path());
        let run = store.open_run("a", false, false).unwrap();
        std::fs::write(run.join("x"), "1").unwrap();
        assert!(matches!(store.open_run("a", false, false), Err(Error::RunExists(_))));
        assert!(store.open_run("a", false, true).unwrap().join("x").exists());
        assert!(!store.open_run("a", true, false).unwrap().join("x").exists());
    }

    #[test]
    fn per_class_round_trip() {
        let rows = vec![ClassAccuracy {
            class_id: 1,
            correct: 3,
            total: 4,
            accuracy: 0.75,
        }];
        let names = vec!["a".to_string(), "b,c".to_string()];
        let back = parse_per_class_csv(&per_class_csv(&rows, &names)).unwrap();
        assert_eq!(back[0].0, rows[0]);
        assert_eq!(back[0].1, "b;c");
    }

    #[test]
    fn digest_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f");
        std::fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
