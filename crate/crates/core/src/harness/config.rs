//! Run configuration and the experiment config file.
//!
//! The config file is one JSON document with sections `dataset`, `split`,
//! `method`, `training`, `memory` and `tc`. Unknown keys are rejected. Paths
//! are resolved against the config file's directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::{FramesPerVideo, MemoryBudget};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MethodKind {
    /// Plain sequential cross-entropy, no memory, no penalty. A floor for
    /// comparisons.
    Finetune,
    Ewc,
    Mas,
    /// Random exemplars, distillation and nearest-mean inference.
    Naive,
    /// Herding exemplars, distillation and nearest-mean inference.
    Icarl,
    /// Herding exemplars, softmax distillation and a bias-correction stage.
    Bic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Method {
    pub kind: MethodKind,
    /// Adds the temporal-consistency term.
    pub tc: bool,
}

impl Method {
    pub const ALL: [&'static str; 9] =
        ["finetune", "ewc", "mas", "naive", "icarl", "bic", "naive+tc", "icarl+tc", "bic+tc"];

    pub fn uses_memory(self) -> bool {
        matches!(self.kind, MethodKind::Naive | MethodKind::Icarl | MethodKind::Bic)
    }

    pub fn uses_penalty(self) -> bool {
        matches!(self.kind, MethodKind::Ewc | MethodKind::Mas)
    }

    pub fn nearest_mean(self) -> bool {
        matches!(self.kind, MethodKind::Naive | MethodKind::Icarl)
    }

    pub fn herding(self) -> bool {
        matches!(self.kind, MethodKind::Icarl | MethodKind::Bic)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (base, tc) = match lower.strip_suffix("+tc") {
            Some(b) => (b, true),
            None => (lower.as_str(), false),
        };
        let kind = match base {
            "finetune" => MethodKind::Finetune,
            "ewc" => MethodKind::Ewc,
            "mas" => MethodKind::Mas,
            "naive" => MethodKind::Naive,
            "icarl" => MethodKind::Icarl,
            "bic" => MethodKind::Bic,
            _ => {
                return Err(Error::Config(format!(
                    "unknown method {s:?}; expected one of {}",
                    Self::ALL.join(", ")
                )))
            }
        };
        let m = Method { kind, tc };
        if tc && !m.uses_memory() {
            return Err(Error::Config(format!(
                "{s:?}: the consistency term is only defined for memory methods"
            )));
        }
        Ok(m)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.kind {
            MethodKind::Finetune => "finetune",
            MethodKind::Ewc => "ewc",
            MethodKind::Mas => "mas",
            MethodKind::Naive => "naive",
            MethodKind::Icarl => "icarl",
            MethodKind::Bic => "bic",
        };
        f.write_str(base)?;
        if self.tc {
            f.write_str("+tc")?;
        }
        Ok(())
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemorySpec {
    pub max_video_instances: usize,
    pub frames_per_video: FramesPerVideo,
}

impl MemorySpec {
    /// `avg_frames` is only consulted for full-length storage.
    pub fn budget(&self, avg_frames: f64) -> Result<MemoryBudget> {
        MemoryBudget::new(self.max_video_instances, self.frames_per_video, Some(avg_frames))
    }
}

/// Everything the training loop needs besides data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub epochs_memory: usize,
    pub epochs_reg: usize,
    pub learning_rate: f64,
    pub segments: usize,
    pub batch_size: usize,
    pub lambda_tc: f64,
    pub lambda_reg: Option<f64>,
    pub memory: Option<MemorySpec>,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(method: Method) -> Self {
        let t = TrainingSection::default();
        Self {
            method,
            epochs_memory: t.epochs_memory,
            epochs_reg: t.epochs_reg,
            learning_rate: t.learning_rate,
            segments: t.segments,
            batch_size: t.batch_size,
            lambda_tc: TcSection::default().lambda,
            lambda_reg: None,
            memory: None,
            conv1_channels: t.conv1_channels,
            conv2_channels: t.conv2_channels,
            seed: t.seed,
        }
    }

    /// Training epochs per task for this method.
    pub fn epochs(&self) -> usize {
        if self.method.uses_memory() {
            self.epochs_memory
        } else {
            self.epochs_reg
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::Config(format!("{name} must be positive")))
            } else {
                Ok(())
            }
        };
        positive("epochs", self.epochs())?;
        positive("segments", self.segments)?;
        positive("batch_size", self.batch_size)?;
        positive("conv1_channels", self.conv1_channels)?;
        positive("conv2_channels", self.conv2_channels)?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda_tc) {
            return Err(Error::Config("tc.lambda must lie in [0, 1]".into()));
        }
        if self.method.uses_memory() {
            match self.memory {
                None => {
                    return Err(Error::Config(format!("method {} needs a memory section", self.method)))
                }
                Some(m) if m.max_video_instances == 0 => {
                    return Err(Error::Config("memory.max_video_instances must be positive".into()))
                }
                Some(MemorySpec {
                    frames_per_video: FramesPerVideo::Count(0),
                    ..
                }) => return Err(Error::Config("memory.frames_per_video must be positive".into())),
                _ => {}
            }
        }
        if self.method.uses_penalty() {
            match self.lambda_reg {
                Some(l) if l > 0.0 && l.is_finite() => {}
                Some(_) => return Err(Error::Config("lambda_reg must be positive".into())),
                None => {
                    return Err(Error::Config(format!("method {} needs method.lambda_reg", self.method)))
                }
            }
        }
        Ok(())
    }
}

fn default_epochs_memory() -> usize {
    50
}
fn default_epochs_reg() -> usize {
    20
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_segments() -> usize {
    8
}
fn default_batch_size() -> usize {
    8
}
fn default_conv1() -> usize {
    8
}
fn default_conv2() -> usize {
    24
}
fn default_lambda_tc() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// JSONL manifest.
    pub manifest: PathBuf,
    /// Root for relative frame directories; defaults to the manifest's folder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    /// Task-sequence file; the `--split` flag overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    pub num_tasks: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub name: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_reg: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default = "default_epochs_memory")]
    pub epochs_memory: usize,
    #[serde(default = "default_epochs_reg")]
    pub epochs_reg: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_segments")]
    pub segments: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_conv1")]
    pub conv1_channels: usize,
    #[serde(default = "default_conv2")]
    pub conv2_channels: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            epochs_memory: default_epochs_memory(),
            epochs_reg: default_epochs_reg(),
            learning_rate: default_learning_rate(),
            segments: default_segments(),
            batch_size: default_batch_size(),
            conv1_channels: default_conv1(),
            conv2_channels: default_conv2(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcSection {
    #[serde(default = "default_lambda_tc")]
    pub lambda: f64,
}

impl Default for TcSection {
    fn default() -> Self {
        Self {
            lambda: default_lambda_tc(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub split: SplitSection,
    pub method: MethodSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<MemorySpec>,
    #[serde(default)]
    pub tc: TcSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Loads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.dataset.manifest);
        if let Some(f) = cfg.dataset.frames.as_mut() {
            resolve(f);
        }
        if let Some(f) = cfg.split.file.as_mut() {
            resolve(f);
        }
        Ok(cfg)
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let t = &self.training;
        let rc = RunConfig {
            method: self.method.name,
            epochs_memory: t.epochs_memory,
            epochs_reg: t.epochs_reg,
            learning_rate: t.learning_rate,
            segments: t.segments,
            batch_size: t.batch_size,
            lambda_tc: self.tc.lambda,
            lambda_reg: self.method.lambda_reg,
            memory: self.memory,
            conv1_channels: t.conv1_channels,
            conv2_channels: t.conv2_channels,
            seed: t.seed,
        };
        rc.validate()?;
        Ok(rc)
    }
}
