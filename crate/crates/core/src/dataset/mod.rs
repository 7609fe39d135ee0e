//! Manifests, labeling rules, task splits and the synthetic benchmark.

pub mod frames;
pub mod labels;
pub mod manifest;
pub mod splits;
pub mod synthetic;

pub use frames::{DefaultFrames, DirectoryFrames, FrameProvider, Video, VideoStore};
pub use labels::{assign_untrimmed_labels, trim_manifest, DiscardStats};
pub use manifest::{
    load_manifest, primary_label, DatasetManifest, Partition, SegmentAnnotation, TrimMode,
    VideoRecord,
};
pub use splits::{generate_task_sequence, split_stats, SplitStats, Task, TaskSequence};
pub use synthetic::{generate_synthetic_dataset, SyntheticConfig, SyntheticVideoKey};
