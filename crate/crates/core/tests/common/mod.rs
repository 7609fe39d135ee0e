#![allow(dead_code)]

use vcil::dataset::{generate_synthetic_dataset, generate_task_sequence, DatasetManifest, SyntheticConfig, TaskSequence, VideoStore};
use vcil::harness::{MemorySpec, RunConfig};
use vcil::memory::FramesPerVideo;

/// A small synthetic benchmark: `classes` classes of 12 videos, 8 frames of 12×12.
pub fn small_benchmark(classes: usize, tasks: usize, seed: u64) -> (DatasetManifest, TaskSequence, VideoStore) {
    let (manifest, videos) = generate_synthetic_dataset(&SyntheticConfig::new(classes, 12, 8, (12, 12), seed)).unwrap();
    let seq = generate_task_sequence(&manifest, tasks, seed).unwrap();
    (manifest, seq, videos)
}

/// Fast settings for end-to-end tests.
pub fn quick_config(method: &str, fpv: usize) -> RunConfig {
    let mut rc = RunConfig::new(method.parse().unwrap());
    rc.epochs_memory = 2;
    rc.epochs_reg = 2;
    rc.learning_rate = 1e-2;
    rc.conv1_channels = 4;
    rc.conv2_channels = 8;
    rc.lambda_reg = Some(1e3);
    rc.memory = Some(MemorySpec {
        max_video_instances: 12,
        frames_per_video: FramesPerVideo::Count(fpv),
    });
    rc
}

/// Writes a synthetic manifest and an experiment config into `dir`; returns
/// the config path. Training is cut down to keep end-to-end runs quick.
pub fn write_experiment(dir: &std::path::Path, method: &str, fpv: usize, seed: u64) -> std::path::PathBuf {
    let manifest = dir.join("data/manifest.jsonl");
    if !manifest.exists() {
        vcil::commands::cmd_synth(&SyntheticConfig::new(4, 12, 8, (12, 12), 9), &manifest).unwrap();
    }
    let cfg = serde_json::json!({
        "dataset": {"manifest": "data/manifest.jsonl"},
        "split": {"num_tasks": 2, "seed": 1},
        "method": {"name": method, "lambda_reg": 1000.0},
        "training": {"epochs_memory": 2, "epochs_reg": 2, "learning_rate": 0.01,
                     "conv1_channels": 4, "conv2_channels": 8, "seed": seed},
        "memory": {"max_video_instances": 12, "frames_per_video": fpv},
        "tc": {"lambda": 0.5}
    });
    let path = dir.join(format!("{}_f{fpv}_s{seed}.json", method.replace('+', "_")));
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

/// Untrimmed manifest with two multi-label videos among eight.
pub const UNTRIMMED_MANIFEST: &str = r#"{"name":"crafted","class_names":["a","b","c","d"],"trim_mode":"untrimmed"}
{"video_id":"u0","total_frames":100,"partition":"train","segments":[{"start":10,"end":40,"class":0}],"frame_source":"u0"}
{"video_id":"u1","total_frames":80,"partition":"train","segments":[{"start":0,"end":20,"class":1},{"start":50,"end":70,"class":1}],"frame_source":"u1"}
{"video_id":"u2","total_frames":90,"partition":"val","segments":[{"start":5,"end":25,"class":2},{"start":30,"end":60,"class":3}],"frame_source":"u2"}
{"video_id":"u3","total_frames":60,"partition":"train","segments":[{"start":0,"end":60,"class":3}],"frame_source":"u3"}
{"video_id":"u4","total_frames":120,"partition":"train","segments":[{"start":0,"end":10,"class":0},{"start":20,"end":90,"class":1},{"start":95,"end":120,"class":0}],"frame_source":"u4"}
{"video_id":"u5","total_frames":50,"partition":"val","segments":[{"start":10,"end":30,"class":2}],"frame_source":"u5"}
{"video_id":"u6","total_frames":70,"partition":"train","segments":[{"start":3,"end":9,"class":0},{"start":9,"end":13,"class":0}],"frame_source":"u6"}
{"video_id":"u7","total_frames":40,"partition":"val","segments":[{"start":1,"end":39,"class":1}],"frame_source":"u7"}
"#;
