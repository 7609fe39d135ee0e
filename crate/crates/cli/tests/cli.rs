use std::path::Path;
use std::process::{Command, Output};

fn vcil(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vcil"))
        .args(args)
        .current_dir(dir)
        .env_remove("VCIL_STORE")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn synth_split_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = vcil(d, &["synth", "--classes", "4", "--videos-per-class", "10", "--frames", "8", "--height", "12", "--width", "12"]);
    assert!(o.status.success(), "{o:?}");

    let o = vcil(d, &["split", "--manifest", "data/manifest.jsonl", "--tasks", "2", "--out", "data/split.json"]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("avg frames/video"));
    assert!(d.join("data/split.stats.json").exists());

    let cfg = r#"{
        "dataset": {"manifest": "data/manifest.jsonl"},
        "split": {"file": "data/split.json", "num_tasks": 2},
        "method": {"name": "icarl+tc"},
        "training": {"conv1_channels": 4, "conv2_channels": 8},
        "memory": {"max_video_instances": 8, "frames_per_video": 4}
    }"#;
    std::fs::write(d.join("exp.json"), cfg).unwrap();
    let run = ["run", "--config", "exp.json", "--store", "runs", "--epochs-memory", "1", "--lr", "0.01", "--quiet"];
    let o = vcil(d, &run);
    assert!(o.status.success(), "{o:?}");
    let out = stdout(&o);
    assert!(out.starts_with("method, frames_per_video, frame_capacity, Acc%, BWF%\n"), "{out}");
    assert!(out.contains("icarl+tc, 4, 32, "), "{out}");

    // Same run id again without --force.
    let o = vcil(d, &run);
    assert_eq!(o.status.code(), Some(2));

    let o = vcil(d, &["report", "icarl+tc_synthetic4_t2_f4_s0", "--store", "runs", "--no-plots"]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("| icarl+tc_synthetic4_t2_f4_s0 | icarl+tc | 4 | 32 |"));
    assert!(d.join("report/comparison.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Unparseable arguments.
    assert_eq!(vcil(d, &["run"]).status.code(), Some(2));
    // Config problems.
    std::fs::write(d.join("bad.json"), r#"{"dataset": {}}"#).unwrap();
    assert_eq!(vcil(d, &["run", "--config", "bad.json"]).status.code(), Some(2));
    // Data problems.
    assert_eq!(vcil(d, &["split", "--manifest", "missing.jsonl"]).status.code(), Some(3));
}
