mod common;

use common::{write_experiment, UNTRIMMED_MANIFEST};
use vcil::commands::{cmd_report, cmd_run, cmd_split, ReportArgs, RunArgs, RunOutcome, SplitArgs};
use vcil::dataset::{load_manifest, TaskSequence};
use vcil::metrics::{final_average_accuracy, percent, AccuracyMatrix};
use vcil::Error;

fn run_args(config: std::path::PathBuf, store: &std::path::Path) -> RunArgs {
    RunArgs {
        config,
        store: Some(store.to_path_buf()),
        verbose: false,
        ..RunArgs::default()
    }
}

fn completed(outcome: RunOutcome) -> (String, std::path::PathBuf) {
    match outcome {
        RunOutcome::Completed { run_id, run_dir, .. } => (run_id, run_dir),
        RunOutcome::Planned { .. } => panic!("expected a completed run"),
    }
}

#[test]
fn split_outputs_are_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    write_experiment(dir.path(), "icarl", 4, 0);
    let manifest = dir.path().join("data/manifest.jsonl");
    let split = |out: &str, seed| {
        cmd_split(&SplitArgs {
            manifest: manifest.clone(),
            num_tasks: 2,
            seed,
            trim: false,
            out: dir.path().join(out),
        })
        .unwrap()
    };
    let a = split("a/split.json", 7);
    let b = split("b/split.json", 7);
    let c = split("c/split.json", 8);
    let bytes = |p: &std::path::Path| std::fs::read(p).unwrap();
    assert_eq!(bytes(&a.split_path), bytes(&b.split_path));
    assert_eq!(bytes(&a.stats_path), bytes(&b.stats_path));
    assert_ne!(bytes(&a.split_path), bytes(&c.split_path));
    assert!(a.manifest_path.is_none());
    assert_eq!(TaskSequence::load(&a.split_path).unwrap().num_tasks(), 2);
    assert_eq!(a.stats.classes_per_task, 2.0);
}

#[test]
fn trimming_a_trimmed_manifest_is_an_argument_error() {
    let dir = tempfile::tempdir().unwrap();
    write_experiment(dir.path(), "icarl", 4, 0);
    let err = cmd_split(&SplitArgs {
        manifest: dir.path().join("data/manifest.jsonl"),
        num_tasks: 2,
        seed: 0,
        trim: true,
        out: dir.path().join("split.json"),
    })
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn untrimmed_split_writes_the_labeled_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("untrimmed.jsonl");
    std::fs::write(&src, UNTRIMMED_MANIFEST).unwrap();
    let out = cmd_split(&SplitArgs {
        manifest: src,
        num_tasks: 2,
        seed: 0,
        trim: false,
        out: dir.path().join("split.json"),
    })
    .unwrap();
    let d = out.discard.unwrap();
    assert_eq!(d.discarded_ids, vec!["u2".to_string(), "u4".to_string()]);
    let labeled = load_manifest(&out.manifest_path.unwrap()).unwrap();
    assert_eq!(labeled.records.len(), 6);
    assert!(out.stats.untrimmed);
    let stats: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out.stats_path).unwrap()).unwrap();
    assert_eq!(stats["discarded_videos"], 2);
}

#[test]
fn existing_runs_are_refused_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("runs");
    let cfg = write_experiment(dir.path(), "naive", 4, 0);
    let (_, run_dir) = completed(cmd_run(&run_args(cfg.clone(), &store)).unwrap());
    let before = std::fs::read(run_dir.join("accuracy_matrix.csv")).unwrap();

    let err = cmd_run(&run_args(cfg.clone(), &store)).unwrap_err();
    assert!(matches!(err, Error::RunExists(_)));
    assert_eq!(err.exit_code(), 2);

    let mut resume = run_args(cfg.clone(), &store);
    resume.resume = true;
    completed(cmd_run(&resume).unwrap());
    assert_eq!(std::fs::read(run_dir.join("accuracy_matrix.csv")).unwrap(), before);

    let mut force = run_args(cfg, &store);
    force.force = true;
    completed(cmd_run(&force).unwrap());
    assert_eq!(std::fs::read(run_dir.join("accuracy_matrix.csv")).unwrap(), before);
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("runs");
    let mut args = run_args(write_experiment(dir.path(), "icarl+tc", 4, 0), &store);
    args.dry_run = true;
    match cmd_run(&args).unwrap() {
        RunOutcome::Planned { run_id, schedule } => {
            assert_eq!(run_id, "icarl+tc_synthetic4_t2_f4_s0");
            assert!(schedule.contains("memory: 12 videos x 4 frames = 48 frames"), "{schedule}");
            assert_eq!(schedule.lines().filter(|l| l.starts_with("task ")).count(), 2);
        }
        RunOutcome::Completed { .. } => panic!("dry run trained"),
    }
    assert!(!store.exists());
}

#[test]
fn unknown_config_keys_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_experiment(dir.path(), "icarl", 4, 0);
    let mut json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    json["training"]["momentum"] = 0.9.into();
    std::fs::write(&cfg, json.to_string()).unwrap();
    let err = cmd_run(&run_args(cfg, &dir.path().join("runs"))).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn missing_frames_exit_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_experiment(dir.path(), "icarl", 4, 0);
    let manifest = dir.path().join("data/manifest.jsonl");
    let text = std::fs::read_to_string(&manifest).unwrap();
    // Point the first video at a frame folder that does not exist.
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut rec: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
    rec["frame_source"] = "no/such/folder".into();
    lines[1] = rec.to_string();
    std::fs::write(&manifest, lines.join("\n")).unwrap();
    let err = cmd_run(&run_args(cfg, &dir.path().join("runs"))).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}

#[test]
fn reports_are_rebuilt_from_artifacts_alone() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("runs");
    let (a, dir_a) = completed(cmd_run(&run_args(write_experiment(dir.path(), "icarl", 4, 0), &store)).unwrap());
    let (b, dir_b) = completed(cmd_run(&run_args(write_experiment(dir.path(), "ewc", 4, 0), &store)).unwrap());
    assert_eq!(b, "ewc_synthetic4_t2_fnone_s0");

    // Checkpoints are not needed for reporting.
    std::fs::remove_dir_all(dir_a.join("checkpoints")).unwrap();
    std::fs::remove_dir_all(dir_b.join("checkpoints")).unwrap();

    let out = dir.path().join("report");
    let report = cmd_report(&ReportArgs {
        runs: vec![a.clone(), dir_b.display().to_string()],
        store: Some(store.clone()),
        out: out.clone(),
        plots: true,
    })
    .unwrap();
    let names: Vec<String> = report
        .files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names,
        ["comparison.csv", "comparison.md", "curves.csv", "per_class.csv", "curves.png", "per_class.png"]
    );

    let matrix = AccuracyMatrix::load(&dir_a.join("accuracy_matrix.csv")).unwrap();
    let acc = percent(final_average_accuracy(&matrix).unwrap());
    let table = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    let row = table.lines().find(|l| l.starts_with(&a)).unwrap();
    assert!(row.starts_with(&format!("{a},icarl,4,48,{acc},")), "{row}");
    assert!(table.contains(&format!("{b},ewc,-,-,")));
    assert_eq!(std::fs::read_to_string(out.join("per_class.csv")).unwrap().lines().count(), 5);

    let headless = cmd_report(&ReportArgs {
        runs: vec![a],
        store: Some(store),
        out: dir.path().join("headless"),
        plots: false,
    })
    .unwrap();
    assert_eq!(headless.files.len(), 3);

    let missing = cmd_report(&ReportArgs {
        runs: vec!["nope".into()],
        store: Some(dir.path().join("runs")),
        out,
        plots: false,
    });
    assert!(missing.is_err());
}
