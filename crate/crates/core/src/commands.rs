//! The `split`, `synth`, `run` and `report` commands, independent of any
//! argument parser.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dataset::{
    assign_untrimmed_labels, generate_synthetic_dataset, generate_task_sequence, load_manifest, split_stats,
    trim_manifest, DatasetManifest, DefaultFrames, DiscardStats, SplitStats, SyntheticConfig, TaskSequence, TrimMode,
    VideoStore,
};
use crate::error::{Error, Result};
use crate::harness::{Experiment, ExperimentConfig, ExperimentResult, Method};
use crate::memory::FramesPerVideo;
use crate::metrics::{
    accuracy_curve, final_average_accuracy, final_backward_forgetting, percent, AccuracyMatrix, MetricsReport,
};
use crate::plot;
use crate::store::{self, ExperimentStore, RunManifest};

#[derive(Clone, Debug)]
pub struct SplitArgs {
    pub manifest: PathBuf,
    pub num_tasks: usize,
    pub seed: u64,
    /// Cut untrimmed videos into one record per labeled segment.
    pub trim: bool,
    pub out: PathBuf,
}

#[derive(Clone, Debug)]
pub struct SplitOutcome {
    pub split_path: PathBuf,
    pub stats_path: PathBuf,
    /// Written when labels were derived (untrimmed labeling or trimming).
    pub manifest_path: Option<PathBuf>,
    pub stats: SplitStats,
    pub discard: Option<DiscardStats>,
    pub records: usize,
}

/// `split.json` → `split.stats.json` / `split.manifest.jsonl`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "split".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn cmd_split(args: &SplitArgs) -> Result<SplitOutcome> {
    let source = load_manifest(&args.manifest)?;
    let (manifest, discard, derived) = match (source.trim_mode, args.trim) {
        (TrimMode::Untrimmed, true) => (trim_manifest(&source)?, None, true),
        (TrimMode::Untrimmed, false) => {
            let (m, stats) = assign_untrimmed_labels(&source)?;
            (m, Some(stats), true)
        }
        (TrimMode::Trimmed, true) => {
            return Err(Error::InvalidArgument("--trim needs an untrimmed manifest".into()))
        }
        (TrimMode::Trimmed, false) => (source, None, false),
    };
    let seq = generate_task_sequence(&manifest, args.num_tasks, args.seed)?;
    let stats = split_stats(&manifest, &seq);

    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(&args.out, seq.to_json()?).map_err(|e| Error::io(&args.out, e))?;
    let stats_path = sibling(&args.out, "stats.json");
    let mut stats_json = serde_json::to_value(&stats)?;
    if let Some(d) = &discard {
        stats_json["discarded_videos"] = d.discarded.into();
        stats_json["discarded_fraction"] = d.fraction().into();
    }
    std::fs::write(&stats_path, serde_json::to_string_pretty(&stats_json)?)
        .map_err(|e| Error::io(&stats_path, e))?;
    let manifest_path = if derived {
        let p = sibling(&args.out, "manifest.jsonl");
        manifest.save(&p)?;
        Some(p)
    } else {
        None
    };
    Ok(SplitOutcome {
        split_path: args.out.clone(),
        stats_path,
        manifest_path,
        stats,
        discard,
        records: manifest.records.len(),
    })
}

/// Statistics block in the layout of a benchmark table.
pub fn format_split_stats(name: &str, stats: &SplitStats) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<16} {:>6} {:>13} {:>18} {:>16} {:>17} {:>17} {:>10}",
        "dataset", "tasks", "classes/task", "train videos/task", "val videos/task", "test videos/task", "avg frames/video", "untrimmed"
    )
    .unwrap();
    writeln!(
        out,
        "{:<16} {:>6} {:>13.2} {:>18.2} {:>16.2} {:>17.2} {:>17.2} {:>10}",
        name,
        stats.tasks,
        stats.classes_per_task,
        stats.train_videos_per_task,
        stats.val_videos_per_task,
        stats.test_videos_per_task,
        stats.avg_frames_per_video,
        if stats.untrimmed { "yes" } else { "no" }
    )
    .unwrap();
    out
}

pub fn cmd_synth(config: &SyntheticConfig, out: &Path) -> Result<DatasetManifest> {
    let (manifest, _) = generate_synthetic_dataset(config)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    manifest.save(out)?;
    Ok(manifest)
}

#[derive(Clone, Debug, Default)]
pub struct RunArgs {
    pub config: PathBuf,
    /// Overrides the config's split file.
    pub split: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub force: bool,
    /// Continue from the run folder's latest checkpoint.
    pub resume: bool,
    pub dry_run: bool,
    pub verbose: bool,
    pub overrides: TrainingOverrides,
}

/// Command-line replacements for config-file values.
#[derive(Clone, Debug, Default)]
pub struct TrainingOverrides {
    pub epochs_memory: Option<usize>,
    pub epochs_reg: Option<usize>,
    pub learning_rate: Option<f64>,
    pub segments: Option<usize>,
    pub lambda_tc: Option<f64>,
    pub seed: Option<u64>,
}

impl TrainingOverrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        let t = &mut cfg.training;
        if let Some(v) = self.epochs_memory {
            t.epochs_memory = v;
        }
        if let Some(v) = self.epochs_reg {
            t.epochs_reg = v;
        }
        if let Some(v) = self.learning_rate {
            t.learning_rate = v;
        }
        if let Some(v) = self.segments {
            t.segments = v;
        }
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if let Some(v) = self.lambda_tc {
            cfg.tc.lambda = v;
        }
    }
}

#[derive(Clone, Debug)]
pub enum RunOutcome {
    /// Config validated; nothing trained or written.
    Planned { run_id: String, schedule: String },
    Completed {
        run_id: String,
        run_dir: PathBuf,
        /// `method, frames_per_video, frame_capacity, Acc%, BWF%`
        row: String,
        result: ExperimentResult,
    },
}

/// `method, frames_per_video, frame_capacity, Acc%, BWF%`; `-` where a method
/// keeps no memory.
pub fn format_row(method: Method, fpv: Option<FramesPerVideo>, capacity: Option<usize>, acc: f64, bwf: f64) -> String {
    let fpv = fpv.map_or_else(|| "-".to_string(), |f| f.to_string());
    let cap = capacity.map_or_else(|| "-".to_string(), |c| c.to_string());
    format!("{method}, {fpv}, {cap}, {}, {}", percent(acc), percent(bwf))
}

pub const ROW_HEADER: &str = "method, frames_per_video, frame_capacity, Acc%, BWF%";

struct Loaded {
    cfg: ExperimentConfig,
    manifest: DatasetManifest,
    tasks: TaskSequence,
    split_seed: u64,
}

fn load_inputs(args: &RunArgs) -> Result<Loaded> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    args.overrides.apply(&mut cfg);
    cfg.run_config()?;
    let manifest = load_manifest(&cfg.dataset.manifest)?;
    let tasks = match args.split.as_ref().or(cfg.split.file.as_ref()) {
        Some(path) => TaskSequence::load(path)?,
        None => generate_task_sequence(&manifest, cfg.split.num_tasks, cfg.split.seed)?,
    };
    if tasks.num_tasks() != cfg.split.num_tasks {
        return Err(Error::Config(format!(
            "split has {} tasks but split.num_tasks is {}",
            tasks.num_tasks(),
            cfg.split.num_tasks
        )));
    }
    let split_seed = tasks.seed;
    Ok(Loaded {
        cfg,
        manifest,
        tasks,
        split_seed,
    })
}

fn schedule(loaded: &Loaded, capacity: Option<usize>) -> Result<String> {
    let rc = loaded.cfg.run_config()?;
    let mut out = String::new();
    writeln!(out, "method {} | {} epochs/task | lr {} | N={} | batch {}", rc.method, rc.epochs(), rc.learning_rate, rc.segments, rc.batch_size).unwrap();
    if let (Some(m), Some(c)) = (rc.memory, capacity) {
        writeln!(out, "memory: {} videos x {} frames = {} frames", m.max_video_instances, m.frames_per_video, c).unwrap();
    }
    let mut seen = 0;
    for t in &loaded.tasks.tasks {
        seen += t.class_ids.len();
        let quota = rc.memory.map(|m| m.max_video_instances / seen);
        write!(
            out,
            "task {}: {} classes {:?}, {} train / {} val videos",
            t.task_index,
            t.class_ids.len(),
            t.class_ids,
            t.train_ids.len(),
            t.val_ids.len()
        )
        .unwrap();
        if let (Some(q), true) = (quota, rc.method.uses_memory()) {
            write!(out, ", {q} exemplars/class after update").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn cmd_run(args: &RunArgs) -> Result<RunOutcome> {
    let loaded = load_inputs(args)?;
    let rc = loaded.cfg.run_config()?;
    let fpv = rc.memory.filter(|_| rc.method.uses_memory()).map(|m| m.frames_per_video);
    let run_id = store::run_id(rc.method, &loaded.manifest.name, loaded.tasks.num_tasks(), fpv, rc.seed);

    if args.dry_run {
        // Budget arithmetic only; frames are not loaded.
        let avg = loaded.manifest.records.iter().map(|r| r.total_frames).sum::<usize>() as f64
            / loaded.manifest.records.len().max(1) as f64;
        let capacity = match rc.memory {
            Some(m) if rc.method.uses_memory() => Some(m.budget(avg)?.frame_capacity),
            _ => None,
        };
        return Ok(RunOutcome::Planned {
            schedule: schedule(&loaded, capacity)?,
            run_id,
        });
    }

    let frames_root = loaded.cfg.dataset.frames.clone().unwrap_or_else(|| {
        loaded.cfg.dataset.manifest.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    });
    let videos = VideoStore::load(&loaded.manifest, &DefaultFrames::new(frames_root))?;
    let store = ExperimentStore::locate(args.store.as_deref());
    let run_dir = store.open_run(&run_id, args.force, args.resume)?;

    let experiment = Experiment::new(rc.clone(), &loaded.manifest, &loaded.tasks, &videos)?
        .with_checkpoints(run_dir.join(store::CHECKPOINT_DIR))
        .verbose(args.verbose);
    let result = experiment.run()?;

    let write = |name: &str, text: String| -> Result<()> {
        let p = run_dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write(store::CONFIG_FILE, loaded.cfg.to_json())?;
    write(store::SPLIT_FILE, loaded.tasks.to_json()?)?;
    write(store::MATRIX_FILE, result.accuracy_matrix.to_csv())?;
    write(
        store::PER_CLASS_FILE,
        store::per_class_csv(&result.per_class_accuracy, &loaded.manifest.class_names),
    )?;
    let metrics = MetricsReport::from_matrix(&result.accuracy_matrix, result.per_class_accuracy.clone())?;
    write(store::METRICS_FILE, serde_json::to_string_pretty(&metrics)?)?;

    let mut digests = BTreeMap::new();
    for name in [store::CONFIG_FILE, store::SPLIT_FILE, store::MATRIX_FILE, store::PER_CLASS_FILE, store::METRICS_FILE] {
        digests.insert(name.to_string(), store::sha256_file(&run_dir.join(name))?);
    }
    let last = store::CHECKPOINT_DIR.to_string() + &format!("/task_{:03}/model.bin", loaded.tasks.num_tasks() - 1);
    digests.insert(last.clone(), store::sha256_file(&run_dir.join(&last))?);
    let manifest = RunManifest {
        run_id: run_id.clone(),
        dataset: loaded.manifest.name.clone(),
        experiment: loaded.cfg.clone(),
        run: rc.clone(),
        split_seed: loaded.split_seed,
        num_tasks: loaded.tasks.num_tasks(),
        frame_capacity: result.frame_capacity,
        memory_trace: result.memory_trace.clone(),
        memory_class_counts: result.memory_class_counts.clone(),
        wall_clock_seconds: result.wall_clock.clone(),
        digests,
    };
    write(store::RUN_FILE, serde_json::to_string_pretty(&manifest)?)?;

    let row = format_row(rc.method, fpv, result.frame_capacity, metrics.acc, metrics.bwf);
    Ok(RunOutcome::Completed {
        run_id,
        run_dir,
        row,
        result,
    })
}

#[derive(Clone, Debug)]
pub struct ReportArgs {
    /// Run folders, or run ids inside the store.
    pub runs: Vec<String>,
    pub store: Option<PathBuf>,
    pub out: PathBuf,
    pub plots: bool,
}

#[derive(Clone, Debug)]
pub struct ReportOutcome {
    pub table: String,
    pub files: Vec<PathBuf>,
}

struct RunSummary {
    label: String,
    method: Method,
    fpv: Option<FramesPerVideo>,
    capacity: Option<usize>,
    matrix: AccuracyMatrix,
    per_class: Vec<(usize, String, f64)>,
}

fn load_run(dir: &Path) -> Result<RunSummary> {
    if !dir.is_dir() {
        return Err(Error::InvalidArgument(format!("no run folder at {}", dir.display())));
    }
    let manifest = RunManifest::load(dir)?;
    let matrix = AccuracyMatrix::load(&dir.join(store::MATRIX_FILE))?;
    if !matrix.is_complete() {
        return Err(Error::Corrupt {
            path: dir.join(store::MATRIX_FILE),
            message: format!("only {} of {} tasks finished", matrix.completed(), matrix.n_tasks()),
        });
    }
    let pc_path = dir.join(store::PER_CLASS_FILE);
    let text = std::fs::read_to_string(&pc_path).map_err(|e| Error::io(&pc_path, e))?;
    let per_class = store::parse_per_class_csv(&text)
        .map_err(|message| Error::Corrupt {
            path: pc_path.clone(),
            message,
        })?
        .into_iter()
        .map(|(c, name)| (c.class_id, name, c.accuracy))
        .collect();
    let method = manifest.run.method;
    Ok(RunSummary {
        label: manifest.run_id.clone(),
        method,
        fpv: manifest
            .run
            .memory
            .filter(|_| method.uses_memory())
            .map(|m| m.frames_per_video),
        capacity: manifest.frame_capacity,
        matrix,
        per_class,
    })
}

pub fn cmd_report(args: &ReportArgs) -> Result<ReportOutcome> {
    if args.runs.is_empty() {
        return Err(Error::InvalidArgument("report needs at least one run".into()));
    }
    let store = ExperimentStore::locate(args.store.as_deref());
    let runs: Vec<RunSummary> = args
        .runs
        .iter()
        .map(|r| {
            let p = PathBuf::from(r);
            load_run(&if p.is_dir() { p } else { store.run_dir(r) })
        })
        .collect::<Result<_>>()?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut files = Vec::new();
    let mut emit = |name: &str, text: &str| -> Result<()> {
        let p = args.out.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        files.push(p);
        Ok(())
    };

    // Comparison table.
    let mut csv = String::from("run,method,frames_per_video,frame_capacity,acc_percent,bwf_percent\n");
    let mut md = String::from("| Run | Method | Frames/video | Mem. frame capacity | Acc (%) | BWF (%) |\n|---|---|---|---|---|---|\n");
    for r in &runs {
        let acc = final_average_accuracy(&r.matrix)?;
        let bwf = final_backward_forgetting(&r.matrix)?;
        let fpv = r.fpv.map_or_else(|| "-".into(), |f| f.to_string());
        let cap = r.capacity.map_or_else(|| "-".into(), |c| c.to_string());
        writeln!(csv, "{},{},{},{},{},{}", r.label, r.method, fpv, cap, percent(acc), percent(bwf)).unwrap();
        writeln!(md, "| {} | {} | {} | {} | {} | {} |", r.label, r.method, fpv, cap, percent(acc), percent(bwf)).unwrap();
    }
    emit("comparison.csv", &csv)?;
    emit("comparison.md", &md)?;

    // Accuracy against tasks learned.
    let curves: Vec<Vec<f64>> = runs.iter().map(|r| accuracy_curve(&r.matrix)).collect();
    let longest = curves.iter().map(Vec::len).max().unwrap_or(0);
    let mut ccsv = String::from("tasks_learned");
    for r in &runs {
        write!(ccsv, ",{}", r.label).unwrap();
    }
    ccsv.push('\n');
    for i in 0..longest {
        write!(ccsv, "{}", i + 1).unwrap();
        for c in &curves {
            ccsv.push(',');
            if let Some(v) = c.get(i) {
                write!(ccsv, "{v}").unwrap();
            }
        }
        ccsv.push('\n');
    }
    emit("curves.csv", &ccsv)?;

    // Per-class comparison of the first two runs, hardest (for the second) first.
    let mut bars: Option<(Vec<String>, Vec<f64>, Vec<f64>)> = None;
    if let [first, second, ..] = runs.as_slice() {
        let a: BTreeMap<usize, f64> = first.per_class.iter().map(|(c, _, v)| (*c, *v)).collect();
        let mut rows: Vec<&(usize, String, f64)> = second.per_class.iter().filter(|(c, _, _)| a.contains_key(c)).collect();
        rows.sort_by(|x, y| x.2.total_cmp(&y.2).then(x.0.cmp(&y.0)));
        let mut pcsv = format!("class_id,class_name,{},{}\n", first.label, second.label);
        for (c, name, v) in &rows {
            writeln!(pcsv, "{c},{name},{},{v}", a[c]).unwrap();
        }
        emit("per_class.csv", &pcsv)?;
        bars = Some((
            rows.iter().map(|r| r.0.to_string()).collect(),
            rows.iter().map(|r| a[&r.0]).collect(),
            rows.iter().map(|r| r.2).collect(),
        ));
    }

    if args.plots {
        let p = args.out.join("curves.png");
        plot::accuracy_curves(&curves, &p)?;
        files.push(p);
        if let Some((labels, a, b)) = bars {
            let p = args.out.join("per_class.png");
            plot::paired_bars(&labels, &a, &b, &p)?;
            files.push(p);
        }
    }
    Ok(ReportOutcome { table: md, files })
}
