//! The sequential training loop.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::checkpoint::{self, Progress};
use super::config::{MethodKind, RunConfig};
use super::sampling::{segment_sample, SampleMode};
use crate::dataset::{DatasetManifest, TaskSequence, Video, VideoStore};
use crate::error::{Error, Result};
use crate::memory::{
    load_snapshot, save_snapshot, select_exemplars_herding, select_exemplars_random, EpisodicMemory,
    FramesPerVideo, MemoryEntry, ReplayBatches, Selection,
};
use crate::methods::bic::{bic_main_loss, fit_bias_correction};
use crate::methods::losses::cross_entropy;
use crate::methods::tc::accumulate_consistency;
use crate::methods::{
    ewc_importance, icarl_loss, mas_importance, BiasCorrectionLayer, ImportanceState, Prototypes, TcConfig,
};
use crate::metrics::{per_class_report, AccuracyMatrix, ClassAccuracy};
use crate::model::{l2_normalize, Adam, Clip, ReferenceNet, ReferenceNetConfig, VideoClassifier};
use crate::seed;

const KD_TEMPERATURE: f64 = 2.0;
const BIC_HELDOUT_FRACTION: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub accuracy_matrix: AccuracyMatrix,
    /// Accuracy per class over every task's evaluation videos after the final
    /// task, hardest first.
    pub per_class_accuracy: Vec<ClassAccuracy>,
    /// Stored frames after each task's memory update.
    pub memory_trace: Vec<usize>,
    /// Stored videos per class after each task's memory update.
    pub memory_class_counts: Vec<BTreeMap<usize, usize>>,
    /// Seconds spent per task (training, updates and evaluation).
    pub wall_clock: Vec<f64>,
    pub frame_capacity: Option<usize>,
}

// The matrix is persisted as CSV elsewhere; in JSON it travels as its rows.
impl Serialize for AccuracyMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        (self.n_tasks(), self.rows()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for AccuracyMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (n, rows): (usize, Vec<Vec<f64>>) = Deserialize::deserialize(d)?;
        AccuracyMatrix::from_rows(n, rows).map_err(serde::de::Error::custom)
    }
}

/// How a trained model turns a clip into a class id.
pub enum Predictor<'a, M: VideoClassifier> {
    /// Argmax over (optionally bias-corrected) logits; `slots` maps head
    /// positions to class ids.
    Logits {
        model: &'a M,
        slots: &'a [usize],
        bias: Option<&'a BiasCorrectionLayer>,
    },
    NearestMean { model: &'a M, prototypes: Prototypes },
}

impl<M: VideoClassifier> Predictor<'_, M> {
    pub fn predict(&self, clip: &Clip) -> usize {
        match self {
            Predictor::Logits { model, slots, bias } => {
                let mut z = model.forward(clip);
                if let Some(b) = bias {
                    z = b.apply(&z);
                }
                slots[argmax(&z)]
            }
            Predictor::NearestMean { model, prototypes } => prototypes.classify(&model.features(clip)),
        }
    }
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskEvaluation {
    pub accuracy: f64,
    /// `(true class, predicted class)` per video.
    pub predictions: Vec<(usize, usize)>,
}

/// Classifies each video from its eval-mode segment sample.
pub fn evaluate_task<M: VideoClassifier>(
    predictor: &Predictor<'_, M>,
    video_ids: &[String],
    manifest: &DatasetManifest,
    videos: &VideoStore,
    segments: usize,
) -> Result<TaskEvaluation> {
    if video_ids.is_empty() {
        return Err(Error::Empty("no videos to evaluate".into()));
    }
    let mut predictions = Vec::with_capacity(video_ids.len());
    for id in video_ids {
        let label = manifest
            .record(id)
            .and_then(|r| r.class_id)
            .ok_or_else(|| Error::record(id, "evaluation video has no class label"))?;
        let video = videos.get(id)?;
        let clip = Clip::from_video(video, &segment_sample(video.frames, segments, SampleMode::Eval, 0));
        predictions.push((label, predictor.predict(&clip)));
    }
    let correct = predictions.iter().filter(|(y, p)| y == p).count();
    Ok(TaskEvaluation {
        accuracy: correct as f64 / predictions.len() as f64,
        predictions,
    })
}

/// One configured experiment over one task sequence.
pub struct Experiment<'a> {
    config: RunConfig,
    manifest: &'a DatasetManifest,
    tasks: &'a TaskSequence,
    videos: &'a VideoStore,
    checkpoints: Option<PathBuf>,
    verbose: bool,
    labels: HashMap<&'a str, usize>,
    frame_capacity: Option<usize>,
}

struct State {
    model: ReferenceNet,
    slots: Vec<usize>,
    memory: Option<EpisodicMemory>,
    importance: Option<ImportanceState>,
    bias: Option<BiasCorrectionLayer>,
    matrix: AccuracyMatrix,
    memory_trace: Vec<usize>,
    memory_class_counts: Vec<BTreeMap<usize, usize>>,
    wall_clock: Vec<f64>,
    per_class: Vec<ClassAccuracy>,
    next_task: usize,
}

/// Per-clip training objective for one task.
struct Objective<'m> {
    kind: MethodKind,
    old: Option<&'m ReferenceNet>,
    old_bias: Option<&'m BiasCorrectionLayer>,
    lambda_kd: f64,
    tc: Option<TcConfig>,
}

impl Objective<'_> {
    fn loss(&self, clip: &Clip, z: &[f64], slot: usize) -> (f64, Vec<f64>) {
        match self.kind {
            MethodKind::Finetune | MethodKind::Ewc | MethodKind::Mas => cross_entropy(z, slot),
            MethodKind::Naive | MethodKind::Icarl => {
                let old = self.old.map(|m| m.forward(clip));
                icarl_loss(z, old.as_deref(), slot)
            }
            MethodKind::Bic => {
                let old = self.old.map(|m| {
                    let z = m.forward(clip);
                    match self.old_bias {
                        Some(b) => b.apply(&z),
                        None => z,
                    }
                });
                bic_main_loss(z, old.as_deref(), slot, self.lambda_kd, KD_TEMPERATURE)
            }
        }
    }

    fn accumulate(&self, model: &ReferenceNet, clip: &Clip, slot: usize, scale: f64, grad: &mut [f64]) -> f64 {
        let (down, lambda) = match self.tc {
            Some(tc) if tc.lambda > 0.0 => (tc.downsample(clip), tc.lambda),
            _ => (None, 0.0),
        };
        accumulate_consistency(model, clip, down.as_ref(), lambda, scale, grad, |c, z| self.loss(c, z, slot))
    }
}

impl<'a> Experiment<'a> {
    pub fn new(
        config: RunConfig,
        manifest: &'a DatasetManifest,
        tasks: &'a TaskSequence,
        videos: &'a VideoStore,
    ) -> Result<Self> {
        config.validate()?;
        if tasks.tasks.is_empty() {
            return Err(Error::Empty("task sequence has no tasks".into()));
        }
        let mut labels = HashMap::new();
        for r in &manifest.records {
            if let Some(c) = r.class_id {
                labels.insert(r.video_id.as_str(), c);
            }
        }
        for task in &tasks.tasks {
            if task.class_ids.is_empty() || task.train_ids.is_empty() {
                return Err(Error::Empty(format!("task {} has no classes or training videos", task.task_index)));
            }
            for id in task.train_ids.iter().chain(&task.val_ids) {
                let c = labels
                    .get(id.as_str())
                    .ok_or_else(|| Error::record(id, "task video missing from manifest or unlabeled"))?;
                if !task.class_ids.contains(c) {
                    return Err(Error::record(id, format!("class {c} not in task {}", task.task_index)));
                }
            }
        }
        let frame_capacity = match config.memory {
            Some(spec) if config.method.uses_memory() => {
                let avg = manifest.records.iter().map(|r| r.total_frames).sum::<usize>() as f64
                    / manifest.records.len().max(1) as f64;
                Some(spec.budget(avg)?.frame_capacity)
            }
            _ => None,
        };
        Ok(Self {
            config,
            manifest,
            tasks,
            videos,
            checkpoints: None,
            verbose: false,
            labels,
            frame_capacity,
        })
    }

    /// Writes a checkpoint after every task and resumes from the latest one.
    pub fn with_checkpoints(mut self, dir: impl Into<PathBuf>) -> Self {
        self.checkpoints = Some(dir.into());
        self
    }

    /// Per-task progress lines on stderr.
    pub fn verbose(mut self, on: bool) -> Self {
        self.verbose = on;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn frame_capacity(&self) -> Option<usize> {
        self.frame_capacity
    }

    pub fn run(&self) -> Result<ExperimentResult> {
        let mut st = match &self.checkpoints {
            Some(dir) => match checkpoint::latest(dir) {
                Some((_, path)) => self.restore(&path)?,
                None => self.fresh_state()?,
            },
            None => self.fresh_state()?,
        };
        while st.next_task < self.tasks.tasks.len() {
            let t = st.next_task;
            let start = Instant::now();
            self.train_task(&mut st, t)?;
            st.wall_clock.push(start.elapsed().as_secs_f64());
            st.next_task += 1;
            if self.verbose {
                let row = &st.matrix.rows()[t];
                let mean = row.iter().sum::<f64>() / row.len() as f64;
                eprintln!(
                    "[{}] task {}/{}: mean accuracy {:.4}, memory {} frames ({:.1}s)",
                    self.config.method,
                    t + 1,
                    self.tasks.tasks.len(),
                    mean,
                    st.memory_trace[t],
                    st.wall_clock[t]
                );
            }
            if let Some(dir) = &self.checkpoints {
                self.save(&st, &checkpoint::task_dir(dir, t))?;
            }
        }
        Ok(ExperimentResult {
            accuracy_matrix: st.matrix,
            per_class_accuracy: st.per_class,
            memory_trace: st.memory_trace,
            memory_class_counts: st.memory_class_counts,
            wall_clock: st.wall_clock,
            frame_capacity: self.frame_capacity,
        })
    }

    fn fresh_state(&self) -> Result<State> {
        let first = self.videos.get(&self.tasks.tasks[0].train_ids[0])?;
        let net_config = ReferenceNetConfig {
            height: first.height,
            width: first.width,
            conv1_channels: self.config.conv1_channels,
            conv2_channels: self.config.conv2_channels,
        };
        let memory = match (self.config.memory, self.frame_capacity) {
            (Some(spec), Some(capacity)) => Some(EpisodicMemory::new(crate::memory::MemoryBudget {
                max_video_instances: spec.max_video_instances,
                frames_per_video: spec.frames_per_video,
                frame_capacity: capacity,
            })),
            _ => None,
        };
        Ok(State {
            model: ReferenceNet::new(net_config, 0, seed::derive(self.config.seed, &[10])),
            slots: Vec::new(),
            memory,
            importance: None,
            bias: None,
            matrix: AccuracyMatrix::new(self.tasks.tasks.len()),
            memory_trace: Vec::new(),
            memory_class_counts: Vec::new(),
            wall_clock: Vec::new(),
            per_class: Vec::new(),
            next_task: 0,
        })
    }

    fn save(&self, st: &State, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        checkpoint::save_model(&st.model, &dir.join("model.bin"))?;
        if let Some(m) = &st.memory {
            save_snapshot(m, &dir.join("memory"))?;
        }
        if let Some(imp) = &st.importance {
            imp.save(&dir.join("importance.bin"))?;
        }
        let progress = Progress {
            next_task: st.next_task,
            slots: st.slots.clone(),
            rows: st.matrix.rows().to_vec(),
            memory_trace: st.memory_trace.clone(),
            memory_class_counts: st.memory_class_counts.clone(),
            wall_clock: st.wall_clock.clone(),
            bias: st.bias.clone(),
            per_class: st.per_class.clone(),
        };
        let path = dir.join("state.json");
        std::fs::write(&path, serde_json::to_string_pretty(&progress)?).map_err(|e| Error::io(&path, e))
    }

    fn restore(&self, dir: &Path) -> Result<State> {
        let path = dir.join("state.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let p: Progress = serde_json::from_str(&text)?;
        let model = checkpoint::load_model(&dir.join("model.bin"))?;
        let memory = if self.config.method.uses_memory() {
            Some(load_snapshot(&dir.join("memory"))?)
        } else {
            None
        };
        let importance = if self.config.method.uses_penalty() {
            Some(ImportanceState::load(&dir.join("importance.bin"))?)
        } else {
            None
        };
        Ok(State {
            model,
            slots: p.slots,
            memory,
            importance,
            bias: p.bias,
            matrix: AccuracyMatrix::from_rows(self.tasks.tasks.len(), p.rows)?,
            memory_trace: p.memory_trace,
            memory_class_counts: p.memory_class_counts,
            wall_clock: p.wall_clock,
            per_class: p.per_class,
            next_task: p.next_task,
        })
    }

    fn label(&self, id: &str) -> usize {
        self.labels[id]
    }

    fn train_task(&self, st: &mut State, t: usize) -> Result<()> {
        let cfg = &self.config;
        let task = &self.tasks.tasks[t];
        let method = cfg.method;

        // Head growth. The pre-growth model is the distillation teacher.
        let old_model = (t > 0 && method.uses_memory()).then(|| st.model.clone());
        let old_bias = st.bias.clone();
        let n_old = st.slots.len();
        st.slots.extend(&task.class_ids);
        st.model
            .expand_head(task.class_ids.len(), seed::derive(cfg.seed, &[11, t as u64]));
        let slot_of: HashMap<usize, usize> = st.slots.iter().enumerate().map(|(s, &c)| (c, s)).collect();
        if let Some(imp) = st.importance.as_mut() {
            imp.grow_to(st.model.params());
        }

        // Bias-correction held-out data, kept out of the main stage.
        let mut heldout_new: HashSet<&str> = HashSet::new();
        let mut heldout_old: Vec<&MemoryEntry> = Vec::new();
        // Old-class held-out exemplars skip replay unless that would empty the class.
        let mut replay_excluded: HashSet<&str> = HashSet::new();
        if method.kind == MethodKind::Bic && t > 0 {
            let mut per_class: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
            for id in &task.train_ids {
                per_class.entry(self.label(id)).or_default().push(id);
            }
            let smallest = per_class.values().map(Vec::len).min().unwrap_or(0);
            let h = ((smallest as f64 * BIC_HELDOUT_FRACTION).round() as usize).max(1);
            for ids in per_class.values() {
                if ids.len() > h {
                    heldout_new.extend(&ids[ids.len() - h..]);
                }
            }
            if let Some(mem) = &st.memory {
                for c in mem.classes().collect::<Vec<_>>() {
                    let entries = mem.class_entries(c);
                    let take = h.min(entries.len());
                    let held = &entries[entries.len() - take..];
                    heldout_old.extend(held);
                    if entries.len() > h {
                        replay_excluded.extend(held.iter().map(|e| e.video_id.as_str()));
                    }
                }
            }
        }
        let train_ids: Vec<&str> = task
            .train_ids
            .iter()
            .map(String::as_str)
            .filter(|id| !heldout_new.contains(id))
            .collect();
        let replay: Vec<&MemoryEntry> = match &st.memory {
            Some(mem) => mem
                .entries()
                .filter(|e| !replay_excluded.contains(e.video_id.as_str()))
                .collect(),
            None => Vec::new(),
        };

        let tc = match (method.tc, cfg.memory.map(|m| m.frames_per_video)) {
            (true, Some(FramesPerVideo::Count(k))) => Some(TcConfig::new(cfg.lambda_tc, k)?),
            _ => None,
        };
        let objective = Objective {
            kind: method.kind,
            old: old_model.as_ref(),
            old_bias: old_bias.as_ref(),
            lambda_kd: n_old as f64 / st.slots.len() as f64,
            tc,
        };

        let mut adam = Adam::new(cfg.learning_rate, st.model.num_params());
        let mut grad = vec![0.0; st.model.num_params()];
        let t64 = t as u64;
        for epoch in 0..cfg.epochs() as u64 {
            let mut order = train_ids.clone();
            order.shuffle(&mut seed::rng_for(cfg.seed, &[12, t64, epoch]));
            let mut cycle = 0u64;
            let mut batches = ReplayBatches::new(replay.clone(), cfg.batch_size, seed::derive(cfg.seed, &[14, t64, epoch, 0]));
            for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / batch.len() as f64;
                for id in batch {
                    let video = self.videos.get(id)?;
                    let s = seed::derive(cfg.seed, &[13, t64, epoch, seed::hash_str(id)]);
                    let clip = Clip::from_video(video, &segment_sample(video.frames, cfg.segments, SampleMode::Train, s));
                    objective.accumulate(&st.model, &clip, slot_of[&self.label(id)], scale, &mut grad);
                }
                if !replay.is_empty() {
                    let mem_batch = match batches.next() {
                        Some(mb) => mb,
                        None => {
                            cycle += 1;
                            batches = ReplayBatches::new(
                                replay.clone(),
                                cfg.batch_size,
                                seed::derive(cfg.seed, &[14, t64, epoch, cycle]),
                            );
                            batches.next().expect("replay set is non-empty")
                        }
                    };
                    let scale = 1.0 / mem_batch.entries.len() as f64;
                    for e in &mem_batch.entries {
                        let s = seed::derive(cfg.seed, &[16, t64, epoch, b as u64, seed::hash_str(&e.video_id)]);
                        let clip = replay_clip(&e.frames, cfg.segments, s);
                        objective.accumulate(&st.model, &clip, slot_of[&e.class_id], scale, &mut grad);
                    }
                }
                if let Some(imp) = &st.importance {
                    imp.add_penalty_gradient(st.model.params(), &mut grad)?;
                }
                adam.step(st.model.params_mut(), &grad);
            }
        }

        // Bias correction on frozen logits.
        if method.kind == MethodKind::Bic && t > 0 {
            let mut samples = Vec::new();
            for id in task.train_ids.iter().filter(|id| heldout_new.contains(id.as_str())) {
                let video = self.videos.get(id)?;
                let clip = Clip::from_video(video, &segment_sample(video.frames, cfg.segments, SampleMode::Eval, 0));
                samples.push((st.model.forward(&clip), slot_of[&self.label(id)]));
            }
            for e in &heldout_old {
                let idx = segment_sample(e.frames.frames, cfg.segments.min(e.frames.frames), SampleMode::Eval, 0);
                samples.push((st.model.forward(&Clip::from_video(&e.frames, &idx)), slot_of[&e.class_id]));
            }
            let new_slots: BTreeSet<usize> = (n_old..st.slots.len()).collect();
            st.bias = Some(fit_bias_correction(&samples, &new_slots)?);
        }

        // Importance for the regularization methods.
        if method.uses_penalty() {
            let clips = task.train_ids.iter().map(|id| -> (Clip, usize) {
                let video = self.videos.get(id).expect("checked while training");
                let idx = segment_sample(video.frames, cfg.segments, SampleMode::Eval, 0);
                (Clip::from_video(video, &idx), slot_of[&self.label(id)])
            });
            let omega = match method.kind {
                MethodKind::Ewc => ewc_importance(&st.model, clips)?,
                _ => mas_importance(&st.model, clips.map(|(c, _)| c))?,
            };
            let imp = st.importance.get_or_insert_with(|| {
                ImportanceState::empty(st.model.params(), cfg.lambda_reg.expect("validated"))
            });
            imp.consolidate(&omega, st.model.params())?;
        }

        // Memory: shrink old classes, then add the new ones.
        if let Some(mem) = st.memory.as_mut() {
            mem.rebalance(st.slots.len())?;
            let quota = mem.budget().quota(st.slots.len());
            let mut selections: Vec<Selection> = Vec::new();
            if method.herding() {
                for &c in &task.class_ids {
                    let ids: Vec<&String> = task.train_ids.iter().filter(|id| self.label(id) == c).collect();
                    let mut feats = Vec::with_capacity(ids.len());
                    for id in &ids {
                        let video = self.videos.get(id)?;
                        let mut f = st.model.features(&Clip::from_video(video, &mem.stored_indices(video.frames)));
                        l2_normalize(&mut f);
                        feats.push(f);
                    }
                    for (rank, i) in select_exemplars_herding(&feats, quota)?.into_iter().enumerate() {
                        selections.push(Selection {
                            video_id: ids[i].clone(),
                            class_id: c,
                            selection_rank: rank,
                        });
                    }
                }
            } else {
                let candidates: Vec<(String, usize)> =
                    task.train_ids.iter().map(|id| (id.clone(), self.label(id))).collect();
                selections = select_exemplars_random(&candidates, quota, seed::derive(cfg.seed, &[15, t64]));
            }
            mem.add_exemplars(&selections, self.videos)?;
            st.memory_trace.push(mem.total_frames());
            st.memory_class_counts.push(mem.class_counts());
        } else {
            st.memory_trace.push(0);
            st.memory_class_counts.push(BTreeMap::new());
        }

        // Evaluate every task seen so far.
        let predictor = match (&st.memory, method.nearest_mean()) {
            (Some(mem), true) => Predictor::NearestMean {
                model: &st.model,
                prototypes: Prototypes::from_memory(&st.model, mem)?,
            },
            _ => Predictor::Logits {
                model: &st.model,
                slots: &st.slots,
                bias: st.bias.as_ref(),
            },
        };
        let mut row = Vec::with_capacity(t + 1);
        let mut predictions = Vec::new();
        for seen in &self.tasks.tasks[..=t] {
            let eval = evaluate_task(&predictor, &seen.val_ids, self.manifest, self.videos, cfg.segments)?;
            row.push(eval.accuracy);
            predictions.extend(eval.predictions);
        }
        st.matrix.push_row(row)?;
        st.per_class = per_class_report(&predictions, &st.slots).0;
        Ok(())
    }
}

/// Replayed exemplars are used as stored when short, otherwise re-sampled
/// like new videos.
fn replay_clip(frames: &Video, segments: usize, seed_value: u64) -> Clip {
    if frames.frames <= segments {
        Clip::whole(frames)
    } else {
        Clip::from_video(frames, &segment_sample(frames.frames, segments, SampleMode::Train, seed_value))
    }
}

/// Convenience wrapper: build and run an experiment without checkpoints.
pub fn run_sequence(
    config: RunConfig,
    manifest: &DatasetManifest,
    tasks: &TaskSequence,
    videos: &VideoStore,
) -> Result<ExperimentResult> {
    Experiment::new(config, manifest, tasks, videos)?.run()
}
