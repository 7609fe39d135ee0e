//! Class-incremental task sequences.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, Partition};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub task_index: usize,
    /// Sorted, disjoint from every other task's classes.
    pub class_ids: Vec<usize>,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl Task {
    pub fn ids(&self, partition: Partition) -> &[String] {
        match partition {
            Partition::Train => &self.train_ids,
            Partition::Val => &self.val_ids,
            Partition::Test => &self.test_ids,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSequence {
    pub seed: u64,
    pub tasks: Vec<Task>,
}

impl TaskSequence {
    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let seq: TaskSequence = serde_json::from_str(&text)?;
        seq.check_disjoint()?;
        Ok(seq)
    }

    fn check_disjoint(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for t in &self.tasks {
            for &c in &t.class_ids {
                if !seen.insert(c) {
                    return Err(Error::InvalidArgument(format!(
                        "class {c} appears in more than one task"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Shuffles the labeled classes with a seeded permutation and cuts them into
/// `num_tasks` contiguous groups. When the class count does not divide evenly
/// the first `C mod num_tasks` tasks take one extra class each. Video order
/// within each task is shuffled from the same seed.
pub fn generate_task_sequence(
    manifest: &DatasetManifest,
    num_tasks: usize,
    seed_value: u64,
) -> Result<TaskSequence> {
    if num_tasks < 2 {
        return Err(Error::InvalidArgument("num_tasks must be at least 2".into()));
    }
    if let Some(r) = manifest.records.iter().find(|r| r.class_id.is_none()) {
        return Err(Error::record(
            &r.video_id,
            "unlabeled record; assign untrimmed labels or trim first",
        ));
    }
    let mut classes = manifest.labeled_classes();
    if classes.len() < num_tasks {
        return Err(Error::InvalidArgument(format!(
            "{num_tasks} tasks requested but only {} classes",
            classes.len()
        )));
    }
    let mut rng = seed::rng_for(seed_value, &[0]);
    classes.shuffle(&mut rng);

    let base = classes.len() / num_tasks;
    let extra = classes.len() % num_tasks;
    let mut tasks = Vec::with_capacity(num_tasks);
    let mut cursor = 0;
    for task_index in 0..num_tasks {
        let size = base + usize::from(task_index < extra);
        let mut class_ids = classes[cursor..cursor + size].to_vec();
        cursor += size;
        class_ids.sort_unstable();

        let mut ids = |p: Partition| {
            let mut v: Vec<String> = manifest
                .records
                .iter()
                .filter(|r| r.partition == p && r.class_id.is_some_and(|c| class_ids.contains(&c)))
                .map(|r| r.video_id.clone())
                .collect();
            v.shuffle(&mut rng);
            v
        };
        let train_ids = ids(Partition::Train);
        let val_ids = ids(Partition::Val);
        let test_ids = ids(Partition::Test);
        tasks.push(Task {
            task_index,
            class_ids,
            train_ids,
            val_ids,
            test_ids,
        });
    }
    Ok(TaskSequence {
        seed: seed_value,
        tasks,
    })
}

/// Per-sequence statistics in the layout of a benchmark statistics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub tasks: usize,
    pub train_videos_per_task: f64,
    pub val_videos_per_task: f64,
    pub test_videos_per_task: f64,
    pub classes_per_task: f64,
    pub avg_frames_per_video: f64,
    pub untrimmed: bool,
}

pub fn split_stats(manifest: &DatasetManifest, seq: &TaskSequence) -> SplitStats {
    let n = seq.tasks.len().max(1) as f64;
    let avg = |f: fn(&Task) -> usize| seq.tasks.iter().map(f).sum::<usize>() as f64 / n;
    let frames: Vec<usize> = manifest.records.iter().map(|r| r.total_frames).collect();
    let avg_frames = if frames.is_empty() {
        0.0
    } else {
        frames.iter().sum::<usize>() as f64 / frames.len() as f64
    };
    SplitStats {
        tasks: seq.tasks.len(),
        train_videos_per_task: avg(|t| t.train_ids.len()),
        val_videos_per_task: avg(|t| t.val_ids.len()),
        test_videos_per_task: avg(|t| t.test_ids.len()),
        classes_per_task: avg(|t| t.class_ids.len()),
        avg_frames_per_video: avg_frames,
        untrimmed: manifest.trim_mode == super::manifest::TrimMode::Untrimmed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::manifest::{TrimMode, VideoRecord};
    use proptest::prelude::*;

    fn toy(classes: usize, per_class: usize) -> DatasetManifest {
        let mut records = Vec::new();
        for c in 0..classes {
            for i in 0..per_class {
                let partition = match i % 3 {
                    0 => Partition::Train,
                    1 => Partition::Val,
                    _ => Partition::Test,
                };
                records.push(VideoRecord {
                    video_id: format!("c{c}v{i}"),
                    total_frames: 10,
                    partition,
                    segments: vec![],
                    frame_source: String::new(),
                    class_id: Some(c),
                    frame_offset: 0,
                });
            }
        }
        DatasetManifest {
            name: "toy".into(),
            class_names: (0..classes).map(|c| c.to_string()).collect(),
            records,
            trim_mode: TrimMode::Trimmed,
        }
    }

    #[test]
    fn ucf_shape_remainder_goes_first() {
        let seq = generate_task_sequence(&toy(101, 1), 10, 3).unwrap();
        let sizes: Vec<_> = seq.tasks.iter().map(|t| t.class_ids.len()).collect();
        assert_eq!(sizes[0], 11);
        assert!(sizes[1..].iter().all(|&s| s == 10));
    }

    #[test]
    fn activitynet_shape_is_even() {
        let seq = generate_task_sequence(&toy(200, 1), 20, 9).unwrap();
        assert!(seq.tasks.iter().all(|t| t.class_ids.len() == 10));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let m = toy(12, 6);
        assert_eq!(
            generate_task_sequence(&m, 4, 5).unwrap(),
            generate_task_sequence(&m, 4, 5).unwrap()
        );
        assert_ne!(
            generate_task_sequence(&m, 4, 5).unwrap(),
            generate_task_sequence(&m, 4, 6).unwrap()
        );
    }

    #[test]
    fn too_many_tasks_rejected() {
        assert!(generate_task_sequence(&toy(3, 1), 4, 0).is_err());
        assert!(generate_task_sequence(&toy(3, 1), 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn partition_is_disjoint_balanced_and_complete(
            classes in 2usize..40, tasks in 2usize..10, seed in any::<u64>()
        ) {
            prop_assume!(tasks <= classes);
            let m = toy(classes, 3);
            let seq = generate_task_sequence(&m, tasks, seed).unwrap();
            let mut all: Vec<usize> = seq.tasks.iter().flat_map(|t| t.class_ids.clone()).collect();
            let total = all.len();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), total);
            prop_assert_eq!(all, m.labeled_classes());
            let sizes: Vec<_> = seq.tasks.iter().map(|t| t.class_ids.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for t in &seq.tasks {
                for id in t.train_ids.iter().chain(&t.val_ids).chain(&t.test_ids) {
                    let c = m.record(id).unwrap().class_id.unwrap();
                    prop_assert!(t.class_ids.contains(&c));
                }
            }
        }
    }
}
