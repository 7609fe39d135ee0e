//! Frame-budgeted episodic memory.
//!
//! Capacity is counted in stored frames. Videos are temporally down-sampled
//! when inserted and the dropped frames are gone for good. Every mutation
//! re-checks the frame budget.

pub mod budget;
pub mod selection;
pub mod snapshot;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

pub use budget::{frame_capacity, FramesPerVideo, MemoryBudget};
pub use selection::{select_exemplars_herding, select_exemplars_random, uniform_subsample, Selection};
pub use snapshot::{load_snapshot, save_snapshot};

use crate::dataset::{Video, VideoStore};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryEntry {
    pub video_id: String,
    pub class_id: usize,
    /// Source-frame indices of the stored frames.
    pub frame_indices: Vec<usize>,
    pub frames: Video,
    /// Herding (or draw) priority within the class; 0 is kept longest.
    pub selection_rank: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodicMemory {
    budget: MemoryBudget,
    entries: BTreeMap<usize, Vec<MemoryEntry>>,
    classes_seen: usize,
}

impl EpisodicMemory {
    pub fn new(budget: MemoryBudget) -> Self {
        Self {
            budget,
            entries: BTreeMap::new(),
            classes_seen: 0,
        }
    }

    pub(crate) fn from_parts(
        budget: MemoryBudget,
        classes_seen: usize,
        entries: Vec<MemoryEntry>,
    ) -> Result<Self> {
        let mut m = Self {
            budget,
            entries: BTreeMap::new(),
            classes_seen,
        };
        for e in entries {
            m.insert(e)?;
        }
        Ok(m)
    }

    pub fn budget(&self) -> &MemoryBudget {
        &self.budget
    }

    pub fn classes_seen(&self) -> usize {
        self.classes_seen
    }

    pub fn total_frames(&self) -> usize {
        self.entries().map(|e| e.frames.frames).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All entries, by class id then selection rank.
    pub fn entries(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.values().flatten()
    }

    pub fn class_entries(&self, class_id: usize) -> &[MemoryEntry] {
        self.entries.get(&class_id).map_or(&[], Vec::as_slice)
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.keys().copied()
    }

    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        self.entries.iter().map(|(&c, v)| (c, v.len())).collect()
    }

    /// Source-frame indices kept for a video of `total_frames` frames.
    pub fn stored_indices(&self, total_frames: usize) -> Vec<usize> {
        match self.budget.frames_per_video {
            FramesPerVideo::Count(k) => uniform_subsample(total_frames, k),
            FramesPerVideo::All => (0..total_frames).collect(),
        }
    }

    /// Down-samples `video` and wraps it as an entry (not inserted).
    pub fn make_entry(&self, video_id: &str, class_id: usize, video: &Video, rank: usize) -> MemoryEntry {
        let frame_indices = self.stored_indices(video.frames);
        MemoryEntry {
            video_id: video_id.to_string(),
            class_id,
            frames: video.select(&frame_indices),
            frame_indices,
            selection_rank: rank,
        }
    }

    /// Adds one entry; refuses it if the frame budget would be exceeded.
    pub fn insert(&mut self, entry: MemoryEntry) -> Result<()> {
        if let FramesPerVideo::Count(k) = self.budget.frames_per_video {
            if entry.frames.frames != k || entry.frame_indices.len() != k {
                return Err(Error::record(
                    &entry.video_id,
                    format!("memory entry holds {} frames, budget says {k}", entry.frames.frames),
                ));
            }
        }
        let stored = self.total_frames() + entry.frames.frames;
        if stored > self.budget.frame_capacity {
            return Err(Error::BudgetExceeded {
                stored,
                capacity: self.budget.frame_capacity,
            });
        }
        let list = self.entries.entry(entry.class_id).or_default();
        let pos = list.partition_point(|e| e.selection_rank <= entry.selection_rank);
        list.insert(pos, entry);
        self.check_budget();
        Ok(())
    }

    /// Inserts selected exemplars of one class in rank order. Stops early when
    /// the frame budget is full (only possible with full-length storage of
    /// uneven videos) and returns how many were stored.
    pub fn add_exemplars(&mut self, selections: &[Selection], videos: &VideoStore) -> Result<usize> {
        let mut sorted: Vec<&Selection> = selections.iter().collect();
        sorted.sort_by_key(|s| (s.class_id, s.selection_rank));
        let mut stored = 0;
        for s in sorted {
            let entry = self.make_entry(&s.video_id, s.class_id, videos.get(&s.video_id)?, s.selection_rank);
            match self.insert(entry) {
                Ok(()) => stored += 1,
                Err(Error::BudgetExceeded { .. }) => break,
                Err(e) => return Err(e),
            }
        }
        Ok(stored)
    }

    /// Shrinks every class to `floor(max_video_instances / classes_seen_after_task)`
    /// entries, keeping the lowest selection ranks.
    pub fn rebalance(&mut self, classes_seen_after_task: usize) -> Result<()> {
        if classes_seen_after_task < self.classes_seen {
            return Err(Error::InvalidArgument(format!(
                "class count cannot shrink ({} -> {classes_seen_after_task})",
                self.classes_seen
            )));
        }
        self.classes_seen = classes_seen_after_task;
        let quota = self.budget.quota(classes_seen_after_task);
        for list in self.entries.values_mut() {
            list.truncate(quota);
        }
        self.entries.retain(|_, v| !v.is_empty());
        self.check_budget();
        Ok(())
    }

    fn check_budget(&self) {
        let stored = self.total_frames();
        assert!(
            stored <= self.budget.frame_capacity,
            "episodic memory over budget: {stored} > {}",
            self.budget.frame_capacity
        );
    }

    /// One seeded, shuffled epoch over every entry, cut into batches.
    pub fn replay_batches(&self, batch_size: usize, seed_value: u64) -> ReplayBatches<'_> {
        ReplayBatches::new(self.entries().collect(), batch_size, seed_value)
    }
}

/// A batch of replayed exemplars.
#[derive(Clone, Debug)]
pub struct ReplayBatch<'a> {
    pub entries: Vec<&'a MemoryEntry>,
}

impl<'a> ReplayBatch<'a> {
    pub fn frames(&self) -> impl Iterator<Item = &'a Video> + '_ {
        self.entries.iter().map(|e| &e.frames)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.class_id).collect()
    }
}

/// Iterator over one replay epoch.
pub struct ReplayBatches<'a> {
    order: Vec<&'a MemoryEntry>,
    batch_size: usize,
    cursor: usize,
}

impl<'a> ReplayBatches<'a> {
    /// Shuffles `items` with `seed_value`; an empty list yields nothing.
    pub fn new(mut items: Vec<&'a MemoryEntry>, batch_size: usize, seed_value: u64) -> Self {
        items.shuffle(&mut seed::rng(seed_value));
        Self {
            order: items,
            batch_size: batch_size.max(1),
            cursor: 0,
        }
    }
}

impl<'a> Iterator for ReplayBatches<'a> {
    type Item = ReplayBatch<'a>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let entries = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        Some(ReplayBatch { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn video(frames: usize, tag: u8) -> Video {
        Video::new(frames, 2, 2, (0..frames * 4).map(|i| tag.wrapping_add(i as u8)).collect()).unwrap()
    }

    fn filled(instances: usize, k: usize, classes: usize, per_class: usize) -> EpisodicMemory {
        let budget = MemoryBudget::new(instances, FramesPerVideo::Count(k), None).unwrap();
        let mut m = EpisodicMemory::new(budget);
        m.rebalance(classes).unwrap();
        let quota = budget.quota(classes).min(per_class);
        for c in 0..classes {
            for r in 0..quota {
                let e = m.make_entry(&format!("c{c}r{r}"), c, &video(16, r as u8), r);
                m.insert(e).unwrap();
            }
        }
        m
    }

    #[test]
    fn entries_are_down_sampled_on_insert() {
        let m = filled(10, 4, 1, 1);
        let e = &m.class_entries(0)[0];
        assert_eq!(e.frame_indices, vec![2, 6, 10, 14]);
        assert_eq!(e.frames, video(16, 0).select(&[2, 6, 10, 14]));
    }

    #[test]
    fn budget_is_enforced() {
        let budget = MemoryBudget::new(2, FramesPerVideo::Count(4), None).unwrap();
        let mut m = EpisodicMemory::new(budget);
        for r in 0..2 {
            let e = m.make_entry(&format!("v{r}"), 0, &video(8, 0), r);
            m.insert(e).unwrap();
        }
        let e = m.make_entry("v2", 0, &video(8, 0), 2);
        assert!(matches!(m.insert(e), Err(Error::BudgetExceeded { .. })));
        assert_eq!(m.total_frames(), 8);
    }

    #[test]
    fn rebalance_quota_and_idempotence() {
        let mut m = filled(8000, 1, 40, 300);
        assert!(m.class_counts().values().all(|&n| n == 200));
        m.rebalance(400).unwrap();
        assert!(m.class_counts().values().all(|&n| n == 20));
        let before = m.clone();
        m.rebalance(400).unwrap();
        assert_eq!(m, before);
        assert!(m.rebalance(10).is_err());
        // kept entries are the lowest ranks
        assert!(m.class_entries(3).iter().map(|e| e.selection_rank).eq(0..20));
    }

    #[test]
    fn replay_batch_sizes_and_labels() {
        let m = filled(10, 2, 2, 5);
        assert_eq!(m.len(), 10);
        let sizes: Vec<_> = m.replay_batches(4, 3).map(|b| b.entries.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let mut labels: Vec<_> = m.replay_batches(4, 3).flat_map(|b| b.labels()).collect();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        let ids = |s| m.replay_batches(4, s).flat_map(|b| b.entries).map(|e| e.video_id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(3), ids(3));
        let empty = EpisodicMemory::new(*m.budget());
        assert_eq!(empty.replay_batches(4, 0).count(), 0);
    }

    proptest! {
        #[test]
        fn rebalance_never_grows_and_respects_budget(
            instances in 1usize..60, k in 1usize..5, first in 1usize..6, extra in 0usize..6
        ) {
            let mut m = filled(instances, k, first, 1000);
            let before = m.class_counts();
            m.rebalance(first + extra).unwrap();
            let after = m.class_counts();
            for (c, n) in &after {
                prop_assert!(*n <= before[c]);
            }
            prop_assert!(m.total_frames() <= m.budget().frame_capacity);
            let counts: Vec<_> = after.values().copied().collect();
            if let (Some(max), Some(min)) = (counts.iter().max(), counts.iter().min()) {
                prop_assert!(max - min <= 1);
            }
        }
    }
}
