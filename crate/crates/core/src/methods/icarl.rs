//! Rehearsal with distillation, and nearest-mean-of-exemplars inference.

use std::collections::BTreeMap;

use super::losses::{binary_cross_entropy, sigmoid};
use crate::error::{Error, Result};
use crate::memory::EpisodicMemory;
use crate::model::{l2_normalize, Clip, VideoClassifier};

/// Sigmoid of the old model's outputs, used as soft targets for the
/// old-class logits.
pub fn distillation_targets(old_logits: &[f64]) -> Vec<f64> {
    old_logits.iter().map(|&z| sigmoid(z)).collect()
}

/// Full target vector over a `num_slots` head: distilled targets on the first
/// `old_logits.len()` slots, one-hot ground truth on the rest.
pub fn icarl_targets(old_logits: &[f64], label: usize, num_slots: usize) -> Vec<f64> {
    let mut t = distillation_targets(old_logits);
    t.resize(num_slots, 0.0);
    if label >= old_logits.len() && label < num_slots {
        t[label] = 1.0;
    }
    t
}

/// Summed sigmoid cross-entropy against [`icarl_targets`]. With no old model
/// (first task) every slot takes the one-hot target.
pub fn icarl_loss(logits: &[f64], old_logits: Option<&[f64]>, label: usize) -> (f64, Vec<f64>) {
    let targets = icarl_targets(old_logits.unwrap_or(&[]), label, logits.len());
    binary_cross_entropy(logits, &targets)
}

/// L2-normalized class means of L2-normalized exemplar features.
#[derive(Clone, Debug, PartialEq)]
pub struct Prototypes {
    means: BTreeMap<usize, Vec<f64>>,
}

impl Prototypes {
    /// `features` yields `(class_id, feature)` pairs in any order.
    pub fn from_features<I>(features: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, Vec<f64>)>,
    {
        let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
        for (class, mut f) in features {
            l2_normalize(&mut f);
            let (sum, n) = sums.entry(class).or_insert_with(|| (vec![0.0; f.len()], 0));
            if sum.len() != f.len() {
                return Err(Error::DimensionMismatch {
                    expected: sum.len(),
                    actual: f.len(),
                });
            }
            for (s, v) in sum.iter_mut().zip(&f) {
                *s += v;
            }
            *n += 1;
        }
        if sums.is_empty() {
            return Err(Error::Empty("no exemplars to build prototypes from".into()));
        }
        let means = sums
            .into_iter()
            .map(|(c, (mut sum, n))| {
                for s in &mut sum {
                    *s /= n as f64;
                }
                l2_normalize(&mut sum);
                (c, sum)
            })
            .collect();
        Ok(Self { means })
    }

    /// Prototypes from every memory entry, with features from `model` on the
    /// stored frames.
    pub fn from_memory<M: VideoClassifier>(model: &M, memory: &EpisodicMemory) -> Result<Self> {
        Self::from_features(
            memory
                .entries()
                .map(|e| (e.class_id, model.features(&Clip::whole(&e.frames)))),
        )
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.means.keys().copied()
    }

    pub fn mean(&self, class: usize) -> Option<&[f64]> {
        self.means.get(&class).map(Vec::as_slice)
    }

    /// Nearest prototype to the normalized `feature`; ties go to the lowest id.
    pub fn classify(&self, feature: &[f64]) -> usize {
        let mut f = feature.to_vec();
        l2_normalize(&mut f);
        let mut best = (f64::INFINITY, usize::MAX);
        for (&c, mean) in &self.means {
            let d: f64 = mean.iter().zip(&f).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, c);
            }
        }
        best.1
    }
}

/// Builds prototypes from `memory` and classifies one clip. Prefer building
/// [`Prototypes`] once when classifying many clips.
pub fn nearest_mean_classify<M: VideoClassifier>(
    model: &M,
    memory: &EpisodicMemory,
    clip: &Clip,
) -> Result<usize> {
    if let Some(c) = (0..memory.classes_seen()).find(|&c| memory.class_entries(c).is_empty()) {
        return Err(Error::Empty(format!("class {c} has no exemplars")));
    }
    let protos = Prototypes::from_memory(model, memory)?;
    Ok(protos.classify(&model.features(clip)))
}
