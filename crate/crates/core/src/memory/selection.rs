//! Exemplar selection: seeded random sampling and greedy herding.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

/// Centers of `k` equal temporal bins over `total_frames` frames:
/// `floor((i + 0.5) · total_frames / k)`, clamped to the last frame.
pub fn uniform_subsample(total_frames: usize, k: usize) -> Vec<usize> {
    let last = total_frames.saturating_sub(1);
    (0..k)
        .map(|i| (((2 * i + 1) * total_frames) / (2 * k)).min(last))
        .collect()
}

/// One chosen exemplar. `selection_rank` is the pick order within its class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selection {
    pub video_id: String,
    pub class_id: usize,
    pub selection_rank: usize,
}

/// Seeded uniform sample without replacement, per class. Classes with fewer
/// candidates than `per_class_quota` keep all of them.
pub fn select_exemplars_random(
    candidates: &[(String, usize)],
    per_class_quota: usize,
    seed_value: u64,
) -> Vec<Selection> {
    let mut by_class: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (id, class) in candidates {
        by_class.entry(*class).or_default().push(id);
    }
    let mut out = Vec::new();
    for (class, mut ids) in by_class {
        let mut rng = seed::rng_for(seed_value, &[class as u64]);
        ids.shuffle(&mut rng);
        out.extend(ids.into_iter().take(per_class_quota).enumerate().map(|(rank, id)| Selection {
            video_id: id.to_string(),
            class_id: class,
            selection_rank: rank,
        }));
    }
    out
}

/// Greedy herding over one class's candidate features.
///
/// Step `k` picks the unchosen candidate that brings the mean of the chosen
/// features closest (Euclidean) to the mean of all candidates; ties go to
/// the lowest index. Returns candidate indices in pick order.
pub fn select_exemplars_herding(features: &[Vec<f64>], per_class_quota: usize) -> Result<Vec<usize>> {
    let n = features.len();
    if n == 0 {
        return Err(Error::Empty("herding needs at least one candidate".into()));
    }
    let dim = features[0].len();
    if let Some(f) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: f.len(),
        });
    }
    let mut mean = vec![0.0; dim];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let steps = per_class_quota.min(n);
    let mut chosen = vec![false; n];
    let mut running = vec![0.0; dim];
    let mut order = Vec::with_capacity(steps);
    for step in 1..=steps {
        let count = step as f64;
        let mut best: Option<(usize, f64)> = None;
        for (i, f) in features.iter().enumerate() {
            if chosen[i] {
                continue;
            }
            let dist: f64 = mean
                .iter()
                .zip(&running)
                .zip(f)
                .map(|((m, r), v)| {
                    let d = m - (r + v) / count;
                    d * d
                })
                .sum();
            if best.is_none_or(|(_, b)| dist < b) {
                best = Some((i, dist));
            }
        }
        let (pick, _) = best.expect("an unchosen candidate remains");
        chosen[pick] = true;
        for (r, v) in running.iter_mut().zip(&features[pick]) {
            *r += v;
        }
        order.push(pick);
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn subsample_bin_centers() {
        assert_eq!(uniform_subsample(8, 8), (0..8).collect::<Vec<_>>());
        assert_eq!(uniform_subsample(8, 4), vec![1, 3, 5, 7]);
        assert_eq!(uniform_subsample(3, 4), vec![0, 1, 1, 2]);
        assert_eq!(uniform_subsample(16, 4), vec![2, 6, 10, 14]);
        assert_eq!(uniform_subsample(1, 3), vec![0, 0, 0]);
    }

    proptest! {
        #[test]
        fn subsample_is_monotone_and_even(total in 1usize..500, k in 1usize..64) {
            let idx = uniform_subsample(total, k);
            prop_assert_eq!(idx.len(), k);
            prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(idx.iter().all(|&i| i < total));
            if total >= k {
                let step = total as f64 / k as f64;
                for w in idx.windows(2) {
                    prop_assert!(((w[1] - w[0]) as f64 - step).abs() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn random_selection_edge_cases() {
        let cands: Vec<(String, usize)> = (0..5).map(|i| (format!("v{i}"), 0)).collect();
        assert!(select_exemplars_random(&cands, 0, 1).is_empty());
        let all = select_exemplars_random(&cands, 10, 1);
        assert_eq!(all.len(), 5);
        assert_eq!(all, select_exemplars_random(&cands, 10, 1));
        let ranks: Vec<_> = all.iter().map(|s| s.selection_rank).collect();
        assert_eq!(ranks, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn random_selection_is_per_class() {
        let cands: Vec<(String, usize)> = (0..12).map(|i| (format!("v{i}"), i % 3)).collect();
        let sel = select_exemplars_random(&cands, 2, 9);
        assert_eq!(sel.len(), 6);
        for s in &sel {
            let i: usize = s.video_id[1..].parse().unwrap();
            assert_eq!(i % 3, s.class_id);
        }
    }

    #[test]
    fn herding_small_cases() {
        assert_eq!(select_exemplars_herding(&[vec![3.0, 1.0]], 1).unwrap(), vec![0]);
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 0.0]];
        assert_eq!(select_exemplars_herding(&pts, 1).unwrap()[0], 2);
        let mut full = select_exemplars_herding(&pts, 3).unwrap();
        full.sort_unstable();
        assert_eq!(full, vec![0, 1, 2]);
        assert!(select_exemplars_herding(&[], 1).is_err());
        assert!(select_exemplars_herding(&[vec![1.0], vec![1.0, 2.0]], 1).is_err());
    }
}
