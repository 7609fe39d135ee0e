//! Segment-based frame sampling.

use rand::Rng as _;

use crate::memory::uniform_subsample;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    /// One seeded random frame per segment.
    Train,
    /// Each segment's center frame.
    Eval,
}

/// Splits `total_frames` into `n` equal segments and picks one frame from
/// each. Eval mode ignores `seed` and matches [`uniform_subsample`]. Segments
/// shorter than one frame fall back to the clamped center.
pub fn segment_sample(total_frames: usize, n: usize, mode: SampleMode, seed_value: u64) -> Vec<usize> {
    let centers = uniform_subsample(total_frames, n);
    match mode {
        SampleMode::Eval => centers,
        SampleMode::Train => {
            let mut rng = seed::rng(seed_value);
            (0..n)
                .map(|i| {
                    let lo = i * total_frames / n;
                    let hi = (i + 1) * total_frames / n;
                    if hi > lo {
                        rng.random_range(lo..hi)
                    } else {
                        centers[i]
                    }
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eval_centers() {
        assert_eq!(segment_sample(16, 8, SampleMode::Eval, 0), vec![1, 3, 5, 7, 9, 11, 13, 15]);
        assert_eq!(
            segment_sample(16, 8, SampleMode::Eval, 1),
            segment_sample(16, 8, SampleMode::Eval, 99)
        );
        // one-frame segments leave no choice; empty ones fall back to the center
        assert_eq!(segment_sample(3, 5, SampleMode::Train, 4), vec![0, 0, 1, 1, 2]);
    }

    proptest! {
        #[test]
        fn train_indices_stay_in_their_segment(total in 1usize..200, n in 1usize..16, s in any::<u64>()) {
            let idx = segment_sample(total, n, SampleMode::Train, s);
            prop_assert_eq!(idx.len(), n);
            prop_assert_eq!(&idx, &segment_sample(total, n, SampleMode::Train, s));
            for (i, &f) in idx.iter().enumerate() {
                prop_assert!(f < total);
                let (lo, hi) = (i * total / n, (i + 1) * total / n);
                if hi > lo {
                    prop_assert!(f >= lo && f < hi);
                }
            }
        }
    }
}
