//! Labeling rules for untrimmed video and conversion to trimmed clips.

use serde::Serialize;

use super::manifest::{primary_label, DatasetManifest, SegmentAnnotation, TrimMode, VideoRecord};
use crate::error::{Error, Result};

/// Outcome of the untrimmed labeling pass.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscardStats {
    pub total: usize,
    pub discarded: usize,
    pub discarded_ids: Vec<String>,
}

impl DiscardStats {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.discarded as f64 / self.total as f64
        }
    }
}

/// Gives every surviving untrimmed video a single video-level label.
///
/// Videos whose segments carry two or more distinct classes are dropped. The
/// survivors are labeled with the class of longest total segment coverage,
/// which, once multi-label videos are gone, is simply their only class.
pub fn assign_untrimmed_labels(manifest: &DatasetManifest) -> Result<(DatasetManifest, DiscardStats)> {
    if manifest.trim_mode != TrimMode::Untrimmed {
        return Err(Error::InvalidManifest(
            "untrimmed labeling requires trim_mode = untrimmed".into(),
        ));
    }
    let mut records = Vec::with_capacity(manifest.records.len());
    let mut discarded_ids = Vec::new();
    for r in &manifest.records {
        if r.segments.is_empty() {
            return Err(Error::record(
                &r.video_id,
                "no segments; cannot assign a primary label",
            ));
        }
        if r.segment_classes().len() >= 2 {
            discarded_ids.push(r.video_id.clone());
            continue;
        }
        let mut kept = r.clone();
        kept.class_id = primary_label(&r.segments);
        records.push(kept);
    }
    let stats = DiscardStats {
        total: manifest.records.len(),
        discarded: discarded_ids.len(),
        discarded_ids,
    };
    let out = DatasetManifest {
        name: manifest.name.clone(),
        class_names: manifest.class_names.clone(),
        records,
        trim_mode: TrimMode::Untrimmed,
    };
    Ok((out, stats))
}

/// Cuts every labeled segment out as an independent trimmed video named
/// `<parent_id>#<segment_ordinal>`.
pub fn trim_manifest(manifest: &DatasetManifest) -> Result<DatasetManifest> {
    if manifest.trim_mode != TrimMode::Untrimmed {
        return Err(Error::InvalidManifest(
            "trimming requires trim_mode = untrimmed".into(),
        ));
    }
    let mut records = Vec::new();
    for r in &manifest.records {
        if r.segments.is_empty() {
            return Err(Error::record(&r.video_id, "no segments to trim"));
        }
        for (ordinal, s) in r.segments.iter().enumerate() {
            let len = s.len();
            records.push(VideoRecord {
                video_id: format!("{}#{}", r.video_id, ordinal),
                total_frames: len,
                partition: r.partition,
                segments: vec![SegmentAnnotation::new(0, len, s.class_id)],
                frame_source: r.frame_source.clone(),
                class_id: Some(s.class_id),
                frame_offset: r.frame_offset + s.start_frame,
            });
        }
    }
    let out = DatasetManifest {
        name: manifest.name.clone(),
        class_names: manifest.class_names.clone(),
        records,
        trim_mode: TrimMode::Trimmed,
    };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::manifest::Partition;
    use proptest::prelude::*;

    fn rec(id: &str, total: usize, segs: &[(usize, usize, usize)]) -> VideoRecord {
        VideoRecord {
            video_id: id.into(),
            total_frames: total,
            partition: Partition::Train,
            segments: segs
                .iter()
                .map(|&(s, e, c)| SegmentAnnotation::new(s, e, c))
                .collect(),
            frame_source: format!("frames/{id}"),
            class_id: None,
            frame_offset: 0,
        }
    }

    fn manifest(records: Vec<VideoRecord>) -> DatasetManifest {
        DatasetManifest {
            name: "t".into(),
            class_names: (0..4).map(|c| format!("c{c}")).collect(),
            records,
            trim_mode: TrimMode::Untrimmed,
        }
    }

    #[test]
    fn single_label_kept_multi_label_discarded() {
        let m = manifest(vec![
            rec("a", 400, &[(0, 100, 0), (150, 400, 0)]),
            rec("b", 400, &[(0, 100, 0), (150, 400, 1)]),
        ]);
        let (out, stats) = assign_untrimmed_labels(&m).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].class_id, Some(0));
        assert_eq!(stats.discarded_ids, vec!["b".to_string()]);
    }

    #[test]
    fn discard_fraction_on_thousand_records() {
        let mut records: Vec<_> = (0..1000)
            .map(|i| rec(&format!("v{i}"), 100, &[(0, 50, i % 4)]))
            .collect();
        records[17].segments.push(SegmentAnnotation::new(60, 90, 3));
        records[17].segments[0].class_id = 1;
        records[500].segments.push(SegmentAnnotation::new(60, 90, 2));
        records[500].segments[0].class_id = 0;
        let (_, stats) = assign_untrimmed_labels(&manifest(records)).unwrap();
        assert_eq!(stats.discarded, 2);
        assert_eq!(stats.fraction(), 0.002);
    }

    #[test]
    fn zero_segment_record_is_an_error() {
        let m = manifest(vec![rec("a", 10, &[])]);
        assert!(assign_untrimmed_labels(&m).is_err());
        assert!(trim_manifest(&m).is_err());
    }

    #[test]
    fn trim_splits_segments() {
        let m = manifest(vec![
            rec("p", 400, &[(10, 50, 2), (100, 180, 2)]),
        ]);
        let t = trim_manifest(&m).unwrap();
        assert_eq!(t.trim_mode, TrimMode::Trimmed);
        assert_eq!(t.records.len(), 2);
        assert_eq!(t.records[0].video_id, "p#0");
        assert_eq!(t.records[0].total_frames, 40);
        assert_eq!(t.records[1].frame_offset, 100);
        assert!(t.records.iter().all(|r| r.class_id == Some(2)));
    }

    fn arb_record(idx: usize) -> impl Strategy<Value = VideoRecord> {
        prop::collection::vec((0usize..50, 1usize..30, 0usize..4), 1..5).prop_map(move |raw| {
            let mut segs = Vec::new();
            let mut cursor = 0;
            for (gap, len, c) in raw {
                let start = cursor + gap;
                segs.push((start, start + len, c));
                cursor = start + len;
            }
            rec(&format!("v{idx}"), cursor + 5, &segs)
        })
    }

    fn arb_manifest() -> impl Strategy<Value = DatasetManifest> {
        (1usize..20)
            .prop_flat_map(|n| (0..n).map(arb_record).collect::<Vec<_>>())
            .prop_map(manifest)
    }

    proptest! {
        #[test]
        fn labeling_is_idempotent_and_counts_match_scan(m in arb_manifest()) {
            let (once, stats) = assign_untrimmed_labels(&m).unwrap();
            let (twice, stats2) = assign_untrimmed_labels(&once).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(stats2.discarded, 0);
            let direct = m.records.iter().filter(|r| {
                let first = r.segments[0].class_id;
                r.segments.iter().any(|s| s.class_id != first)
            }).count();
            prop_assert_eq!(stats.discarded, direct);
        }

        #[test]
        fn trimming_conserves_labeled_frames(m in arb_manifest()) {
            let t = trim_manifest(&m).unwrap();
            let src: usize = m.records.iter().flat_map(|r| &r.segments).map(|s| s.len()).sum();
            let dst: usize = t.records.iter().map(|r| r.total_frames).sum();
            prop_assert_eq!(src, dst);
        }
    }
}
