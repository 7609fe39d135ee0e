//! Video manifests and their JSON Lines file format.
//!
//! The first line of a manifest file is a header object
//! `{"name", "class_names", "trim_mode"}`; every following non-blank line is
//! one video record
//! `{"video_id", "total_frames", "partition", "segments": [{"start", "end", "class"}], "frame_source"}`
//! with optional `"class"` (pre-labeled trimmed data) and `"frame_offset"`
//! (first source frame of a clip cut out of a longer video).

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrimMode {
    Trimmed,
    Untrimmed,
}

/// A labeled temporal extent `[start_frame, end_frame)` inside a video.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentAnnotation {
    #[serde(rename = "start")]
    pub start_frame: usize,
    #[serde(rename = "end")]
    pub end_frame: usize,
    #[serde(rename = "class")]
    pub class_id: usize,
}

impl SegmentAnnotation {
    pub fn new(start_frame: usize, end_frame: usize, class_id: usize) -> Self {
        Self {
            start_frame,
            end_frame,
            class_id,
        }
    }

    pub fn len(&self) -> usize {
        self.end_frame.saturating_sub(self.start_frame)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoRecord {
    pub video_id: String,
    pub total_frames: usize,
    pub partition: Partition,
    #[serde(default)]
    pub segments: Vec<SegmentAnnotation>,
    pub frame_source: String,
    #[serde(default, rename = "class", skip_serializing_if = "Option::is_none")]
    pub class_id: Option<usize>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub frame_offset: usize,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

impl VideoRecord {
    /// Distinct class ids over the record's segments.
    pub fn segment_classes(&self) -> BTreeSet<usize> {
        self.segments.iter().map(|s| s.class_id).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    name: String,
    class_names: Vec<String>,
    trim_mode: TrimMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub class_names: Vec<String>,
    pub records: Vec<VideoRecord>,
    pub trim_mode: TrimMode,
}

/// Class with the longest total segment coverage; ties go to the lowest id.
pub fn primary_label(segments: &[SegmentAnnotation]) -> Option<usize> {
    let mut support = std::collections::BTreeMap::<usize, usize>::new();
    for s in segments {
        *support.entry(s.class_id).or_default() += s.len();
    }
    // BTreeMap iterates in ascending class order, so `>` keeps the lowest id on ties.
    let mut best: Option<(usize, usize)> = None;
    for (&class, &len) in &support {
        if best.is_none_or(|(_, b)| len > b) {
            best = Some((class, len));
        }
    }
    best.map(|(c, _)| c)
}

impl DatasetManifest {
    /// Checks every manifest invariant.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.video_id.as_str()) {
                return Err(Error::DuplicateVideo(r.video_id.clone()));
            }
            validate_record(r, self.class_names.len(), self.trim_mode)?;
        }
        Ok(())
    }

    pub fn record(&self, video_id: &str) -> Option<&VideoRecord> {
        self.records.iter().find(|r| r.video_id == video_id)
    }

    /// Sorted class ids that carry at least one labeled record.
    pub fn labeled_classes(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.records.iter().filter_map(|r| r.class_id).collect();
        set.into_iter().collect()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let header = Header {
            name: self.name.clone(),
            class_names: self.class_names.clone(),
            trim_mode: self.trim_mode,
        };
        let _ = writeln!(out, "{}", serde_json::to_string(&header)?);
        for r in &self.records {
            let _ = writeln!(out, "{}", serde_json::to_string(r)?);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()?).map_err(|e| Error::io(path, e))
    }

    /// Parses and validates manifest text. `origin` is only used in error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, htext) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header line".into()))?;
        let header: Header =
            serde_json::from_str(htext).map_err(|e| parse_err(hline, format!("header: {e}")))?;
        let mut records = Vec::new();
        for (lineno, line) in lines {
            let r: VideoRecord =
                serde_json::from_str(line).map_err(|e| parse_err(lineno, e.to_string()))?;
            records.push(r);
        }
        let manifest = DatasetManifest {
            name: header.name,
            class_names: header.class_names,
            records,
            trim_mode: header.trim_mode,
        };
        manifest.validate()?;
        Ok(manifest)
    }
}

fn validate_record(r: &VideoRecord, num_classes: usize, mode: TrimMode) -> Result<()> {
    if r.total_frames == 0 {
        return Err(Error::record(&r.video_id, "total_frames must be at least 1"));
    }
    for s in &r.segments {
        if s.start_frame >= s.end_frame {
            return Err(Error::record(
                &r.video_id,
                format!("segment [{}, {}) is empty", s.start_frame, s.end_frame),
            ));
        }
        if s.end_frame > r.total_frames {
            return Err(Error::record(
                &r.video_id,
                format!(
                    "segment end {} exceeds total_frames {}",
                    s.end_frame, r.total_frames
                ),
            ));
        }
        if s.class_id >= num_classes {
            return Err(Error::record(
                &r.video_id,
                format!("segment class {} out of range ({num_classes} classes)", s.class_id),
            ));
        }
    }
    if let Some(c) = r.class_id {
        if c >= num_classes {
            return Err(Error::record(
                &r.video_id,
                format!("class {c} out of range ({num_classes} classes)"),
            ));
        }
        if !r.segments.is_empty() && primary_label(&r.segments) != Some(c) {
            return Err(Error::record(
                &r.video_id,
                format!("class {c} disagrees with the segments' primary label"),
            ));
        }
    }
    if mode == TrimMode::Trimmed {
        if r.class_id.is_none() && r.segments.len() != 1 {
            return Err(Error::record(&r.video_id, "trimmed record has no label"));
        }
        match r.segments.as_slice() {
            [] => {}
            [s] if s.start_frame == 0 && s.end_frame == r.total_frames => {}
            _ => {
                return Err(Error::record(
                    &r.video_id,
                    "trimmed record must be labeled over its whole extent",
                ))
            }
        }
    }
    Ok(())
}

/// Reads, parses and validates a manifest file.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest = DatasetManifest::parse(&text, path)?;
    // Trimmed records carrying a single whole-extent segment get their label from it.
    if manifest.trim_mode == TrimMode::Trimmed {
        for r in &mut manifest.records {
            if r.class_id.is_none() {
                r.class_id = r.segments.first().map(|s| s.class_id);
            }
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{"name":"toy","class_names":["a","b"],"trim_mode":"untrimmed"}
{"video_id":"v0","total_frames":400,"partition":"train","segments":[{"start":0,"end":100,"class":0}],"frame_source":"frames/v0"}
{"video_id":"v1","total_frames":300,"partition":"val","segments":[{"start":10,"end":50,"class":1}],"frame_source":"frames/v1"}

{"video_id":"v2","total_frames":50,"partition":"test","segments":[{"start":0,"end":50,"class":1}],"frame_source":"frames/v2"}
"#;

    #[test]
    fn parses_three_records() {
        let m = DatasetManifest::parse(GOOD, Path::new("m.jsonl")).unwrap();
        assert_eq!(m.records.len(), 3);
        assert_eq!(m.trim_mode, TrimMode::Untrimmed);
        assert_eq!(m.records[1].segments[0].len(), 40);
        let again = DatasetManifest::parse(&m.to_jsonl().unwrap(), Path::new("x")).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn segment_out_of_range_names_record() {
        let text = GOOD.replace(r#""end":50,"class":1}],"frame_source":"frames/v2""#, r#""end":51,"class":1}],"frame_source":"frames/v2""#);
        let err = DatasetManifest::parse(&text, Path::new("m")).unwrap_err();
        assert!(err.to_string().contains("v2"), "{err}");
    }

    #[test]
    fn duplicate_id_is_reported() {
        let text = GOOD.replace("\"v1\"", "\"v0\"");
        match DatasetManifest::parse(&text, Path::new("m")) {
            Err(Error::DuplicateVideo(id)) => assert_eq!(id, "v0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_error_carries_line_number() {
        let text = GOOD.replace("\"partition\":\"val\"", "\"partition\":\"nope\"");
        match DatasetManifest::parse(&text, Path::new("m")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trimmed_records_need_whole_extent() {
        let text = GOOD.replace("untrimmed", "trimmed");
        assert!(DatasetManifest::parse(&text, Path::new("m")).is_err());
    }

    #[test]
    fn primary_label_uses_total_support() {
        let segs = [
            SegmentAnnotation::new(0, 60, 1),
            SegmentAnnotation::new(100, 150, 0),
            SegmentAnnotation::new(200, 220, 0),
        ];
        assert_eq!(primary_label(&segs), Some(0));
        let tie = [SegmentAnnotation::new(0, 10, 3), SegmentAnnotation::new(10, 20, 2)];
        assert_eq!(primary_label(&tie), Some(2));
        assert_eq!(primary_label(&[]), None);
    }
}
