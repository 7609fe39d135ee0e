//! Frame stacks and the providers that load them.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::manifest::{DatasetManifest, VideoRecord};
use super::synthetic::SyntheticVideoKey;
use crate::error::{Error, Result};

/// An 8-bit grayscale frame stack stored as `frames × height × width`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Video {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Video {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != frames * height * width {
            return Err(Error::DimensionMismatch {
                expected: frames * height * width,
                actual: data.len(),
            });
        }
        Ok(Self {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width
    }

    pub fn frame(&self, i: usize) -> &[u8] {
        let n = self.frame_len();
        &self.data[i * n..(i + 1) * n]
    }

    /// Copies out the frames at `indices` (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Video {
        let mut data = Vec::with_capacity(indices.len() * self.frame_len());
        for &i in indices {
            data.extend_from_slice(self.frame(i));
        }
        Video {
            frames: indices.len(),
            height: self.height,
            width: self.width,
            data,
        }
    }
}

pub trait FrameProvider: Send + Sync {
    fn load(&self, record: &VideoRecord) -> Result<Video>;
}

/// Reads pre-extracted frame directories (one image per frame, ordered by
/// file name). Relative `frame_source` paths resolve against `base`.
#[derive(Clone, Debug)]
pub struct DirectoryFrames {
    pub base: PathBuf,
}

impl DirectoryFrames {
    pub fn new(base: impl Into<PathBuf>) -> Self {
        Self { base: base.into() }
    }
}

impl FrameProvider for DirectoryFrames {
    fn load(&self, record: &VideoRecord) -> Result<Video> {
        let dir = self.base.join(&record.frame_source);
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let wanted = record.frame_offset..record.frame_offset + record.total_frames;
        if wanted.end > files.len() {
            return Err(Error::record(
                &record.video_id,
                format!("{} holds {} frames, need {}", dir.display(), files.len(), wanted.end),
            ));
        }
        let mut data = Vec::new();
        let mut dims = None;
        for path in &files[wanted] {
            let img = image::open(path)
                .map_err(|e| Error::Image {
                    path: path.clone(),
                    message: e.to_string(),
                })?
                .into_luma8();
            let d = (img.height() as usize, img.width() as usize);
            if *dims.get_or_insert(d) != d {
                return Err(Error::record(&record.video_id, "frames differ in size"));
            }
            data.extend_from_slice(img.as_raw());
        }
        let (h, w) = dims.unwrap_or((0, 0));
        Video::new(record.total_frames, h, w, data)
    }
}

/// Dispatches synthetic keys to the generator and everything else to frame
/// directories.
#[derive(Clone, Debug)]
pub struct DefaultFrames {
    pub directories: DirectoryFrames,
}

impl DefaultFrames {
    pub fn new(base: impl Into<PathBuf>) -> Self {
        Self {
            directories: DirectoryFrames::new(base),
        }
    }
}

impl FrameProvider for DefaultFrames {
    fn load(&self, record: &VideoRecord) -> Result<Video> {
        if SyntheticVideoKey::is_synthetic(&record.frame_source) {
            let key = SyntheticVideoKey::parse(&record.frame_source)
                .map_err(|m| Error::record(&record.video_id, m))?;
            let full = key.render();
            let end = record.frame_offset + record.total_frames;
            if end > full.frames {
                return Err(Error::record(&record.video_id, "frame range exceeds synthetic video"));
            }
            let idx: Vec<usize> = (record.frame_offset..end).collect();
            Ok(full.select(&idx))
        } else {
            self.directories.load(record)
        }
    }
}

/// All frames of a manifest held in memory, keyed by video id.
#[derive(Clone, Debug, Default)]
pub struct VideoStore {
    videos: HashMap<String, Video>,
}

impl VideoStore {
    pub fn load(manifest: &DatasetManifest, provider: &dyn FrameProvider) -> Result<Self> {
        let mut videos = HashMap::with_capacity(manifest.records.len());
        for r in &manifest.records {
            let v = provider.load(r)?;
            if v.frames != r.total_frames {
                return Err(Error::record(
                    &r.video_id,
                    format!("provider returned {} frames, manifest says {}", v.frames, r.total_frames),
                ));
            }
            videos.insert(r.video_id.clone(), v);
        }
        Ok(Self { videos })
    }

    pub fn insert(&mut self, id: impl Into<String>, video: Video) {
        self.videos.insert(id.into(), video);
    }

    pub fn get(&self, id: &str) -> Result<&Video> {
        self.videos
            .get(id)
            .ok_or_else(|| Error::record(id, "no frames loaded for video"))
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }
}

/// Writes a video as one PNG per frame into `dir` (`000000.png`, ...).
pub fn write_frame_directory(video: &Video, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for i in 0..video.frames {
        let path = dir.join(format!("{i:06}.png"));
        let img = image::GrayImage::from_raw(
            video.width as u32,
            video.height as u32,
            video.frame(i).to_vec(),
        )
        .expect("frame buffer matches dimensions");
        img.save(&path).map_err(|e| Error::Image {
            path: path.clone(),
            message: e.to_string(),
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::manifest::Partition;

    #[test]
    fn directory_round_trip_with_offset() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<u8> = (0..5 * 4 * 3).map(|v| (v * 3) as u8).collect();
        let video = Video::new(5, 4, 3, data).unwrap();
        write_frame_directory(&video, &dir.path().join("clip")).unwrap();
        let record = VideoRecord {
            video_id: "clip#1".into(),
            total_frames: 3,
            partition: Partition::Train,
            segments: vec![],
            frame_source: "clip".into(),
            class_id: Some(0),
            frame_offset: 1,
        };
        let loaded = DefaultFrames::new(dir.path()).load(&record).unwrap();
        assert_eq!(loaded, video.select(&[1, 2, 3]));
    }

    #[test]
    fn select_repeats_frames() {
        let v = Video::new(2, 1, 2, vec![1, 2, 3, 4]).unwrap();
        assert_eq!(v.select(&[1, 1, 0]).data, vec![3, 4, 3, 4, 1, 2]);
    }
}
