use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Frames kept per stored video: a fixed count, or every frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FramesPerVideo {
    Count(usize),
    All,
}

impl FramesPerVideo {
    pub fn count(self) -> Option<usize> {
        match self {
            FramesPerVideo::Count(k) => Some(k),
            FramesPerVideo::All => None,
        }
    }
}

impl fmt::Display for FramesPerVideo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FramesPerVideo::Count(k) => write!(f, "{k}"),
            FramesPerVideo::All => f.write_str("ALL"),
        }
    }
}

impl std::str::FromStr for FramesPerVideo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(FramesPerVideo::All);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(FramesPerVideo::Count(k)),
            _ => Err(Error::Config(format!(
                "frames_per_video must be a positive integer or \"all\", got `{s}`"
            ))),
        }
    }
}

impl Serialize for FramesPerVideo {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            FramesPerVideo::Count(k) => s.serialize_u64(*k as u64),
            FramesPerVideo::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for FramesPerVideo {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = FramesPerVideo;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a positive integer or \"all\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Self::Value, E> {
                if v == 0 {
                    return Err(E::custom("frames_per_video must be at least 1"));
                }
                Ok(FramesPerVideo::Count(v as usize))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Self::Value, E> {
                if v <= 0 {
                    return Err(E::custom("frames_per_video must be at least 1"));
                }
                Ok(FramesPerVideo::Count(v as usize))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Self::Value, E> {
                v.parse().map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

/// Memory size in stored frames.
///
/// Down-sampled memories hold `max_video_instances × frames_per_video`
/// frames; full-resolution memories hold `max_video_instances` videos of the
/// dataset's average length, rounded to the nearest frame.
pub fn frame_capacity(
    max_video_instances: usize,
    frames_per_video: FramesPerVideo,
    avg_frames_full: Option<f64>,
) -> Result<usize> {
    match frames_per_video {
        FramesPerVideo::Count(k) => Ok(max_video_instances * k),
        FramesPerVideo::All => {
            let avg = avg_frames_full.ok_or_else(|| {
                Error::Config("full-resolution memory needs the average video length".into())
            })?;
            if !(avg > 0.0 && avg.is_finite()) {
                return Err(Error::Config(format!("average video length {avg} must be positive")));
            }
            Ok((max_video_instances as f64 * avg).round() as usize)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryBudget {
    pub max_video_instances: usize,
    pub frames_per_video: FramesPerVideo,
    pub frame_capacity: usize,
}

impl MemoryBudget {
    pub fn new(
        max_video_instances: usize,
        frames_per_video: FramesPerVideo,
        avg_frames_full: Option<f64>,
    ) -> Result<Self> {
        let frame_capacity = frame_capacity(max_video_instances, frames_per_video, avg_frames_full)?;
        if frame_capacity == 0 {
            return Err(Error::Config("memory frame capacity must be positive".into()));
        }
        Ok(Self {
            max_video_instances,
            frames_per_video,
            frame_capacity,
        })
    }

    /// Videos each class may keep once `classes_seen` classes share the memory.
    pub fn quota(&self, classes_seen: usize) -> usize {
        self.max_video_instances.checked_div(classes_seen).unwrap_or(0)
    }
}
