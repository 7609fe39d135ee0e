//! Toy video benchmark: a bright blob drifting over a noisy background.
//!
//! Every class moves the blob in its own direction on a wrap-around canvas
//! from a uniformly random start, so the position distribution of any single
//! frame is the same for all classes; only the motion between frames tells
//! classes apart.

use std::f64::consts::TAU;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::frames::{Video, VideoStore};
use super::manifest::{DatasetManifest, Partition, SegmentAnnotation, TrimMode, VideoRecord};
use crate::error::{Error, Result};
use crate::seed;

const KEY_PREFIX: &str = "synth?";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub videos_per_class: usize,
    pub frames_per_video: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    /// Blob displacement in pixels per frame. Larger values make frames that
    /// are far apart in time look less alike.
    #[serde(default = "default_speed")]
    pub speed: f64,
    /// Background noise amplitude as a fraction of the 8-bit range.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_sigma")]
    pub blob_sigma: f64,
}

fn default_speed() -> f64 {
    1.0
}
fn default_noise() -> f64 {
    0.25
}
fn default_sigma() -> f64 {
    1.2
}

impl SyntheticConfig {
    pub fn new(
        num_classes: usize,
        videos_per_class: usize,
        frames_per_video: usize,
        frame_size: (usize, usize),
        seed: u64,
    ) -> Self {
        Self {
            num_classes,
            videos_per_class,
            frames_per_video,
            height: frame_size.0,
            width: frame_size.1,
            seed,
            speed: default_speed(),
            noise: default_noise(),
            blob_sigma: default_sigma(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.videos_per_class == 0 || self.frames_per_video == 0 {
            return Err(Error::InvalidArgument("synthetic counts must be at least 1".into()));
        }
        if self.height < 8 || self.width < 8 {
            return Err(Error::InvalidArgument(format!(
                "frame size {}x{} is too small to render the pattern (minimum 8x8)",
                self.height, self.width
            )));
        }
        if !(self.speed.is_finite() && self.noise.is_finite() && self.blob_sigma > 0.0) {
            return Err(Error::InvalidArgument("synthetic knobs must be finite".into()));
        }
        Ok(())
    }

    fn key(&self, class: usize, index: usize) -> SyntheticVideoKey {
        SyntheticVideoKey {
            seed: self.seed,
            classes: self.num_classes,
            class,
            index,
            frames: self.frames_per_video,
            height: self.height,
            width: self.width,
            speed: self.speed,
            noise: self.noise,
            sigma: self.blob_sigma,
        }
    }
}

/// Self-contained recipe for one synthetic video, serialized into the
/// manifest's `frame_source` so frames can be regenerated anywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticVideoKey {
    pub seed: u64,
    pub classes: usize,
    pub class: usize,
    pub index: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub speed: f64,
    pub noise: f64,
    pub sigma: f64,
}

impl SyntheticVideoKey {
    pub fn is_synthetic(source: &str) -> bool {
        source.starts_with(KEY_PREFIX)
    }

    pub fn encode(&self) -> String {
        format!(
            "{KEY_PREFIX}seed={}&classes={}&class={}&index={}&frames={}&h={}&w={}&speed={}&noise={}&sigma={}",
            self.seed,
            self.classes,
            self.class,
            self.index,
            self.frames,
            self.height,
            self.width,
            self.speed,
            self.noise,
            self.sigma
        )
    }

    pub fn parse(source: &str) -> std::result::Result<Self, String> {
        let query = source
            .strip_prefix(KEY_PREFIX)
            .ok_or_else(|| format!("not a synthetic key: {source}"))?;
        let mut fields = std::collections::HashMap::new();
        for pair in query.split('&') {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| format!("malformed key field `{pair}`"))?;
            fields.insert(k, v);
        }
        fn get<T: std::str::FromStr>(
            f: &std::collections::HashMap<&str, &str>,
            k: &str,
        ) -> std::result::Result<T, String> {
            f.get(k)
                .ok_or_else(|| format!("synthetic key lacks `{k}`"))?
                .parse()
                .map_err(|_| format!("synthetic key field `{k}` is malformed"))
        }
        Ok(Self {
            seed: get(&fields, "seed")?,
            classes: get(&fields, "classes")?,
            class: get(&fields, "class")?,
            index: get(&fields, "index")?,
            frames: get(&fields, "frames")?,
            height: get(&fields, "h")?,
            width: get(&fields, "w")?,
            speed: get(&fields, "speed")?,
            noise: get(&fields, "noise")?,
            sigma: get(&fields, "sigma")?,
        })
    }

    /// Renders the video. Deterministic in the key.
    pub fn render(&self) -> Video {
        let mut rng = seed::rng_for(self.seed, &[0x5EED, self.class as u64, self.index as u64]);
        let (h, w) = (self.height as f64, self.width as f64);
        let spacing = TAU / self.classes.max(1) as f64;
        let angle = spacing * self.class as f64 + rng.random_range(-0.1..0.1) * spacing;
        let speed = self.speed * rng.random_range(0.85..1.15);
        let (vy, vx) = (speed * angle.sin(), speed * angle.cos());
        let (y0, x0) = (rng.random_range(0.0..h), rng.random_range(0.0..w));
        let two_sigma_sq = 2.0 * self.sigma * self.sigma;

        let mut data = Vec::with_capacity(self.frames * self.height * self.width);
        for t in 0..self.frames {
            let cy = (y0 + vy * t as f64).rem_euclid(h);
            let cx = (x0 + vx * t as f64).rem_euclid(w);
            for y in 0..self.height {
                let dy = wrap_delta(y as f64 - cy, h);
                for x in 0..self.width {
                    let dx = wrap_delta(x as f64 - cx, w);
                    let blob = 190.0 * (-(dy * dy + dx * dx) / two_sigma_sq).exp();
                    let bg = 30.0 + rng.random_range(0.0..=1.0) * self.noise * 255.0;
                    data.push((bg + blob).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        Video {
            frames: self.frames,
            height: self.height,
            width: self.width,
            data,
        }
    }
}

/// Shortest signed offset on a ring of circumference `period`.
pub fn wrap_delta(d: f64, period: f64) -> f64 {
    let r = d.rem_euclid(period);
    if r > period / 2.0 {
        r - period
    } else {
        r
    }
}

/// Builds a trimmed manifest of `num_classes × videos_per_class` videos plus
/// their rendered frames. Each class is split 70/15/15 (rounded) into
/// train/val/test.
pub fn generate_synthetic_dataset(config: &SyntheticConfig) -> Result<(DatasetManifest, VideoStore)> {
    config.validate()?;
    let n = config.videos_per_class;
    let n_train = ((n as f64) * 0.70).round() as usize;
    let n_val = (((n as f64) * 0.15).round() as usize).min(n - n_train);
    let mut records = Vec::with_capacity(config.num_classes * n);
    let mut store = VideoStore::default();
    for class in 0..config.num_classes {
        for index in 0..n {
            let partition = if index < n_train {
                Partition::Train
            } else if index < n_train + n_val {
                Partition::Val
            } else {
                Partition::Test
            };
            let key = config.key(class, index);
            let video_id = format!("synth_c{class:03}_v{index:04}");
            store.insert(video_id.clone(), key.render());
            records.push(VideoRecord {
                video_id,
                total_frames: config.frames_per_video,
                partition,
                segments: vec![SegmentAnnotation::new(0, config.frames_per_video, class)],
                frame_source: key.encode(),
                class_id: Some(class),
                frame_offset: 0,
            });
        }
    }
    let manifest = DatasetManifest {
        name: format!("synthetic{}", config.num_classes),
        class_names: (0..config.num_classes).map(|c| format!("motion_{c:03}")).collect(),
        records,
        trim_mode: TrimMode::Trimmed,
    };
    manifest.validate()?;
    Ok((manifest, store))
}
