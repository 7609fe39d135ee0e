//! Model contract used by the continual-learning methods, plus the small
//! reference network and optimizer used at desk scale.

mod adam;
mod reference;

pub use adam::Adam;
pub use reference::{ReferenceNet, ReferenceNetConfig};

use crate::dataset::Video;

/// Frames prepared for a model: `frames × height × width` pixels scaled to [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl Clip {
    pub fn from_video(video: &Video, indices: &[usize]) -> Self {
        let n = video.frame_len();
        let mut pixels = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            pixels.extend(video.frame(i).iter().map(|&b| b as f64 / 255.0));
        }
        Self {
            frames: indices.len(),
            height: video.height,
            width: video.width,
            pixels,
        }
    }

    pub fn whole(video: &Video) -> Self {
        let idx: Vec<usize> = (0..video.frames).collect();
        Self::from_video(video, &idx)
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.frame_len();
        &self.pixels[i * n..(i + 1) * n]
    }

    /// A new clip made of this clip's frames at `indices`.
    pub fn select(&self, indices: &[usize]) -> Clip {
        let mut pixels = Vec::with_capacity(indices.len() * self.frame_len());
        for &i in indices {
            pixels.extend_from_slice(self.frame(i));
        }
        Clip {
            frames: indices.len(),
            height: self.height,
            width: self.width,
            pixels,
        }
    }

    /// Raw constructor for models that treat the pixels as a feature vector.
    pub fn from_vector(values: Vec<f64>) -> Self {
        Self {
            frames: 1,
            height: 1,
            width: values.len(),
            pixels: values,
        }
    }
}

/// What a backbone must offer the continual-learning machinery.
///
/// Parameters live in one flat vector. The output head grows at task
/// boundaries by appending parameters at the end, so growing it never moves
/// or changes existing parameters and old-class logits stay bit-identical.
pub trait VideoClassifier: Clone + Send + Sync {
    /// Forward activations kept for the backward pass.
    type Trace;

    fn num_classes(&self) -> usize;
    fn feature_dim(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    fn forward_trace(&self, clip: &Clip) -> Self::Trace;
    fn trace_logits<'t>(&self, trace: &'t Self::Trace) -> &'t [f64];
    fn trace_features<'t>(&self, trace: &'t Self::Trace) -> &'t [f64];
    /// Adds `∂L/∂θ` to `grad` given `∂L/∂logits`.
    fn backward(&self, trace: &Self::Trace, dlogits: &[f64], grad: &mut [f64]);

    /// Appends `count` output classes, initialized from `seed`.
    fn expand_head(&mut self, count: usize, seed: u64);

    fn num_params(&self) -> usize {
        self.params().len()
    }

    fn forward(&self, clip: &Clip) -> Vec<f64> {
        self.trace_logits(&self.forward_trace(clip)).to_vec()
    }

    fn features(&self, clip: &Clip) -> Vec<f64> {
        self.trace_features(&self.forward_trace(clip)).to_vec()
    }

    /// Evaluates `loss(logits) -> (value, ∂value/∂logits)` on `clip` and adds
    /// `scale · ∂value/∂θ` to `grad`. Returns the unscaled value.
    fn accumulate_gradient<F>(&self, clip: &Clip, scale: f64, grad: &mut [f64], loss: F) -> f64
    where
        F: FnOnce(&[f64]) -> (f64, Vec<f64>),
    {
        let trace = self.forward_trace(clip);
        let (value, mut dlogits) = loss(self.trace_logits(&trace));
        if scale != 1.0 {
            for d in &mut dlogits {
                *d *= scale;
            }
        }
        self.backward(&trace, &dlogits, grad);
        value
    }
}

/// Scales `v` to unit Euclidean length; the zero vector is left unchanged.
pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v {
            *x /= norm;
        }
    }
}
