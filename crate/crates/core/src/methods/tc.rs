//! Temporal-consistency loss: the same classifier is trained on a clip and on
//! its temporally down-sampled version,
//! `L = (1 − λ)·L_cls(F(X), Y) + λ·L_cls(F(Xᵈ), Y)`.

use serde::{Deserialize, Serialize};

use super::losses::cross_entropy;
use crate::error::{Error, Result};
use crate::memory::uniform_subsample;
use crate::model::{Clip, VideoClassifier};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcConfig {
    pub lambda: f64,
    pub downsample_k: usize,
}

impl TcConfig {
    pub fn new(lambda: f64, downsample_k: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidArgument(format!("consistency factor {lambda} outside [0, 1]")));
        }
        if downsample_k == 0 {
            return Err(Error::InvalidArgument("downsample_k must be positive".into()));
        }
        Ok(Self { lambda, downsample_k })
    }

    /// The down-sampled companion of `clip`, or `None` when the clip is
    /// already no longer than `downsample_k` frames.
    pub fn downsample(&self, clip: &Clip) -> Option<Clip> {
        (clip.frames > self.downsample_k)
            .then(|| clip.select(&uniform_subsample(clip.frames, self.downsample_k)))
    }
}

/// Cross-entropy form of the loss, evaluated without gradients.
pub fn tc_loss<M: VideoClassifier>(
    model: &M,
    clip_full: &Clip,
    clip_down: &Clip,
    label: usize,
    lambda: f64,
) -> Result<f64> {
    check(model, label, lambda)?;
    let full = cross_entropy(&model.forward(clip_full), label).0;
    let down = cross_entropy(&model.forward(clip_down), label).0;
    Ok((1.0 - lambda) * full + lambda * down)
}

/// Adds `scale · ∂L/∂θ` for the cross-entropy form and returns `L`.
pub fn tc_gradient<M: VideoClassifier>(
    model: &M,
    clip_full: &Clip,
    clip_down: &Clip,
    label: usize,
    lambda: f64,
    scale: f64,
    grad: &mut [f64],
) -> Result<f64> {
    check(model, label, lambda)?;
    Ok(accumulate_consistency(model, clip_full, Some(clip_down), lambda, scale, grad, |_, z| {
        cross_entropy(z, label)
    }))
}

/// Generic form: `loss(clip, logits)` is the per-clip objective, so methods
/// whose loss depends on the input (distillation targets, say) can plug in.
/// Without a down-sampled clip the plain loss on `clip_full` is used. Terms
/// with zero weight are skipped entirely.
pub fn accumulate_consistency<M, F>(
    model: &M,
    clip_full: &Clip,
    clip_down: Option<&Clip>,
    lambda: f64,
    scale: f64,
    grad: &mut [f64],
    mut loss: F,
) -> f64
where
    M: VideoClassifier,
    F: FnMut(&Clip, &[f64]) -> (f64, Vec<f64>),
{
    let Some(down) = clip_down else {
        return model.accumulate_gradient(clip_full, scale, grad, |z| loss(clip_full, z));
    };
    let mut total = 0.0;
    if lambda < 1.0 {
        let w = 1.0 - lambda;
        total += w * model.accumulate_gradient(clip_full, scale * w, grad, |z| loss(clip_full, z));
    }
    if lambda > 0.0 {
        total += lambda * model.accumulate_gradient(down, scale * lambda, grad, |z| loss(down, z));
    }
    total
}

fn check<M: VideoClassifier>(model: &M, label: usize, lambda: f64) -> Result<()> {
    if label >= model.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "label {label} outside a {}-class head",
            model.num_classes()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("consistency factor {lambda} outside [0, 1]")));
    }
    Ok(())
}
