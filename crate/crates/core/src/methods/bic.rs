//! Bias correction: a two-parameter affine rescaling of the newest classes'
//! logits, fit on held-out data after the main training stage.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::losses::{cross_entropy, log_sum_exp, softmax};
use crate::error::{Error, Result};
use crate::model::{Clip, VideoClassifier};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasCorrectionLayer {
    pub alpha: f64,
    pub beta: f64,
    /// Logit positions the correction applies to.
    pub new_classes: BTreeSet<usize>,
}

impl BiasCorrectionLayer {
    pub fn identity(new_classes: BTreeSet<usize>) -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            new_classes,
        }
    }

    pub fn apply(&self, logits: &[f64]) -> Vec<f64> {
        logits
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                if self.new_classes.contains(&i) {
                    self.alpha * z + self.beta
                } else {
                    z
                }
            })
            .collect()
    }
}

pub fn apply_bias_correction(layer: &BiasCorrectionLayer, logits: &[f64]) -> Vec<f64> {
    layer.apply(logits)
}

/// Mean cross-entropy of the corrected logits over `samples`.
pub fn corrected_loss(layer: &BiasCorrectionLayer, samples: &[(Vec<f64>, usize)]) -> f64 {
    let sum: f64 = samples
        .iter()
        .map(|(z, y)| cross_entropy(&layer.apply(z), *y).0)
        .sum();
    sum / samples.len() as f64
}

/// Fits `(alpha, beta)` on frozen logits by Newton's method with backtracking.
/// The objective is convex in `(alpha, beta)`.
pub fn fit_bias_correction(
    samples: &[(Vec<f64>, usize)],
    new_classes: &BTreeSet<usize>,
) -> Result<BiasCorrectionLayer> {
    let has_new = samples.iter().any(|(_, y)| new_classes.contains(y));
    let has_old = samples.iter().any(|(_, y)| !new_classes.contains(y));
    if !has_new || !has_old {
        return Err(Error::InvalidArgument(
            "bias correction needs held-out samples of both old and new classes".into(),
        ));
    }
    let mut layer = BiasCorrectionLayer::identity(new_classes.clone());
    let n = samples.len() as f64;
    let mut loss = corrected_loss(&layer, samples);
    for _ in 0..100 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (z, y) in samples {
            let p = softmax(&layer.apply(z));
            let (mut pz, mut pzz, mut ps) = (0.0, 0.0, 0.0);
            for &j in new_classes {
                let zj = z[j];
                let target = if j == *y { 1.0 } else { 0.0 };
                ga += (p[j] - target) * zj;
                gb += p[j] - target;
                pz += p[j] * zj;
                pzz += p[j] * zj * zj;
                ps += p[j];
            }
            haa += pzz - pz * pz;
            hab += pz - pz * ps;
            hbb += ps - ps * ps;
        }
        let (ga, gb) = (ga / n, gb / n);
        if ga.hypot(gb) < 1e-12 {
            break;
        }
        let (haa, hab, hbb) = (haa / n + 1e-12, hab / n, hbb / n + 1e-12);
        let det = haa * hbb - hab * hab;
        let (da, db) = if det > 1e-18 {
            ((hbb * ga - hab * gb) / det, (haa * gb - hab * ga) / det)
        } else {
            (ga, gb)
        };
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-10 {
            let trial = BiasCorrectionLayer {
                alpha: layer.alpha - step * da,
                beta: layer.beta - step * db,
                new_classes: layer.new_classes.clone(),
            };
            let l = corrected_loss(&trial, samples);
            if l <= loss - 1e-4 * step * (ga * da + gb * db) {
                layer = trial;
                loss = l;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(layer)
}

/// Runs the frozen model over `heldout` and fits the correction layer.
pub fn bic_fit<M, I>(model: &M, heldout: I, new_classes: &BTreeSet<usize>) -> Result<BiasCorrectionLayer>
where
    M: VideoClassifier,
    I: IntoIterator<Item = (Clip, usize)>,
{
    let samples: Vec<(Vec<f64>, usize)> = heldout
        .into_iter()
        .map(|(clip, y)| (model.forward(&clip), y))
        .collect();
    fit_bias_correction(&samples, new_classes)
}

/// Softened-softmax distillation over the first `old_logits.len()` slots,
/// `−Σ softmax(old/T) · log softmax(z/T)`. Remaining slots get zero gradient.
pub fn kd_loss(logits: &[f64], old_logits: &[f64], temperature: f64) -> (f64, Vec<f64>) {
    let k = old_logits.len();
    let mut grad = vec![0.0; logits.len()];
    if k == 0 {
        return (0.0, grad);
    }
    let zt: Vec<f64> = logits[..k].iter().map(|z| z / temperature).collect();
    let ot: Vec<f64> = old_logits.iter().map(|z| z / temperature).collect();
    let target = softmax(&ot);
    let lse = log_sum_exp(&zt);
    let p = softmax(&zt);
    let mut loss = 0.0;
    for j in 0..k {
        loss -= target[j] * (zt[j] - lse);
        grad[j] = (p[j] - target[j]) / temperature;
    }
    (loss, grad)
}

/// Main-stage objective: `λ·KD + (1 − λ)·CE` with `λ = n_old / (n_old + n_new)`
/// supplied by the caller.
pub fn bic_main_loss(
    logits: &[f64],
    old_logits: Option<&[f64]>,
    label: usize,
    lambda_kd: f64,
    temperature: f64,
) -> (f64, Vec<f64>) {
    let (ce, ce_grad) = cross_entropy(logits, label);
    let Some(old) = old_logits else {
        return (ce, ce_grad);
    };
    let (kd, kd_grad) = kd_loss(logits, old, temperature);
    let grad = ce_grad
        .iter()
        .zip(&kd_grad)
        .map(|(c, d)| (1.0 - lambda_kd) * c + lambda_kd * d)
        .collect();
    ((1.0 - lambda_kd) * ce + lambda_kd * kd, grad)
}
