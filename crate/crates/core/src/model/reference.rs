//! Segment-consensus reference network.
//!
//! Each pair of consecutive sampled frames becomes a two-channel step input
//! (the frame and its difference to the next sampled frame). A shared
//! two-layer strided convolutional encoder with spatial average pooling maps
//! every step to a feature vector; the video feature is the mean over steps
//! and a linear head produces class scores. A clip of `T` frames yields
//! `max(T − 1, 1)` steps.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Clip, VideoClassifier};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceNetConfig {
    pub height: usize,
    pub width: usize,
    #[serde(default = "default_conv1")]
    pub conv1_channels: usize,
    #[serde(default = "default_conv2")]
    pub conv2_channels: usize,
}

fn default_conv1() -> usize {
    8
}
fn default_conv2() -> usize {
    24
}

impl ReferenceNetConfig {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            conv1_channels: default_conv1(),
            conv2_channels: default_conv2(),
        }
    }
}

const IN_CHANNELS: usize = 2;
const K: usize = 3;

fn strided(n: usize) -> usize {
    n.div_ceil(2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceNet {
    config: ReferenceNetConfig,
    num_classes: usize,
    params: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    head: usize,
}

/// Activations of one forward pass.
#[derive(Clone, Debug)]
pub struct ReferenceTrace {
    inputs: Vec<Vec<f64>>,
    act1: Vec<Vec<f64>>,
    act2: Vec<Vec<f64>>,
    features: Vec<f64>,
    logits: Vec<f64>,
}

impl ReferenceNet {
    pub fn new(config: ReferenceNetConfig, num_classes: usize, seed_value: u64) -> Self {
        let mut net = Self {
            config,
            num_classes: 0,
            params: Vec::new(),
        };
        let layout = net.layout();
        let mut rng = seed::rng_for(seed_value, &[0xBAC0]);
        let c1 = config.conv1_channels;
        let c2 = config.conv2_channels;
        let n1 = Normal::new(0.0, (2.0 / (IN_CHANNELS * K * K) as f64).sqrt()).unwrap();
        let n2 = Normal::new(0.0, (2.0 / (c1 * K * K) as f64).sqrt()).unwrap();
        net.params = vec![0.0; layout.head];
        for p in &mut net.params[layout.w1..layout.b1] {
            *p = n1.sample(&mut rng);
        }
        for p in &mut net.params[layout.b1..layout.w2] {
            *p = 0.01;
        }
        for p in &mut net.params[layout.w2..layout.b2] {
            *p = n2.sample(&mut rng);
        }
        for p in &mut net.params[layout.b2..layout.b2 + c2] {
            *p = 0.01;
        }
        net.expand_head(num_classes, seed::derive(seed_value, &[0x4EAD]));
        net
    }

    pub fn config(&self) -> &ReferenceNetConfig {
        &self.config
    }

    /// Rebuilds a network from a saved parameter vector.
    pub fn from_params(config: ReferenceNetConfig, num_classes: usize, params: Vec<f64>) -> Option<Self> {
        let net = Self {
            config,
            num_classes,
            params,
        };
        (net.params.len() == net.layout().head + num_classes * (config.conv2_channels + 1)).then_some(net)
    }

    fn layout(&self) -> Layout {
        let c1 = self.config.conv1_channels;
        let c2 = self.config.conv2_channels;
        let w1 = 0;
        let b1 = w1 + c1 * IN_CHANNELS * K * K;
        let w2 = b1 + c1;
        let b2 = w2 + c2 * c1 * K * K;
        let head = b2 + c2;
        Layout { w1, b1, w2, b2, head }
    }

    fn dims(&self) -> (usize, usize, usize, usize) {
        let h1 = strided(self.config.height);
        let w1 = strided(self.config.width);
        (h1, w1, strided(h1), strided(w1))
    }

    fn step_inputs(&self, clip: &Clip) -> Vec<Vec<f64>> {
        assert_eq!(
            (clip.height, clip.width),
            (self.config.height, self.config.width),
            "clip size does not match the network"
        );
        assert!(clip.frames >= 1, "empty clip");
        let n = clip.frame_len();
        let steps = clip.frames.saturating_sub(1).max(1);
        (0..steps)
            .map(|s| {
                let cur = clip.frame(s);
                let mut input = Vec::with_capacity(IN_CHANNELS * n);
                input.extend_from_slice(cur);
                if clip.frames > 1 {
                    let next = clip.frame(s + 1);
                    input.extend(next.iter().zip(cur).map(|(b, a)| b - a));
                } else {
                    input.extend(std::iter::repeat_n(0.0, n));
                }
                input
            })
            .collect()
    }
}

/// 3×3, stride 2, zero padding 1 convolution followed by ReLU.
#[allow(clippy::too_many_arguments)]
fn conv_relu(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    bias: &[f64],
    cout: usize,
    ho: usize,
    wo: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; cout * ho * wo];
    for co in 0..cout {
        let plane = &mut out[co * ho * wo..(co + 1) * ho * wo];
        plane.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..cin {
            let src = &input[ci * h * w..(ci + 1) * h * w];
            let kern = &weights[(co * cin + ci) * K * K..(co * cin + ci + 1) * K * K];
            for oy in 0..ho {
                for ky in 0..K {
                    let iy = (2 * oy + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let row = &src[iy as usize * w..(iy as usize + 1) * w];
                    let orow = &mut plane[oy * wo..(oy + 1) * wo];
                    for kx in 0..K {
                        let wv = kern[ky * K + kx];
                        for (ox, o) in orow.iter_mut().enumerate() {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix >= 0 && ix < w as isize {
                                *o += wv * row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    for v in &mut out {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Backward of `conv_relu` given `dout` already masked by the ReLU.
/// Accumulates weight and bias gradients; fills `din` when provided.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    dout: &[f64],
    cout: usize,
    ho: usize,
    wo: usize,
    dweights: &mut [f64],
    dbias: &mut [f64],
    mut din: Option<&mut [f64]>,
) {
    for co in 0..cout {
        let dplane = &dout[co * ho * wo..(co + 1) * ho * wo];
        let sum: f64 = dplane.iter().sum();
        if sum == 0.0 && dplane.iter().all(|&d| d == 0.0) {
            continue;
        }
        dbias[co] += sum;
        for ci in 0..cin {
            let src = &input[ci * h * w..(ci + 1) * h * w];
            let kidx = (co * cin + ci) * K * K;
            for oy in 0..ho {
                let drow = &dplane[oy * wo..(oy + 1) * wo];
                for ky in 0..K {
                    let iy = (2 * oy + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    let row = &src[iy * w..(iy + 1) * w];
                    for kx in 0..K {
                        let mut acc = 0.0;
                        let wv = weights[kidx + ky * K + kx];
                        for (ox, &d) in drow.iter().enumerate() {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix >= 0 && ix < w as isize {
                                acc += d * row[ix as usize];
                                if let Some(din) = din.as_deref_mut() {
                                    din[ci * h * w + iy * w + ix as usize] += wv * d;
                                }
                            }
                        }
                        dweights[kidx + ky * K + kx] += acc;
                    }
                }
            }
        }
    }
}

impl VideoClassifier for ReferenceNet {
    type Trace = ReferenceTrace;

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn feature_dim(&self) -> usize {
        self.config.conv2_channels
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward_trace(&self, clip: &Clip) -> ReferenceTrace {
        let l = self.layout();
        let (h, w) = (self.config.height, self.config.width);
        let (h1, w1, h2, w2) = self.dims();
        let c1 = self.config.conv1_channels;
        let c2 = self.config.conv2_channels;
        let inputs = self.step_inputs(clip);
        let steps = inputs.len();
        let mut act1 = Vec::with_capacity(steps);
        let mut act2 = Vec::with_capacity(steps);
        let mut features = vec![0.0; c2];
        let pool_scale = 1.0 / (steps * h2 * w2) as f64;
        for input in &inputs {
            let a1 = conv_relu(
                input,
                IN_CHANNELS,
                h,
                w,
                &self.params[l.w1..l.b1],
                &self.params[l.b1..l.w2],
                c1,
                h1,
                w1,
            );
            let a2 = conv_relu(
                &a1,
                c1,
                h1,
                w1,
                &self.params[l.w2..l.b2],
                &self.params[l.b2..l.head],
                c2,
                h2,
                w2,
            );
            for (c, f) in features.iter_mut().enumerate() {
                *f += a2[c * h2 * w2..(c + 1) * h2 * w2].iter().sum::<f64>() * pool_scale;
            }
            act1.push(a1);
            act2.push(a2);
        }
        let stride = c2 + 1;
        let logits = (0..self.num_classes)
            .map(|k| {
                let row = &self.params[l.head + k * stride..l.head + (k + 1) * stride];
                row[c2] + row[..c2].iter().zip(&features).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        ReferenceTrace {
            inputs,
            act1,
            act2,
            features,
            logits,
        }
    }

    fn trace_logits<'t>(&self, trace: &'t ReferenceTrace) -> &'t [f64] {
        &trace.logits
    }

    fn trace_features<'t>(&self, trace: &'t ReferenceTrace) -> &'t [f64] {
        &trace.features
    }

    fn backward(&self, trace: &ReferenceTrace, dlogits: &[f64], grad: &mut [f64]) {
        assert_eq!(dlogits.len(), self.num_classes);
        assert_eq!(grad.len(), self.params.len());
        let l = self.layout();
        let (h, w) = (self.config.height, self.config.width);
        let (h1, w1, h2, w2) = self.dims();
        let c1 = self.config.conv1_channels;
        let c2 = self.config.conv2_channels;
        let stride = c2 + 1;

        let mut dfeat = vec![0.0; c2];
        for (k, &dl) in dlogits.iter().enumerate() {
            if dl == 0.0 {
                continue;
            }
            let base = l.head + k * stride;
            for d in 0..c2 {
                dfeat[d] += dl * self.params[base + d];
                grad[base + d] += dl * trace.features[d];
            }
            grad[base + c2] += dl;
        }
        if dfeat.iter().all(|&d| d == 0.0) {
            return;
        }

        let steps = trace.inputs.len();
        let pool_scale = 1.0 / (steps * h2 * w2) as f64;
        let (pre, rest) = grad.split_at_mut(l.w2);
        let (gw1, gb1) = pre[l.w1..].split_at_mut(l.b1 - l.w1);
        let (gw2, rest) = rest.split_at_mut(l.b2 - l.w2);
        let gb2 = &mut rest[..c2];
        for s in 0..steps {
            let a1 = &trace.act1[s];
            let a2 = &trace.act2[s];
            let mut da2 = vec![0.0; c2 * h2 * w2];
            for c in 0..c2 {
                let g = dfeat[c] * pool_scale;
                for p in 0..h2 * w2 {
                    if a2[c * h2 * w2 + p] > 0.0 {
                        da2[c * h2 * w2 + p] = g;
                    }
                }
            }
            let mut da1 = vec![0.0; c1 * h1 * w1];
            conv_backward(
                a1,
                c1,
                h1,
                w1,
                &self.params[l.w2..l.b2],
                &da2,
                c2,
                h2,
                w2,
                gw2,
                gb2,
                Some(&mut da1),
            );
            for (d, &a) in da1.iter_mut().zip(a1) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            conv_backward(
                &trace.inputs[s],
                IN_CHANNELS,
                h,
                w,
                &self.params[l.w1..l.b1],
                &da1,
                c1,
                h1,
                w1,
                gw1,
                gb1,
                None,
            );
        }
    }

    fn expand_head(&mut self, count: usize, seed_value: u64) {
        let c2 = self.config.conv2_channels;
        let mut rng = seed::rng(seed_value);
        let normal = Normal::new(0.0, 0.01).unwrap();
        for _ in 0..count {
            for _ in 0..c2 {
                self.params.push(normal.sample(&mut rng));
            }
            self.params.push(0.0);
        }
        self.num_classes += count;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_clip(frames: usize, h: usize, w: usize, seed_value: u64) -> Clip {
        let mut rng = seed::rng(seed_value);
        Clip {
            frames,
            height: h,
            width: w,
            pixels: (0..frames * h * w).map(|_| rng.random_range(0.0..1.0)).collect(),
        }
    }

    #[test]
    fn small_parameter_count() {
        let net = ReferenceNet::new(ReferenceNetConfig::new(32, 32), 10, 0);
        assert!(net.num_params() <= 100_000, "{}", net.num_params());
        assert_eq!(net.feature_dim(), 24);
    }

    #[test]
    fn expansion_preserves_old_logits_exactly() {
        let mut net = ReferenceNet::new(ReferenceNetConfig::new(12, 12), 3, 5);
        let clip = random_clip(4, 12, 12, 1);
        let before = net.forward(&clip);
        net.expand_head(2, 77);
        let after = net.forward(&clip);
        assert_eq!(after.len(), 5);
        assert_eq!(&after[..3], before.as_slice());
        assert_eq!(net.features(&clip).len(), net.feature_dim());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let net = ReferenceNet::new(ReferenceNetConfig::new(10, 10), 4, 3);
        let clip = random_clip(5, 10, 10, 2);
        let weights = [0.3, -1.2, 0.7, 2.0];
        let objective = |n: &ReferenceNet| -> f64 {
            n.forward(&clip).iter().zip(&weights).map(|(z, w)| w * z * z).sum()
        };
        let mut grad = vec![0.0; net.num_params()];
        net.accumulate_gradient(&clip, 1.0, &mut grad, |z| {
            let v = z.iter().zip(&weights).map(|(z, w)| w * z * z).sum();
            (v, z.iter().zip(&weights).map(|(z, w)| 2.0 * w * z).collect())
        });
        let mut rng = seed::rng(9);
        let eps = 1e-6;
        for _ in 0..40 {
            let i = rng.random_range(0..net.num_params());
            let mut plus = net.clone();
            plus.params_mut()[i] += eps;
            let mut minus = net.clone();
            minus.params_mut()[i] -= eps;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * eps);
            let tol = 1e-4 * fd.abs().max(grad[i].abs()).max(1e-6);
            assert!((fd - grad[i]).abs() <= tol, "param {i}: fd {fd} vs analytic {}", grad[i]);
        }
    }

    #[test]
    fn single_frame_clip_uses_zero_difference() {
        let net = ReferenceNet::new(ReferenceNetConfig::new(8, 8), 2, 0);
        let clip = random_clip(1, 8, 8, 4);
        assert_eq!(net.forward(&clip).len(), 2);
    }

    #[test]
    fn from_params_checks_length() {
        let net = ReferenceNet::new(ReferenceNetConfig::new(8, 8), 2, 0);
        let cfg = *net.config();
        assert!(ReferenceNet::from_params(cfg, 2, net.params().to_vec()).is_some());
        assert!(ReferenceNet::from_params(cfg, 3, net.params().to_vec()).is_none());
    }
}
