//! Parameter-importance regularization (EWC and MAS).
//!
//! Importance checkpoints are little-endian binary blobs:
//! magic `b"VCIS"`, `u32` version, `u64` parameter count `n`, `n` × `f64`
//! omega, `n` × `f64` anchor, `f64` lambda_reg.

use std::path::Path;

use super::losses::cross_entropy;
use crate::error::{Error, Result};
use crate::model::{Clip, VideoClassifier};

const MAGIC: &[u8; 4] = b"VCIS";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceState {
    omega: Vec<f64>,
    anchor: Vec<f64>,
    lambda_reg: f64,
}

impl ImportanceState {
    pub fn new(omega: Vec<f64>, anchor: Vec<f64>, lambda_reg: f64) -> Result<Self> {
        if omega.len() != anchor.len() {
            return Err(Error::DimensionMismatch {
                expected: anchor.len(),
                actual: omega.len(),
            });
        }
        if omega.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::InvalidArgument("importance must be non-negative".into()));
        }
        if lambda_reg.is_nan() || lambda_reg < 0.0 {
            return Err(Error::InvalidArgument("lambda_reg must be non-negative".into()));
        }
        Ok(Self {
            omega,
            anchor,
            lambda_reg,
        })
    }

    /// No importance yet; the anchor is `params`.
    pub fn empty(params: &[f64], lambda_reg: f64) -> Self {
        Self {
            omega: vec![0.0; params.len()],
            anchor: params.to_vec(),
            lambda_reg,
        }
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn lambda_reg(&self) -> f64 {
        self.lambda_reg
    }

    fn check(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.omega.len() {
            return Err(Error::DimensionMismatch {
                expected: self.omega.len(),
                actual: params.len(),
            });
        }
        Ok(())
    }

    /// `lambda_reg · Σ ω_i (θ_i − θ*_i)²`
    pub fn penalty(&self, params: &[f64]) -> Result<f64> {
        self.check(params)?;
        let sum: f64 = self
            .omega
            .iter()
            .zip(&self.anchor)
            .zip(params)
            .map(|((w, a), p)| w * (p - a) * (p - a))
            .sum();
        Ok(self.lambda_reg * sum)
    }

    /// Adds the penalty gradient to `grad` and returns the penalty.
    pub fn add_penalty_gradient(&self, params: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check(params)?;
        self.check(grad)?;
        for (((g, w), a), p) in grad.iter_mut().zip(&self.omega).zip(&self.anchor).zip(params) {
            *g += 2.0 * self.lambda_reg * w * (p - a);
        }
        self.penalty(params)
    }

    /// Extends the state to a grown model: new parameters get zero importance
    /// and anchor at their current value.
    pub fn grow_to(&mut self, params: &[f64]) {
        let old = self.omega.len();
        if params.len() > old {
            self.omega.resize(params.len(), 0.0);
            self.anchor.extend_from_slice(&params[old..]);
        }
    }

    /// End-of-task update: importances add up across tasks, the anchor moves
    /// to the current parameters.
    pub fn consolidate(&mut self, task_omega: &[f64], params: &[f64]) -> Result<()> {
        self.grow_to(params);
        self.check(params)?;
        self.check(task_omega)?;
        for (w, t) in self.omega.iter_mut().zip(task_omega) {
            *w += t;
        }
        self.anchor.copy_from_slice(params);
        Ok(())
    }

    /// Importance-weighted RMS displacement from the anchor,
    /// `sqrt(Σ ω δ² / Σ ω)`. Zero when no parameter carries importance.
    pub fn weighted_distance(&self, params: &[f64]) -> Result<f64> {
        self.check(params)?;
        let total: f64 = self.omega.iter().sum();
        if total == 0.0 {
            return Ok(0.0);
        }
        let s: f64 = self
            .omega
            .iter()
            .zip(&self.anchor)
            .zip(params)
            .map(|((w, a), p)| w * (p - a) * (p - a))
            .sum();
        Ok((s / total).sqrt())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.omega.len();
        let mut out = Vec::with_capacity(24 + 16 * n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        for v in self.omega.iter().chain(&self.anchor) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.lambda_reg.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err("not an importance checkpoint".into());
        }
        if u32::from_le_bytes(bytes[4..8].try_into().unwrap()) != VERSION {
            return Err("unsupported importance checkpoint version".into());
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let expected = n
            .checked_mul(16)
            .and_then(|b| b.checked_add(24))
            .ok_or("parameter count overflows")?;
        if bytes.len() != expected {
            return Err(format!("expected {expected} bytes, found {}", bytes.len()));
        }
        let f = |i: usize| f64::from_le_bytes(bytes[16 + 8 * i..24 + 8 * i].try_into().unwrap());
        let omega = (0..n).map(f).collect();
        let anchor = (n..2 * n).map(f).collect();
        let lambda_reg = f(2 * n);
        Self::new(omega, anchor, lambda_reg).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|message| Error::Corrupt {
            path: path.to_path_buf(),
            message,
        })
    }
}

/// Free-function form of [`ImportanceState::penalty`].
pub fn regularization_penalty(state: &ImportanceState, params: &[f64]) -> Result<f64> {
    state.penalty(params)
}

/// Diagonal empirical Fisher information: the mean over samples of the squared
/// gradient of the ground-truth log-likelihood.
pub fn ewc_importance<M, I>(model: &M, data: I) -> Result<Vec<f64>>
where
    M: VideoClassifier,
    I: IntoIterator<Item = (Clip, usize)>,
{
    let mut omega = vec![0.0; model.num_params()];
    let mut grad = vec![0.0; model.num_params()];
    let mut count = 0usize;
    for (clip, label) in data {
        if label >= model.num_classes() {
            return Err(Error::InvalidArgument(format!(
                "label {label} outside a {}-class head",
                model.num_classes()
            )));
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        model.accumulate_gradient(&clip, 1.0, &mut grad, |z| cross_entropy(z, label));
        for (w, g) in omega.iter_mut().zip(&grad) {
            *w += g * g;
        }
        count += 1;
    }
    finish_mean(omega, count)
}

/// Output sensitivity: the mean over samples of `|∂‖logits‖² / ∂θ|`.
/// Labels are not used.
pub fn mas_importance<M, I>(model: &M, data: I) -> Result<Vec<f64>>
where
    M: VideoClassifier,
    I: IntoIterator<Item = Clip>,
{
    let mut omega = vec![0.0; model.num_params()];
    let mut grad = vec![0.0; model.num_params()];
    let mut count = 0usize;
    for clip in data {
        grad.iter_mut().for_each(|g| *g = 0.0);
        model.accumulate_gradient(&clip, 1.0, &mut grad, |z| {
            (z.iter().map(|v| v * v).sum(), z.iter().map(|v| 2.0 * v).collect())
        });
        for (w, g) in omega.iter_mut().zip(&grad) {
            *w += g.abs();
        }
        count += 1;
    }
    finish_mean(omega, count)
}

fn finish_mean(mut omega: Vec<f64>, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::Empty("importance estimation needs at least one sample".into()));
    }
    for w in &mut omega {
        *w /= count as f64;
    }
    Ok(omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn penalty_hand_values() {
        let s = ImportanceState::new(vec![1.0], vec![0.0], 3.0).unwrap();
        assert_eq!(s.penalty(&[2.0]).unwrap(), 12.0);
        assert_eq!(s.penalty(&[0.0]).unwrap(), 0.0);
        let doubled = ImportanceState::new(vec![1.0], vec![0.0], 6.0).unwrap();
        assert_eq!(doubled.penalty(&[2.0]).unwrap(), 24.0);
        assert!(s.penalty(&[1.0, 2.0]).is_err());
        assert!(ImportanceState::new(vec![-1.0], vec![0.0], 1.0).is_err());
    }

    #[test]
    fn grow_and_consolidate() {
        let mut s = ImportanceState::new(vec![1.0, 2.0], vec![0.5, 0.5], 1.0).unwrap();
        s.grow_to(&[0.0, 0.0, 7.0]);
        assert_eq!(s.omega(), &[1.0, 2.0, 0.0]);
        assert_eq!(s.anchor(), &[0.5, 0.5, 7.0]);
        s.consolidate(&[1.0, 1.0, 1.0], &[3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.omega(), &[2.0, 3.0, 1.0]);
        assert_eq!(s.anchor(), &[3.0, 4.0, 5.0]);
        assert_eq!(s.penalty(&[3.0, 4.0, 5.0]).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn checkpoint_round_trip(
            values in prop::collection::vec((0.0f64..1e6, -1e3f64..1e3), 0..64),
            lambda in 0.0f64..1e9,
        ) {
            let (omega, anchor): (Vec<_>, Vec<_>) = values.into_iter().unzip();
            let s = ImportanceState::new(omega, anchor, lambda).unwrap();
            prop_assert_eq!(ImportanceState::from_bytes(&s.to_bytes()).unwrap(), s);
        }

        #[test]
        fn penalty_gradient_matches_finite_differences(
            values in prop::collection::vec((0.0f64..5.0, -2.0f64..2.0, -2.0f64..2.0), 1..16),
            lambda in 0.1f64..10.0,
        ) {
            let omega: Vec<f64> = values.iter().map(|v| v.0).collect();
            let anchor: Vec<f64> = values.iter().map(|v| v.1).collect();
            let params: Vec<f64> = values.iter().map(|v| v.2).collect();
            let s = ImportanceState::new(omega, anchor, lambda).unwrap();
            let mut grad = vec![0.0; params.len()];
            s.add_penalty_gradient(&params, &mut grad).unwrap();
            for i in 0..params.len() {
                let eps = 1e-5;
                let mut p = params.clone();
                p[i] += eps;
                let up = s.penalty(&p).unwrap();
                p[i] -= 2.0 * eps;
                let down = s.penalty(&p).unwrap();
                let fd = (up - down) / (2.0 * eps);
                prop_assert!((fd - grad[i]).abs() <= 1e-4 * fd.abs().max(1.0));
            }
        }
    }
}
