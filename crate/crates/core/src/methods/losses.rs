//! Scalar losses over logit vectors, each returning `(value, ∂value/∂logits)`.

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Softmax cross-entropy of `label`.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let loss = log_sum_exp(logits) - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    (loss, grad)
}

/// Summed binary cross-entropy of sigmoid outputs against soft `targets`.
/// Logits beyond `targets.len()` are untouched.
pub fn binary_cross_entropy(logits: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for (i, (&z, &t)) in logits.iter().zip(targets).enumerate() {
        // log(1 + e^z) - t z, stable for large |z|
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - t * z;
        grad[i] = sigmoid(z) - t;
    }
    (loss, grad)
}
