use super::layers::softmax_rows;
use super::tensor::{Real, Tensor};
use super::NnError;

const LOG_CLAMP: f64 = 1e-12;

/// `−Σ ŷ_j log x_j`, with `x_j` clamped below at 1e-12.
pub fn smoothed_cross_entropy<S: Real>(probs: &[S], label: &[f64]) -> f64 {
    probs.iter().zip(label).map(|(p, y)| -y * p.as_f64().max(LOG_CLAMP).ln()).sum()
}

/// Loss and logit gradient of one softmax head over a batch.
#[derive(Debug, Clone)]
pub struct HeadLoss<S: Real> {
    /// Batch-mean cross-entropy.
    pub loss: f64,
    pub probs: Tensor<S>,
    /// `∂loss/∂logits = (softmax − ŷ) / B` (labels sum to one).
    pub grad: Tensor<S>,
}

/// Fused softmax + smoothed cross-entropy over `[B, K]` logits; `labels`
/// holds one distribution per batch item.
pub fn softmax_cross_entropy<S: Real>(logits: &Tensor<S>, labels: &[&[f64]]) -> Result<HeadLoss<S>, NnError> {
    let (b, k) = (logits.batch(), logits.item_len());
    if labels.len() != b || labels.iter().any(|l| l.len() != k) {
        return Err(NnError::ShapeMismatch {
            layer: "softmax_cross_entropy".into(),
            expected: format!("{b} labels of length {k}"),
            got: labels.iter().map(|l| l.len()).collect(),
        });
    }
    let probs = softmax_rows(logits);
    let inv_b = 1.0 / b as f64;
    let mut grad = Tensor::zeros(logits.shape());
    let mut loss = 0.0;
    for (i, label) in labels.iter().enumerate() {
        loss += smoothed_cross_entropy(probs.item(i), label);
        let mass: f64 = label.iter().sum();
        for ((g, p), y) in grad.item_mut(i).iter_mut().zip(probs.item(i)).zip(label.iter()) {
            *g = S::lit((p.as_f64() * mass - y) * inv_b);
        }
    }
    Ok(HeadLoss { loss: loss * inv_b, probs, grad })
}

/// Combines per-parameter losses: the plain mean, or `Σ w_i L_i / Σ w_i`
/// when weights are given.
pub fn total_loss(losses: &[f64], weights: Option<&[f64]>) -> Result<f64, NnError> {
    match weights {
        None => Ok(losses.iter().sum::<f64>() / losses.len() as f64),
        Some(w) => {
            if w.len() != losses.len() {
                return Err(NnError::InvalidSpec(format!("{} loss weights for {} losses", w.len(), losses.len())));
            }
            if let Some((index, &value)) = w.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
                return Err(NnError::NegativeWeight { index, value });
            }
            let sum: f64 = w.iter().sum();
            if sum <= 0.0 {
                return Err(NnError::InvalidSpec("loss weights sum to zero".into()));
            }
            Ok(w.iter().zip(losses).map(|(w, l)| w * l).sum::<f64>() / sum)
        }
    }
}
